"""Training loops: full-precision SGD and quantization-in-the-loop fine-tuning.

Both loops are deterministic given the config seed (single-threaded numpy;
all shuffling comes from one generator). Metric rows are
(epoch, lr, T, train_loss, train_acc, eval_acc).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ..schedules import TrainSchedule, sgd_step
from .data import Dataset
from .layers import ForwardCtx, softmax_cross_entropy
from .model import Sequential


@dataclass
class TrainConfig:
    schedule: TrainSchedule
    batch_size: int = 64
    seed: int = 0
    project_alphas: bool = True
    quantize_map: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch size must be positive")


class SGD:
    """SGD with momentum; weight decay skips parameters flagged decay=False."""

    def __init__(self, params, momentum: float, weight_decay: float):
        self.params = list(params)
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad[...] = 0.0

    def step(self, lr: float):
        for i, p in enumerate(self.params):
            wd = self.weight_decay if p.decay else 0.0
            p.data, self.velocity[i] = sgd_step(p.data, p.grad, self.velocity[i],
                                                lr, self.momentum, wd)


def evaluate(model: Sequential, data: Dataset, temp: float | None = None,
             batch_size: int = 256) -> float:
    """Top-1 accuracy in eval mode. temp switches ternary layers to the
    smooth quantizer at that temperature instead of the exact one."""
    if len(data) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    ctx = ForwardCtx(train=False, temp=temp)
    correct = 0
    for start in range(0, len(data), batch_size):
        xb = data.x[start:start + batch_size]
        yb = data.y[start:start + batch_size]
        logits = model.forward(xb, ctx)
        correct += int(np.sum(np.argmax(logits, axis=1) == yb))
    return correct / len(data)


def _run_epochs(model, train_data, eval_data, config, quantized: bool):
    sched = config.schedule
    rng = np.random.default_rng(config.seed)
    opt = SGD(model.params(), sched.momentum, sched.weight_decay)
    log = []
    n = len(train_data)
    for epoch in range(sched.total_epochs):
        lr = sched.lr_at(epoch)
        temp = sched.temp_at(epoch) if quantized else None
        model.epoch_start()
        order = rng.permutation(n)
        losses, correct = [], 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            xb, yb = train_data.x[idx], train_data.y[idx]
            logits = model.forward(xb, ForwardCtx(train=True, temp=temp))
            loss, dlogits = softmax_cross_entropy(logits, yb)
            opt.zero_grad()
            model.backward(dlogits)
            opt.step(lr)
            if quantized and config.project_alphas:
                model.project_quantizers()
            losses.append(loss)
            correct += int(np.sum(np.argmax(logits, axis=1) == yb))
        eval_acc = evaluate(model, eval_data)
        log.append((epoch, lr, temp if temp is not None else 0.0,
                    float(np.mean(losses)), correct / n, eval_acc))
    return log


def train_fp(model: Sequential, train_data: Dataset, eval_data: Dataset,
             config: TrainConfig):
    """Full-precision training; returns the metric log."""
    if len(train_data) == 0:
        raise ValueError("training dataset is empty")
    return _run_epochs(model, train_data, eval_data, config, quantized=False)


def finetune_quantized(model: Sequential, train_data: Dataset, eval_data: Dataset,
                       config: TrainConfig):
    """Quantization-in-the-loop fine-tuning.

    Initializes every ternary layer's quantizers from the current (FP)
    weights, trains with the temperature schedule, then switches to the
    exact quantizer. Returns (metric_log, final_eval_accuracy).
    """
    if len(train_data) == 0:
        raise ValueError("training dataset is empty")
    for layer in model.quantized_layers():
        if not layer.quantizers_ready():
            layer.init_quantizers()
    sched = config.schedule
    if sched.total_epochs > 0:
        log = _run_epochs(model, train_data, eval_data, config, quantized=True)
    else:
        log = []
    return log, evaluate(model, eval_data)


def write_metrics_csv(path, log):
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["epoch", "lr", "T", "train_loss", "train_acc", "eval_acc"])
        for row in log:
            wr.writerow(row)
