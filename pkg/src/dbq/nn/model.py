"""Sequential model container, config-driven builders, checkpoint I/O."""

from __future__ import annotations

import numpy as np

from .layers import (AvgPool2d, BatchNorm, Conv2d, Dense, Flatten, ForwardCtx,
                     Layer, QuantizedConv2d, QuantizedDense, ReLU, ReLUX,
                     _QuantizedWeights)


class Sequential:
    def __init__(self, layers: list[Layer]):
        self.layers = layers

    def forward(self, x: np.ndarray, ctx: ForwardCtx) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, ctx)
        return x

    def backward(self, dout: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def epoch_start(self):
        for layer in self.layers:
            layer.epoch_start()

    def quantized_layers(self) -> list[_QuantizedWeights]:
        return [l for l in self.layers if isinstance(l, _QuantizedWeights)
                and l.quant_kind == "ternary"]

    def init_quantizers(self):
        for layer in self.quantized_layers():
            layer.init_quantizers()

    def project_quantizers(self):
        for layer in self.quantized_layers():
            layer.project()

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Flat name -> array map of every trainable and running state."""
        state = {}
        for i, layer in enumerate(self.layers):
            for p in layer.params():
                state[f"layer{i}.{p.name}"] = p.data
            if isinstance(layer, BatchNorm):
                state[f"layer{i}.running_mean"] = layer.running_mean
                state[f"layer{i}.running_var"] = layer.running_var
        return state

    def load_state_arrays(self, state: dict[str, np.ndarray],
                          strict: bool = True):
        from .layers import Param
        for i, layer in enumerate(self.layers):
            # materialize quantizer state saved by an initialized model
            if (isinstance(layer, _QuantizedWeights)
                    and layer.quant_kind == "ternary"
                    and not layer.quantizers_ready()
                    and f"layer{i}.q_alphas" in state):
                for name in ("q_alphas", "q_gamma1", "q_gamma2", "q_thresholds"):
                    setattr(layer, name, Param(
                        name, np.array(state[f"layer{i}.{name}"]), decay=False))
            for p in layer.params():
                key = f"layer{i}.{p.name}"
                if key in state:
                    p.data = np.array(state[key], dtype=np.float64)
                elif strict:
                    raise KeyError(f"checkpoint missing {key}")
            if isinstance(layer, BatchNorm):
                layer.running_mean = np.array(state[f"layer{i}.running_mean"])
                layer.running_var = np.array(state[f"layer{i}.running_var"])


def save_checkpoint(path, model: Sequential):
    np.savez(path, **model.state_arrays())


def load_checkpoint(path, model: Sequential, strict: bool = True):
    with np.load(path) as data:
        model.load_state_arrays(dict(data), strict=strict)


def _weight_precision(quantize_map: dict, key: str) -> str:
    return str(quantize_map.get(key, "fp32")).lower()


def build_mlp(in_dim: int, hidden: list[int], classes: int, seed: int,
              quantize_map: dict | None = None) -> Sequential:
    """Dense stack with ReLU; quantize_map keys: 'hidden', 'output'."""
    qm = quantize_map or {}
    rng = np.random.default_rng(seed)
    layers: list[Layer] = []
    prev = in_dim
    for width in hidden:
        wp = _weight_precision(qm, "hidden")
        layers.append(QuantizedDense(prev, width, rng, weight_precision=wp)
                      if wp != "fp32" else Dense(prev, width, rng))
        layers.append(ReLU())
        prev = width
    wp = _weight_precision(qm, "output")
    layers.append(QuantizedDense(prev, classes, rng, weight_precision=wp)
                  if wp != "fp32" else Dense(prev, classes, rng))
    return Sequential(layers)


def build_toy_cnn(in_channels: int, size: int, classes: int, seed: int,
                  channels: tuple[int, int] = (16, 32),
                  quantize_map: dict | None = None,
                  act_bits: int = 0) -> Sequential:
    """Two conv blocks (conv-BN-activation-pool) plus a classifier head.

    quantize_map keys: 'first', 'conv', 'output' with values fp32 / fixed:b /
    ternary:B. act_bits > 0 switches activations to clipped fixed-point
    (ReLU-x) fed by each block's batch norm.
    """
    qm = quantize_map or {}
    rng = np.random.default_rng(seed)
    c1, c2 = channels

    def conv(cin, cout, key):
        wp = _weight_precision(qm, key)
        if wp != "fp32":
            return QuantizedConv2d(cin, cout, 3, rng, padding=1, weight_precision=wp)
        return Conv2d(cin, cout, 3, rng, padding=1)

    def act(bn):
        return ReLUX(bits=act_bits, source_bn=bn) if act_bits else ReLU()

    bn1, bn2 = BatchNorm(c1), BatchNorm(c2)
    layers = [
        conv(in_channels, c1, "first"), bn1, act(bn1), AvgPool2d(2),
        conv(c1, c2, "conv"), bn2, act(bn2), AvgPool2d(2),
        Flatten(),
    ]
    feat = c2 * (size // 4) * (size // 4)
    wp = _weight_precision(qm, "output")
    layers.append(QuantizedDense(feat, classes, rng, weight_precision=wp)
                  if wp != "fp32" else Dense(feat, classes, rng))
    return Sequential(layers)


def build_model(spec: dict, seed: int) -> Sequential:
    """Build a model from a config dict: {"kind": "mlp"|"toy_cnn", ...}."""
    kind = spec.get("kind")
    qm = spec.get("quantize", {})
    if kind == "mlp":
        return build_mlp(int(spec["in_dim"]), [int(h) for h in spec.get("hidden", [32])],
                         int(spec["classes"]), seed, quantize_map=qm)
    if kind == "toy_cnn":
        return build_toy_cnn(int(spec.get("in_channels", 1)), int(spec.get("size", 8)),
                             int(spec["classes"]), seed,
                             channels=tuple(spec.get("channels", (16, 32))),
                             quantize_map=qm, act_bits=int(spec.get("act_bits", 0)))
    raise ValueError(f"unknown model kind {kind!r}")
