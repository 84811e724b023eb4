"""Layers with explicit forward/backward passes, float64 end to end.

Each layer caches what its backward pass needs during forward; backward
consumes the cache, accumulates parameter gradients in place, and returns
the input gradient. Quantized layers keep full-precision master weights and
route their weight gradients through the analytical quantizer backward, so
gradients flow to the master copy and the quantizer parameters jointly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import actquant
from ..fit import init_quantizer
from ..grads import backward as quantizer_backward
from ..quantizer import (QuantizerParams,TernaryBranches, decompose,
                         forward_infer, forward_train, project_alphas,
                         reconstruct, thresholds_sorted)


@dataclass
class Param:
    name: str
    data: np.ndarray
    grad: np.ndarray = field(init=False)
    decay: bool = True

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        self.grad = np.zeros_like(self.data)


@dataclass
class ForwardCtx:
    """Per-pass state: train toggles BN statistics and caching; temp selects
    the smooth quantizer (None means exact inference quantizer)."""

    train: bool = False
    temp: float | None = None


class Layer:
    def params(self) -> list[Param]:
        return []

    def forward(self, x: np.ndarray, ctx: ForwardCtx) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def epoch_start(self):
        """Hook invoked by the trainer at the start of every epoch."""


class Dense(Layer):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        scale = np.sqrt(2.0 / in_features)
        self.weight = Param("weight", rng.normal(0.0, scale, (out_features, in_features)))
        self.bias = Param("bias", np.zeros(out_features))
        self._x = None

    def params(self):
        return [self.weight, self.bias]

    def _effective_weight(self, ctx: ForwardCtx) -> np.ndarray:
        return self.weight.data

    def forward(self, x, ctx):
        if x.ndim != 2 or x.shape[1] != self.weight.data.shape[1]:
            raise ValueError(f"dense layer expects (N, {self.weight.data.shape[1]}), "
                             f"got {x.shape}")
        w = self._effective_weight(ctx)
        self._x, self._w = x, w
        return x @ w.T + self.bias.data

    def backward(self, dout):
        if self._x is None:
            raise RuntimeError("backward called before forward")
        dw = dout.T @ self._x
        self._apply_weight_grad(dw)
        self.bias.grad += dout.sum(axis=0)
        return dout @ self._w

    def _apply_weight_grad(self, dw):
        self.weight.grad += dw


class Conv2d(Layer):
    """2-D convolution via im2col; weight shape (C_out, C_in, kh, kw)."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 rng: np.random.Generator, stride: int = 1, padding: int = 0):
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = Param("weight", rng.normal(
            0.0, np.sqrt(2.0 / fan_in),
            (out_channels, in_channels, kernel_size, kernel_size)))
        self.bias = Param("bias", np.zeros(out_channels))
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding
        self._cache = None

    def params(self):
        return [self.weight, self.bias]

    def _effective_weight(self, ctx: ForwardCtx) -> np.ndarray:
        return self.weight.data

    def forward(self, x, ctx):
        co, ci, kh, kw = self.weight.data.shape
        if x.ndim != 4 or x.shape[1] != ci:
            raise ValueError(f"conv layer expects (N, {ci}, H, W), got {x.shape}")
        w = self._effective_weight(ctx)
        cols, oh, ow = _im2col(x, kh, kw, self.stride, self.padding)
        out = np.einsum("od,ndp->nop", w.reshape(co, -1), cols)
        out += self.bias.data[None, :, None]
        self._cache = (x.shape, cols, w)
        return out.reshape(x.shape[0], co, oh, ow)

    def backward(self, dout):
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        xshape, cols, w = self._cache
        co, ci, kh, kw = self.weight.data.shape
        d2 = dout.reshape(dout.shape[0], co, -1)
        dw = np.einsum("nop,ndp->od", d2, cols).reshape(self.weight.data.shape)
        self._apply_weight_grad(dw)
        self.bias.grad += d2.sum(axis=(0, 2))
        dcols = np.einsum("od,nop->ndp", w.reshape(co, -1), d2)
        return _col2im(dcols, xshape, kh, kw, self.stride, self.padding)

    def _apply_weight_grad(self, dw):
        self.weight.grad += dw


def _im2col(x, kh, kw, stride, pad):
    n, c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    cols = np.empty((n, c, kh, kw, oh, ow))
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = x[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride]
    return cols.reshape(n, c * kh * kw, oh * ow), oh, ow


def _col2im(dcols, xshape, kh, kw, stride, pad):
    n, c, h, w = xshape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    dx = np.zeros((n, c, h + 2 * pad, w + 2 * pad))
    dcols = dcols.reshape(n, c, kh, kw, oh, ow)
    for i in range(kh):
        for j in range(kw):
            dx[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += dcols[:, :, i, j]
    return dx[:, :, pad:pad + h, pad:pad + w] if pad else dx


class _QuantizedWeights:
    """Mixin handling kernel-wise weight quantization for Dense/Conv2d.

    Weight precision is one of fp32 (pass-through), fixed:b (symmetric
    per-kernel fake quantization with a straight-through gradient) or
    ternary:B (smooth branch quantizer in train mode, exact in eval mode,
    analytical gradients to master weights and quantizer parameters).
    """

    def _init_quant(self, weight_precision: str):
        self.weight_precision = weight_precision
        self.quant_kind = "fp32"
        self.num_branches = 0
        self.fixed_bits = 0
        if weight_precision.startswith("ternary:"):
            self.quant_kind = "ternary"
            self.num_branches = int(weight_precision.split(":")[1])
        elif weight_precision.startswith("fixed:"):
            self.quant_kind = "fixed"
            self.fixed_bits = int(weight_precision.split(":")[1])
        elif weight_precision != "fp32":
            raise ValueError(f"unknown weight precision {weight_precision!r}")
        self.q_alphas = None
        self.q_gamma1 = None
        self.q_gamma2 = None
        self.q_thresholds = None
        self._quant_cache = None

    @property
    def kernel_count(self) -> int:
        return self.weight.data.shape[0]

    def _master_2d(self) -> np.ndarray:
        return self.weight.data.reshape(self.kernel_count, -1)

    def quantizers_ready(self) -> bool:
        return self.q_alphas is not None

    def init_quantizers(self):
        """Fit one quantizer per kernel from the current master weights."""
        if self.quant_kind != "ternary":
            raise RuntimeError("layer has no ternary quantizer to initialize")
        w2 = self._master_2d()
        k = self.kernel_count
        nb = self.num_branches
        ps = [init_quantizer(w2[i], nb) for i in range(k)]
        self.q_alphas = Param("q_alphas", np.stack([p.alphas for p in ps]), decay=False)
        self.q_gamma1 = Param("q_gamma1", np.array([p.gamma1 for p in ps]), decay=False)
        self.q_gamma2 = Param("q_gamma2", np.array([p.gamma2 for p in ps]), decay=False)
        self.q_thresholds = Param(
            "q_thresholds", np.stack([p.thresholds for p in ps]), decay=False)

    def kernel_quantizer(self, k: int) -> QuantizerParams:
        return QuantizerParams(self.q_alphas.data[k], float(self.q_gamma1.data[k]),
                               float(self.q_gamma2.data[k]), self.q_thresholds.data[k])

    def project(self):
        """Clamp branch scales back onto the ordering constraint."""
        if self.quantizers_ready():
            for k in range(self.kernel_count):
                self.q_alphas.data[k] = project_alphas(self.q_alphas.data[k])

    def threshold_violations(self) -> int:
        if not self.quantizers_ready():
            return 0
        return sum(1 for k in range(self.kernel_count)
                   if not thresholds_sorted(self.kernel_quantizer(k)))

    def ternary_branches(self) -> list[TernaryBranches]:
        """Exact per-kernel decomposition of the current master weights."""
        if not self.quantizers_ready():
            raise RuntimeError("quantizers not initialized")
        w2 = self._master_2d()
        return [decompose(w2[k], self.kernel_quantizer(k))
                for k in range(self.kernel_count)]

    def _quant_params(self):
        out = []
        if self.quantizers_ready():
            out += [self.q_alphas, self.q_gamma1, self.q_gamma2, self.q_thresholds]
        return out

    def _quantized_weight(self, ctx: ForwardCtx) -> np.ndarray:
        w = self.weight.data
        if self.quant_kind == "fp32":
            self._quant_cache = None
            return w
        if self.quant_kind == "fixed":
            w2 = self._master_2d()
            qmax = 2.0 ** (self.fixed_bits - 1) - 1
            scale = np.max(np.abs(w2), axis=1, keepdims=True) / qmax
            scale[scale == 0] = 1.0
            wq = scale * np.clip(np.sign(w2) * np.floor(np.abs(w2) / scale + 0.5),
                                 -qmax, qmax)
            self._quant_cache = ("fixed",)
            return wq.reshape(w.shape)
        if not self.quantizers_ready():
            self._quant_cache = None
            return w
        w2 = self._master_2d()
        rows = np.empty_like(w2)
        for k in range(self.kernel_count):
            p = self.kernel_quantizer(k)
            if ctx.temp is not None:
                rows[k] = forward_train(w2[k], p, ctx.temp)
            else:
                rows[k] = forward_infer(w2[k], p)
        self._quant_cache = ("ternary", ctx.temp)
        return rows.reshape(w.shape)

    def _route_weight_grad(self, dw: np.ndarray):
        """Send dL/dW_q to master weights and quantizer parameters."""
        if self._quant_cache is None:
            self.weight.grad += dw
            return
        if self._quant_cache[0] == "fixed":
            self.weight.grad += dw  # straight-through
            return
        _, temp = self._quant_cache
        if temp is None:
            # exact quantizer has zero gradient a.e.; eval-only path
            return
        w2 = self._master_2d()
        dw2 = dw.reshape(self.kernel_count, -1)
        wgrad = self.weight.grad.reshape(self.kernel_count, -1)
        for k in range(self.kernel_count):
            g = quantizer_backward(w2[k], self.kernel_quantizer(k), temp, dw2[k])
            wgrad[k] += g.d_weights
            self.q_alphas.grad[k] += g.d_alphas
            self.q_gamma1.grad[k] += g.d_gamma1
            self.q_gamma2.grad[k] += g.d_gamma2
            self.q_thresholds.grad[k] += g.d_thresholds


class QuantizedDense(Dense, _QuantizedWeights):
    def __init__(self, in_features, out_features, rng, weight_precision="ternary:2"):
        super().__init__(in_features, out_features, rng)
        self._init_quant(weight_precision)

    def params(self):
        return super().params() + self._quant_params()

    def _effective_weight(self, ctx):
        return self._quantized_weight(ctx)

    def _apply_weight_grad(self, dw):
        self._route_weight_grad(dw)


class QuantizedConv2d(Conv2d, _QuantizedWeights):
    def __init__(self, in_channels, out_channels, kernel_size, rng,
                 stride=1, padding=0, weight_precision="ternary:2"):
        super().__init__(in_channels, out_channels, kernel_size, rng,
                         stride=stride, padding=padding)
        self._init_quant(weight_precision)

    def params(self):
        return super().params() + self._quant_params()

    def _effective_weight(self, ctx):
        return self._quantized_weight(ctx)

    def _apply_weight_grad(self, dw):
        self._route_weight_grad(dw)


class BatchNorm(Layer):
    """Batch normalization over the channel axis (axis 1); accepts 2-D
    (N, C) or 4-D (N, C, H, W) input. Running statistics use momentum 0.1."""

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        self.gamma = Param("gamma", np.ones(channels))
        self.beta = Param("beta", np.zeros(channels))
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum
        self.eps = eps
        self._cache = None

    def params(self):
        return [self.gamma, self.beta]

    def _axes(self, x):
        return (0,) if x.ndim == 2 else (0, 2, 3)

    def _shape(self, x):
        return (1, -1) if x.ndim == 2 else (1, -1, 1, 1)

    def forward(self, x, ctx):
        axes, shp = self._axes(x), self._shape(x)
        if ctx.train:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mean
            self.running_var = (1 - self.momentum) * self.running_var + self.momentum * var
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean.reshape(shp)) * inv_std.reshape(shp)
        self._cache = (xhat, inv_std, ctx.train, x.shape)
        return self.gamma.data.reshape(shp) * xhat + self.beta.data.reshape(shp)

    def backward(self, dout):
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        xhat, inv_std, was_train, xshape = self._cache
        axes, shp = self._axes(dout), self._shape(dout)
        self.gamma.grad += (dout * xhat).sum(axis=axes)
        self.beta.grad += dout.sum(axis=axes)
        dxhat = dout * self.gamma.data.reshape(shp)
        if not was_train:
            return dxhat * inv_std.reshape(shp)
        m = dout.size / dout.shape[1]
        return (inv_std.reshape(shp) / m) * (
            m * dxhat - dxhat.sum(axis=axes).reshape(shp)
            - xhat * (dxhat * xhat).sum(axis=axes).reshape(shp))

    def bn_channel_params(self) -> actquant.BnChannelParams:
        return actquant.BnChannelParams(betas=self.beta.data, gammas=self.gamma.data)


class ReLU(Layer):
    def forward(self, x, ctx):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dout):
        return np.where(self._mask, dout, 0.0)


class ReLUX(Layer):
    """Clipped-ReLU fixed-point activation quantizer.

    The clip value comes from the bound batch-norm layer's statistics and is
    refreshed at the start of each epoch; gradients are clipped
    straight-through.
    """

    def __init__(self, bits: int = 8, sigma_k: float = actquant.DEFAULT_SIGMA_MULTIPLIER,
                 source_bn: BatchNorm | None = None, clip: float | None = None):
        if source_bn is None and clip is None:
            raise ValueError("ReLUX needs a source BatchNorm or an explicit clip value")
        self.bits = bits
        self.sigma_k = sigma_k
        self.source_bn = source_bn
        self.clip = clip if clip is not None else 1.0
        if source_bn is not None:
            self.refresh_clip()

    def refresh_clip(self):
        if self.source_bn is not None:
            c = actquant.clip_value(self.source_bn.bn_channel_params(), self.sigma_k)
            self.clip = max(c, 1e-6)

    def epoch_start(self):
        self.refresh_clip()

    def forward(self, x, ctx):
        self._x = x
        return actquant.relu_x_quant(x, self.clip, self.bits)

    def backward(self, dout):
        return actquant.relu_x_grad(self._x, self.clip, dout)


class AvgPool2d(Layer):
    def __init__(self, kernel: int):
        self.kernel = kernel

    def forward(self, x, ctx):
        n, c, h, w = x.shape
        k = self.kernel
        if h % k or w % k:
            raise ValueError(f"pooling kernel {k} does not divide input {h}x{w}")
        self._in_shape = x.shape
        return x.reshape(n, c, h // k, k, w // k, k).mean(axis=(3, 5))

    def backward(self, dout):
        n, c, h, w = self._in_shape
        k = self.kernel
        expanded = np.repeat(np.repeat(dout, k, axis=2), k, axis=3)
        return expanded / (k * k)


class Flatten(Layer):
    def forward(self, x, ctx):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over the batch; returns (loss, dlogits)."""
    z = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(z)
    probs = ez / ez.sum(axis=1, keepdims=True)
    n = logits.shape[0]
    loss = float(-np.mean(np.log(probs[np.arange(n), labels] + 1e-300)))
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits / n
