"""Differentiable layers on NHWC numpy arrays.

Reverse mode is implemented per layer: forward(x, train) caches what the
matching backward(dy) needs, backward returns the input gradient and
accumulates parameter gradients. No general tape; the three model
topologies wire these by hand.
"""

from __future__ import annotations

import numpy as np

from .params import Param, kaiming_uniform


def _out_and_pad(size: int, k_eff: int, stride: int, padding: str) -> tuple[int, int, int]:
    if padding == "same":
        out = -(-size // stride)
        total = max((out - 1) * stride + k_eff - size, 0)
        return out, total // 2, total - total // 2
    if padding == "valid":
        return (size - k_eff) // stride + 1, 0, 0
    raise ValueError(f"unknown padding {padding!r}")


def _im2col(xp: np.ndarray, kh: int, kw: int, sh: int, sw: int, dh: int, dw: int,
            oh: int, ow: int) -> np.ndarray:
    n, _, _, c = xp.shape
    s = xp.strides
    shape = (n, oh, ow, kh, kw, c)
    strides = (s[0], s[1] * sh, s[2] * sw, s[1] * dh, s[2] * dw, s[3])
    return np.lib.stride_tricks.as_strided(xp, shape=shape, strides=strides)


class Layer:
    """Base: subclasses define forward/backward and expose params()."""

    def params(self) -> dict[str, Param]:
        return {}

    def buffers(self) -> dict[str, np.ndarray]:
        return {}


class Conv2d(Layer):
    """Cross-correlation with zero padding; weight (kh, kw, in_ch, out_ch)."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int = 3, stride: int = 1,
                 dilation: int = 1, padding: str = "same", bias: bool = True,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        if stride < 1 or dilation < 1:
            raise ValueError("stride and dilation must be >= 1")
        rng = rng or np.random.default_rng(0)
        self.kernel, self.stride, self.dilation, self.padding = kernel, stride, dilation, padding
        self.in_ch, self.out_ch = in_ch, out_ch
        self.w = Param(kaiming_uniform(rng, (kernel, kernel, in_ch, out_ch),
                                       kernel * kernel * in_ch, dtype))
        self.b = Param(np.zeros(out_ch, dtype=dtype)) if bias else None

    def params(self):
        out = {"w": self.w}
        if self.b is not None:
            out["b"] = self.b
        return out

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if x.shape[-1] != self.in_ch:
            raise ValueError(f"expected {self.in_ch} input channels, got {x.shape[-1]}")
        k, s, d = self.kernel, self.stride, self.dilation
        k_eff = (k - 1) * d + 1
        oh, pt, pb = _out_and_pad(x.shape[1], k_eff, s, self.padding)
        ow, pl, pr = _out_and_pad(x.shape[2], k_eff, s, self.padding)
        xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
        cols = _im2col(xp, k, k, s, s, d, d, oh, ow)
        n = x.shape[0]
        cols2 = np.ascontiguousarray(cols).reshape(n * oh * ow, k * k * self.in_ch)
        out = cols2 @ self.w.value.reshape(-1, self.out_ch)
        out = out.reshape(n, oh, ow, self.out_ch)
        if self.b is not None:
            out = out + self.b.value
        self._cache = (xp, cols2, x.shape, (pt, pb, pl, pr), (oh, ow))
        return out

    def backward(self, dy: np.ndarray) -> np.ndarray:
        xp, cols2, x_shape, (pt, pb, pl, pr), (oh, ow) = self._cache
        n = x_shape[0]
        k, s, d = self.kernel, self.stride, self.dilation
        dy2 = dy.reshape(n * oh * ow, self.out_ch)
        self.w.grad += (cols2.T @ dy2).reshape(self.w.value.shape)
        if self.b is not None:
            self.b.grad += dy2.sum(axis=0)
        dcols = (dy2 @ self.w.value.reshape(-1, self.out_ch).T).reshape(
            n, oh, ow, k, k, self.in_ch
        )
        dxp = np.zeros_like(xp)
        for i in range(k):
            for j in range(k):
                dxp[:, i * d : i * d + oh * s : s, j * d : j * d + ow * s : s, :] += dcols[:, :, :, i, j, :]
        return dxp[:, pt : xp.shape[1] - pb, pl : xp.shape[2] - pr, :]


class DepthwiseConv2d(Layer):
    """Per-channel spatial convolution, weight (kh, kw, ch), 'same' padding."""

    def __init__(self, ch: int, kernel: int = 3, stride: int = 1, dilation: int = 1,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        rng = rng or np.random.default_rng(0)
        self.ch, self.kernel, self.stride, self.dilation = ch, kernel, stride, dilation
        self.w = Param(kaiming_uniform(rng, (kernel, kernel, ch), kernel * kernel, dtype))

    def params(self):
        return {"w": self.w}

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if x.shape[-1] != self.ch:
            raise ValueError(f"expected {self.ch} channels, got {x.shape[-1]}")
        k, s, d = self.kernel, self.stride, self.dilation
        k_eff = (k - 1) * d + 1
        oh, pt, pb = _out_and_pad(x.shape[1], k_eff, s, "same")
        ow, pl, pr = _out_and_pad(x.shape[2], k_eff, s, "same")
        xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
        out = np.zeros((x.shape[0], oh, ow, self.ch), dtype=x.dtype)
        for i in range(k):
            for j in range(k):
                out += xp[:, i * d : i * d + oh * s : s, j * d : j * d + ow * s : s, :] * self.w.value[i, j]
        self._cache = (xp, x.shape, (pt, pb, pl, pr), (oh, ow))
        return out

    def backward(self, dy: np.ndarray) -> np.ndarray:
        xp, x_shape, (pt, pb, pl, pr), (oh, ow) = self._cache
        k, s, d = self.kernel, self.stride, self.dilation
        dxp = np.zeros_like(xp)
        for i in range(k):
            for j in range(k):
                sl_h = slice(i * d, i * d + oh * s, s)
                sl_w = slice(j * d, j * d + ow * s, s)
                self.w.grad[i, j] += (xp[:, sl_h, sl_w, :] * dy).sum(axis=(0, 1, 2))
                dxp[:, sl_h, sl_w, :] += dy * self.w.value[i, j]
        return dxp[:, pt : xp.shape[1] - pb, pl : xp.shape[2] - pr, :]


class ConvTranspose2d(Layer):
    """Exact adjoint of a stride-2 'same' 4x4 Conv2d; doubles spatial size.

    Weight (4, 4, out_ch, in_ch) is the kernel of the adjoint convolution,
    so <conv(x; w), y> == <x, conv_transpose(y; w)> holds by construction.
    """

    KERNEL = 4
    STRIDE = 2
    PAD = 1

    def __init__(self, in_ch: int, out_ch: int, bias: bool = True,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        rng = rng or np.random.default_rng(0)
        self.in_ch, self.out_ch = in_ch, out_ch
        k = self.KERNEL
        self.w = Param(kaiming_uniform(rng, (k, k, out_ch, in_ch), k * k * in_ch, dtype))
        self.b = Param(np.zeros(out_ch, dtype=dtype)) if bias else None

    def params(self):
        out = {"w": self.w}
        if self.b is not None:
            out["b"] = self.b
        return out

    def forward(self, y: np.ndarray, train: bool = False) -> np.ndarray:
        if y.shape[-1] != self.in_ch:
            raise ValueError(f"expected {self.in_ch} input channels, got {y.shape[-1]}")
        k, s, p = self.KERNEL, self.STRIDE, self.PAD
        n, h, w_, _ = y.shape
        oh, ow = s * h, s * w_
        y2 = y.reshape(n * h * w_, self.in_ch)
        dcols = (y2 @ self.w.value.reshape(-1, self.in_ch).T).reshape(n, h, w_, k, k, self.out_ch)
        buf = np.zeros((n, oh + 2 * p, ow + 2 * p, self.out_ch), dtype=y.dtype)
        for i in range(k):
            for j in range(k):
                buf[:, i : i + h * s : s, j : j + w_ * s : s, :] += dcols[:, :, :, i, j, :]
        out = buf[:, p : p + oh, p : p + ow, :]
        if self.b is not None:
            out = out + self.b.value
        self._cache = (y, (n, h, w_), (oh, ow))
        return out

    def backward(self, dy: np.ndarray) -> np.ndarray:
        y, (n, h, w_), (oh, ow) = self._cache
        k, s, p = self.KERNEL, self.STRIDE, self.PAD
        dyp = np.pad(dy, ((0, 0), (p, p), (p, p), (0, 0)))
        cols = np.ascontiguousarray(_im2col(dyp, k, k, s, s, 1, 1, h, w_))
        cols2 = cols.reshape(n * h * w_, k * k * self.out_ch)
        self.w.grad += (cols2.T @ y.reshape(n * h * w_, self.in_ch)).reshape(self.w.value.shape)
        if self.b is not None:
            self.b.grad += dy.sum(axis=(0, 1, 2))
        return (cols2 @ self.w.value.reshape(-1, self.in_ch)).reshape(n, h, w_, self.in_ch)


class BatchNorm2d(Layer):
    """Per-channel batch normalization with running statistics."""

    def __init__(self, ch: int, eps: float = 1e-5, momentum: float = 0.99, dtype=np.float32):
        self.ch, self.eps, self.momentum = ch, eps, momentum
        self.gamma = Param(np.ones(ch, dtype=dtype))
        self.beta = Param(np.zeros(ch, dtype=dtype))
        self.running_mean = np.zeros(ch, dtype=dtype)
        self.running_var = np.ones(ch, dtype=dtype)

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if train:
            if x.shape[0] < 2:
                raise ValueError("batchnorm in train mode needs batch >= 2")
            mean = x.mean(axis=(0, 1, 2))
            var = x.var(axis=(0, 1, 2))
            self.running_mean[...] = self.momentum * self.running_mean + (1 - self.momentum) * mean
            self.running_var[...] = self.momentum * self.running_var + (1 - self.momentum) * var
        else:
            mean, var = self.running_mean, self.running_var
        ivar = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * ivar
        self._cache = (xhat, ivar.astype(x.dtype), train)
        return self.gamma.value * xhat + self.beta.value

    def backward(self, dy: np.ndarray) -> np.ndarray:
        xhat, ivar, train = self._cache
        self.gamma.grad += (dy * xhat).sum(axis=(0, 1, 2))
        self.beta.grad += dy.sum(axis=(0, 1, 2))
        dxhat = dy * self.gamma.value
        if not train:
            return dxhat * ivar
        m = dy.shape[0] * dy.shape[1] * dy.shape[2]
        return (ivar / m) * (
            m * dxhat
            - dxhat.sum(axis=(0, 1, 2))
            - xhat * (dxhat * xhat).sum(axis=(0, 1, 2))
        )


class ReLU6(Layer):
    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        self._mask = (x > 0) & (x < 6)
        return np.clip(x, 0.0, 6.0)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy * self._mask


class BilinearResize(Layer):
    """Separable align-corners-false bilinear resize (exact linear adjoint
    in backward)."""

    def __init__(self, out_h: int, out_w: int):
        if out_h < 1 or out_w < 1:
            raise ValueError("resize target must be >= 1")
        self.out_h, self.out_w = out_h, out_w
        self._mats: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}

    @staticmethod
    def _axis_matrix(n_in: int, n_out: int) -> np.ndarray:
        src = np.clip((np.arange(n_out) + 0.5) * n_in / n_out - 0.5, 0, n_in - 1)
        i0 = np.floor(src).astype(np.int64)
        i1 = np.minimum(i0 + 1, n_in - 1)
        t = src - i0
        mat = np.zeros((n_out, n_in))
        mat[np.arange(n_out), i0] += 1 - t
        mat[np.arange(n_out), i1] += t
        return mat

    def _matrices(self, h: int, w: int, dtype):
        key = (h, w)
        if key not in self._mats:
            self._mats[key] = (self._axis_matrix(h, self.out_h), self._axis_matrix(w, self.out_w))
        r, c = self._mats[key]
        return r.astype(dtype, copy=False), c.astype(dtype, copy=False)

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        r, c = self._matrices(x.shape[1], x.shape[2], x.dtype)
        self._in_shape = x.shape
        y = np.einsum("oh,nhwc->nowc", r, x, optimize=True)
        return np.einsum("pw,nowc->nopc", c, y, optimize=True)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        r, c = self._matrices(self._in_shape[1], self._in_shape[2], dy.dtype)
        g = np.einsum("pw,nopc->nowc", c, dy, optimize=True)
        return np.einsum("oh,nowc->nhwc", r, g, optimize=True)


class GlobalAvgPool(Layer):
    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        self._in_shape = x.shape
        return x.mean(axis=(1, 2), keepdims=True)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        _, h, w, _ = self._in_shape
        return np.broadcast_to(dy / (h * w), self._in_shape).copy()


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def concat(xs: list[np.ndarray]) -> np.ndarray:
    return np.concatenate(xs, axis=-1)


def split_like(dy: np.ndarray, xs_channels: list[int]) -> list[np.ndarray]:
    out = []
    start = 0
    for ch in xs_channels:
        out.append(dy[..., start : start + ch])
        start += ch
    return out
