"""Dense NCHW tensor kernels: conv, relu, maxpool, ghost batchnorm, BCE loss.

All layers are stride-1 / same-padding and come as forward/backward pairs
with explicit caches, which is all the tiny fully-convolutional cell
networks here need. Kernels preserve the input dtype (float32 in training,
float64 in gradient checks) and use a fixed accumulation order so repeated
runs are bit-identical.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import BadGhostSize, FormatError, ShapeMismatch
from .rng import RngStream

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def he_uniform(shape: tuple[int, ...], fan_in: int, rng: RngStream) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.generator().uniform(-limit, limit, size=shape).astype(np.float32)


def _offsets(k: int):
    return [(dy, dx) for dy in range(k) for dx in range(k)]


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """(N, C, H, W) -> (N, C*k*k, H*W) patch matrix for a same-padded conv."""
    n, c, h, w = x.shape
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    cols = np.empty((n, c, k * k, h, w), dtype=x.dtype)
    for idx, (dy, dx) in enumerate(_offsets(k)):
        cols[:, :, idx] = xp[:, :, dy : dy + h, dx : dx + w]
    return cols.reshape(n, c * k * k, h * w)


def _col2im(dcols: np.ndarray, shape: tuple[int, ...], k: int) -> np.ndarray:
    n, c, h, w = shape
    p = k // 2
    dxp = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=dcols.dtype)
    view = dcols.reshape(n, c, k * k, h, w)
    for idx, (dy, dx) in enumerate(_offsets(k)):
        dxp[:, :, dy : dy + h, dx : dx + w] += view[:, :, idx]
    return dxp[:, :, p : p + h, p : p + w].copy()


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Same-padded stride-1 convolution; w is (out_ch, in_ch, k, k)."""
    n, c, h, wd = x.shape
    oc, ic, kh, kw = w.shape
    if ic != c or kh != kw or kh not in (1, 3):
        raise ShapeMismatch(f"kernel {w.shape} incompatible with input {x.shape}")
    wm = w.reshape(oc, ic * kh * kw)
    if kh == 1:
        cols = x.reshape(n, c, h * wd)
    else:
        cols = _im2col(x, kh)
    y = np.matmul(wm, cols).reshape(n, oc, h, wd)
    y += b[None, :, None, None]
    cache = (x.shape, cols, w)
    return y, cache


def conv2d_backward(dy: np.ndarray, cache):
    x_shape, cols, w = cache
    n, c, h, wd = x_shape
    oc = w.shape[0]
    k = w.shape[2]
    dym = dy.reshape(n, oc, h * wd)
    dw = np.matmul(dym, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
    db = dy.sum(axis=(0, 2, 3))
    dcols = np.matmul(w.reshape(oc, -1).T, dym)
    if k == 1:
        dx = dcols.reshape(x_shape)
    else:
        dx = _col2im(dcols, x_shape, k)
    return dx, dw, db


def relu_forward(x: np.ndarray):
    y = np.maximum(x, 0)
    return y, x > 0


def relu_backward(dy: np.ndarray, cache):
    return dy * cache


def maxpool3_forward(x: np.ndarray):
    """3x3 window max, stride 1, same padding with -inf pad semantics."""
    n, c, h, w = x.shape
    xp = np.full((n, c, h + 2, w + 2), -np.inf, dtype=x.dtype)
    xp[:, :, 1 : 1 + h, 1 : 1 + w] = x
    stacked = np.empty((9, n, c, h, w), dtype=x.dtype)
    for idx, (dy, dx) in enumerate(_offsets(3)):
        stacked[idx] = xp[:, :, dy : dy + h, dx : dx + w]
    arg = stacked.argmax(axis=0)  # first index wins ties
    y = np.take_along_axis(stacked, arg[None], axis=0)[0]
    return y, (arg, x.shape)


def maxpool3_backward(dy: np.ndarray, cache):
    arg, shape = cache
    n, c, h, w = shape
    dxp = np.zeros((n, c, h + 2, w + 2), dtype=dy.dtype)
    for idx, (off_y, off_x) in enumerate(_offsets(3)):
        contrib = np.where(arg == idx, dy, 0)
        dxp[:, :, off_y : off_y + h, off_x : off_x + w] += contrib
    return dxp[:, :, 1 : 1 + h, 1 : 1 + w].copy()


@dataclass
class BnState:
    """Learnable scale/shift plus running statistics for one BN layer."""

    scale: np.ndarray
    shift: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray


def ghost_bn_forward(
    x: np.ndarray,
    bn: BnState,
    ghost_size: int,
    mode: str,
    momentum: float = BN_MOMENTUM,
    eps: float = BN_EPS,
):
    """Batchnorm with statistics per ghost group of ``ghost_size`` samples.

    ``train`` normalizes per ghost group and folds the mean of the group
    statistics into the running averages; ``eval`` normalizes with the
    running statistics; ``calibrate`` computes full-batch statistics,
    overwrites the running arrays with them and normalizes.
    """
    n, c, h, w = x.shape
    if mode == "train":
        if ghost_size < 1 or n % ghost_size != 0:
            raise BadGhostSize(f"batch {n} not divisible by ghost size {ghost_size}")
        g = n // ghost_size
        xg = x.reshape(g, ghost_size, c, h, w)
        mean = xg.mean(axis=(1, 3, 4), keepdims=True)
        var = xg.var(axis=(1, 3, 4), keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (xg - mean) * inv
        y = xhat.reshape(n, c, h, w) * bn.scale[None, :, None, None]
        y += bn.shift[None, :, None, None]
        batch_mean = mean.mean(axis=0).reshape(c)
        batch_var = var.mean(axis=0).reshape(c)
        bn.running_mean *= 1.0 - momentum
        bn.running_mean += (momentum * batch_mean).astype(bn.running_mean.dtype)
        bn.running_var *= 1.0 - momentum
        bn.running_var += (momentum * batch_var).astype(bn.running_var.dtype)
        cache = (xhat, inv, bn.scale, (g, ghost_size, c, h, w))
        return y, cache
    if mode == "calibrate":
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        bn.running_mean[:] = mean.astype(bn.running_mean.dtype)
        bn.running_var[:] = var.astype(bn.running_var.dtype)
        mean_b = mean[None, :, None, None]
        inv_b = 1.0 / np.sqrt(var + eps)[None, :, None, None]
    elif mode == "eval":
        mean_b = bn.running_mean[None, :, None, None]
        inv_b = 1.0 / np.sqrt(bn.running_var + eps)[None, :, None, None]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    y = (x - mean_b) * inv_b * bn.scale[None, :, None, None]
    y += bn.shift[None, :, None, None]
    return y, None


def ghost_bn_backward(dy: np.ndarray, cache):
    xhat, inv, scale, dims = cache
    g, ghost, c, h, w = dims
    m = ghost * h * w
    dxhat = (dy * scale[None, :, None, None]).reshape(g, ghost, c, h, w)
    sum_dxhat = dxhat.sum(axis=(1, 3, 4), keepdims=True)
    sum_dxhat_xhat = (dxhat * xhat).sum(axis=(1, 3, 4), keepdims=True)
    dxg = (inv / m) * (m * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)
    dx = dxg.reshape(g * ghost, c, h, w)
    xhat_flat = xhat.reshape(g * ghost, c, h, w)
    dscale = (dy * xhat_flat).sum(axis=(0, 2, 3))
    dshift = dy.sum(axis=(0, 2, 3))
    return dx, dscale, dshift


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid_bce_forward(logits: np.ndarray, labels: np.ndarray):
    """Mean binary cross-entropy of sigmoid(logits), log-sum-exp form."""
    if logits.shape != labels.shape:
        raise ShapeMismatch(f"logits {logits.shape} vs labels {labels.shape}")
    z = logits
    y = labels.astype(z.dtype)
    per_elem = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    loss = float(per_elem.mean(dtype=np.float64))
    return loss, (z, y)


def sigmoid_bce_backward(cache):
    z, y = cache
    return (sigmoid(z) - y) / z.size


def sgd_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    velocities: dict[str, np.ndarray],
    lr: float,
    momentum: float,
) -> None:
    """v <- momentum*v + g; p <- p - lr*v. Touches only keys present in grads."""
    for name, g in grads.items():
        p = params[name]
        if p.shape != g.shape:
            raise ShapeMismatch(f"{name}: param {p.shape} vs grad {g.shape}")
        v = velocities.get(name)
        if v is None:
            v = np.zeros_like(p)
            velocities[name] = v
        v *= momentum
        v += g.astype(v.dtype)
        p -= (lr * v).astype(p.dtype)


CHECKPOINT_MAGIC = b"SNCK"
CHECKPOINT_VERSION = 1


def save_checkpoint(params: dict[str, np.ndarray], path) -> None:
    """Write per-parameter records (name, shape, little-endian f32 payload)."""
    chunks = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(params))]
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f4")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    blob = b"".join(chunks)
    with open(path, "wb") as fh:
        fh.write(blob)


def _take(buf: bytes, offset: int, count: int, what: str):
    if offset + count > len(buf):
        raise FormatError(f"truncated checkpoint: need {what} at offset {offset}")
    return buf[offset : offset + count], offset + count


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        buf = fh.read()
    chunk, off = _take(buf, 0, 4, "magic")
    if chunk != CHECKPOINT_MAGIC:
        raise FormatError(f"bad magic {chunk!r}")
    chunk, off = _take(buf, off, 8, "header")
    version, count = struct.unpack("<II", chunk)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        chunk, off = _take(buf, off, 2, "name length")
        (name_len,) = struct.unpack("<H", chunk)
        chunk, off = _take(buf, off, name_len, "name")
        name = chunk.decode("utf-8")
        chunk, off = _take(buf, off, 1, "ndim")
        ndim = chunk[0]
        chunk, off = _take(buf, off, 4 * ndim, "shape")
        shape = struct.unpack(f"<{ndim}I", chunk)
        size = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        chunk, off = _take(buf, off, 4 * size, f"payload of {name}")
        params[name] = np.frombuffer(chunk, dtype="<f4").reshape(shape).copy()
    if off != len(buf):
        raise FormatError(f"{len(buf) - off} trailing bytes at offset {off}")
    return params


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_input: dict[str, float] = field(default_factory=dict)


def grad_check(loss_fn, inputs: dict[str, np.ndarray], wrt=None, eps=1e-5) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    ``loss_fn(inputs) -> (loss, grads)`` where grads maps input names to
    arrays. Inputs should be float64 for a meaningful comparison.
    """
    _, analytic = loss_fn(inputs)
    names = list(analytic) if wrt is None else list(wrt)
    per_input: dict[str, float] = {}
    for name in names:
        x = inputs[name]
        numeric = np.zeros_like(x)
        flat = x.reshape(-1)
        num_flat = numeric.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            step = eps * max(1.0, abs(float(orig)))
            flat[idx] = orig + step
            lp, _ = loss_fn(inputs)
            flat[idx] = orig - step
            lm, _ = loss_fn(inputs)
            flat[idx] = orig
            num_flat[idx] = (lp - lm) / (2.0 * step)
        a = analytic[name].reshape(-1)
        n = num_flat
        denom = np.maximum(np.abs(a) + np.abs(n), 1e-4)
        per_input[name] = float(np.max(np.abs(a - n) / denom)) if flat.size else 0.0
    max_err = max(per_input.values()) if per_input else 0.0
    return GradCheckReport(max_rel_error=max_err, per_input=per_input)
