"""Differentiable operations on :class:`~convmambanet.ndcore.tensor.Tensor`.

Exactly the operations the network needs: elementwise arithmetic and
activations, (batched) matmul, structural ops, 1-d convolutions, pooling,
batch normalization, dropout, softmax, and the stabilized cross-entropy
loss.  Each op computes its forward value with numpy and, when a tape is
active, records a closure implementing its vector-Jacobian product.

Binary elementwise ops follow numpy broadcasting; gradients are summed
back over broadcast axes.  Per-channel arithmetic against ``[B, C, L]``
activations (conv biases, batchnorm scale/shift) is handled inside the
fused channel ops rather than through implicit broadcasting, so a channel
vector can never be confused with a time axis of the same length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import Rng
from .tensor import ShapeError, Tensor, active_tape


class ParameterError(ValueError):
    """An operation parameter is outside its documented domain."""


class DataError(ValueError):
    """Input data violates the operation's contract (e.g. label out of range)."""


class DegenerateInputError(ValueError):
    """Input is too small for the operation to be well defined."""


def _apply(op: str, out_data: np.ndarray, inputs: tuple[Tensor, ...], make_backward) -> Tensor:
    out = Tensor(out_data)
    tape = active_tape()
    if tape is None:
        return out
    return tape.record(op, out, inputs, make_backward)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` over the axes numpy broadcasting added or stretched."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_result(op: str, a: Tensor, b: Tensor, fn) -> np.ndarray:
    try:
        return fn(a.data, b.data)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# -- elementwise -------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = _broadcast_result("add", a, b, np.add)
    ash, bsh = a.shape, b.shape

    def make_backward(needs):
        def bw(g):
            return (
                _unbroadcast(g, ash) if needs[0] else None,
                _unbroadcast(g, bsh) if needs[1] else None,
            )

        return bw

    return _apply("add", out, (a, b), make_backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = _broadcast_result("sub", a, b, np.subtract)
    ash, bsh = a.shape, b.shape

    def make_backward(needs):
        def bw(g):
            return (
                _unbroadcast(g, ash) if needs[0] else None,
                _unbroadcast(-g, bsh) if needs[1] else None,
            )

        return bw

    return _apply("sub", out, (a, b), make_backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = _broadcast_result("mul", a, b, np.multiply)
    ash, bsh = a.shape, b.shape
    ad, bd = a.data, b.data

    def make_backward(needs):
        def bw(g):
            return (
                _unbroadcast(g * bd, ash) if needs[0] else None,
                _unbroadcast(g * ad, bsh) if needs[1] else None,
            )

        return bw

    return _apply("mul", out, (a, b), make_backward)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)

    def make_backward(needs):
        return lambda g: (g * out,)

    return _apply("exp", out, (a,), make_backward)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form saturates cleanly for |x| large without overflow
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid(a.data)

    def make_backward(needs):
        return lambda g: (g * out * (1.0 - out),)

    return _apply("sigmoid", out, (a,), make_backward)


def softplus(a: Tensor) -> Tensor:
    """log(1 + e^x), computed as logaddexp(0, x) so large |x| cannot overflow."""
    out = np.logaddexp(0.0, a.data)
    sig = _sigmoid(a.data)

    def make_backward(needs):
        return lambda g: (g * sig,)

    return _apply("softplus", out, (a,), make_backward)


def silu(a: Tensor) -> Tensor:
    """x * sigmoid(x)."""
    sig = _sigmoid(a.data)
    out = a.data * sig
    ad = a.data

    def make_backward(needs):
        return lambda g: (g * (sig * (1.0 + ad * (1.0 - sig))),)

    return _apply("silu", out, (a,), make_backward)


# -- matmul and linear -------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes.

    2-d inputs give the ordinary product; higher ranks are batched and
    require identical leading dimensions (no implicit broadcasting).
    """
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul requires rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2] or a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are incompatible")
    out = a.data @ b.data
    ad, bd = a.data, b.data

    def make_backward(needs):
        def bw(g):
            ga = g @ bd.swapaxes(-1, -2) if needs[0] else None
            gb = ad.swapaxes(-1, -2) @ g if needs[1] else None
            return ga, gb

        return bw

    return _apply("matmul", out, (a, b), make_backward)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w (+ b)`` over the trailing feature axis of an arbitrary-rank x."""
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear: input features {x.shape} do not match weight {w.shape}")
    lead = x.shape[:-1]
    flat = reshape(x, (-1, x.shape[-1])) if x.ndim != 2 else x
    y = matmul(flat, w)
    if b is not None:
        y = add(y, b)
    if x.ndim != 2:
        y = reshape(y, lead + (w.shape[1],))
    return y


# -- structural --------------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {a.shape} to {shape}") from None
    ash = a.shape

    def make_backward(needs):
        return lambda g: (g.reshape(ash),)

    return _apply("reshape", out, (a,), make_backward)


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(int(x) for x in axes)
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeError(f"transpose axes {axes} invalid for shape {a.shape}")
    out = np.ascontiguousarray(a.data.transpose(axes))
    inv = tuple(np.argsort(axes))

    def make_backward(needs):
        return lambda g: (g.transpose(inv),)

    return _apply("transpose", out, (a,), make_backward)


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)
    ash = a.shape
    axes = _normalize_axes(axis, a.ndim)

    def make_backward(needs):
        def bw(g):
            gg = g if keepdims or axis is None else np.expand_dims(g, axes)
            return (np.broadcast_to(gg, ash),)

        return bw

    return _apply("sum", np.asarray(out), (a,), make_backward)


def reduce_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, a.ndim)
    count = a.size if axis is None else int(np.prod([a.shape[i] for i in axes]))
    out = a.data.mean(axis=axis, keepdims=keepdims)
    ash = a.shape

    def make_backward(needs):
        def bw(g):
            gg = g if keepdims or axis is None else np.expand_dims(g, axes)
            return (np.broadcast_to(gg, ash) / count,)

        return bw

    return _apply("mean", np.asarray(out), (a,), make_backward)


def _normalize_axes(axis, ndim) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """Contiguous sub-tensor along one axis; gradient scatters back."""
    axis = axis % a.ndim
    if not (0 <= start < stop <= a.shape[axis]):
        raise ShapeError(f"slice [{start}:{stop}] out of range for axis {axis} of {a.shape}")
    sl = tuple(slice(None) if i != axis else slice(start, stop) for i in range(a.ndim))
    out = a.data[sl]
    ash = a.shape

    def make_backward(needs):
        def bw(g):
            buf = np.zeros(ash)
            buf[sl] = g
            return (buf,)

        return bw

    return _apply("slice", out, (a,), make_backward)


def index_axis(a: Tensor, axis: int, i: int) -> Tensor:
    """Single index along ``axis`` with that axis dropped."""
    axis = axis % a.ndim
    picked = slice_axis(a, axis, i, i + 1)
    return reshape(picked, a.shape[:axis] + a.shape[axis + 1 :])


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("stack of zero tensors")
    base = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != base:
            raise ShapeError(f"stack: mismatched shapes {base} and {t.shape}")
    out = np.stack([t.data for t in tensors], axis=axis)
    axis = axis % out.ndim

    def make_backward(needs):
        def bw(g):
            parts = np.moveaxis(g, axis, 0)
            return tuple(parts[i] for i in range(len(tensors)))

        return bw

    return _apply("stack", out, tuple(tensors), make_backward)


# -- convolutions and pooling ------------------------------------------------


def depthwise_conv1d(x: Tensor, w: Tensor, bias: Tensor, left_pad: int) -> Tensor:
    """Causal per-channel 1-d convolution.

    ``x`` is ``[B, C, L]``, ``w`` is ``[C, K]``; the input is zero-padded on
    the left by ``left_pad = K - 1`` and ``y[b, c, t] = bias[c] +
    sum_j w[c, j] * xpad[b, c, t + j]``, so the output has length L and
    never sees samples later than t.
    """
    if x.ndim != 3 or w.ndim != 2 or bias.ndim != 1:
        raise ShapeError(f"depthwise_conv1d: bad ranks x{x.shape} w{w.shape} b{bias.shape}")
    B, C, L = x.shape
    Cw, K = w.shape
    if Cw != C or bias.shape[0] != C:
        raise ShapeError(f"depthwise_conv1d: channel mismatch x{x.shape} w{w.shape} b{bias.shape}")
    if left_pad != K - 1:
        raise ParameterError(f"depthwise_conv1d needs left_pad == K - 1 (causal), got {left_pad}")
    if K > L + left_pad:
        raise DegenerateInputError(f"kernel width {K} exceeds padded length {L + left_pad}")

    xp = np.concatenate([np.zeros((B, C, left_pad)), x.data], axis=2)
    out = np.broadcast_to(bias.data[:, None], (B, C, L)).copy()
    for j in range(K):
        out += w.data[:, j, None] * xp[:, :, j : j + L]
    wd = w.data

    def make_backward(needs):
        def bw(g):
            gx = gw = gb = None
            if needs[0]:
                gxp = np.zeros_like(xp)
                for j in range(K):
                    gxp[:, :, j : j + L] += wd[:, j, None] * g
                gx = gxp[:, :, left_pad:]
            if needs[1]:
                gw = np.empty_like(wd)
                for j in range(K):
                    gw[:, j] = (xp[:, :, j : j + L] * g).sum(axis=(0, 2))
            if needs[2]:
                gb = g.sum(axis=(0, 2))
            return gx, gw, gb

        return bw

    return _apply("depthwise_conv1d", out, (x, w, bias), make_backward)


def conv1d(x: Tensor, w: Tensor, bias: Tensor, pad: tuple[int, int]) -> Tensor:
    """Cross-channel 1-d convolution, stride 1.

    ``x`` is ``[B, Cin, L]``, ``w`` is ``[Cout, Cin, K]``; ``pad`` gives
    (left, right) zero padding and the output length is L + left + right
    - K + 1.
    """
    if x.ndim != 3 or w.ndim != 3 or bias.ndim != 1:
        raise ShapeError(f"conv1d: bad ranks x{x.shape} w{w.shape} b{bias.shape}")
    B, Cin, L = x.shape
    Cout, Cw, K = w.shape
    if Cw != Cin or bias.shape[0] != Cout:
        raise ShapeError(f"conv1d: channel mismatch x{x.shape} w{w.shape} b{bias.shape}")
    pl, pr = pad
    Lout = L + pl + pr - K + 1
    if Lout < 1:
        raise DegenerateInputError(f"kernel width {K} exceeds padded length {L + pl + pr}")

    xp = np.concatenate([np.zeros((B, Cin, pl)), x.data, np.zeros((B, Cin, pr))], axis=2)
    out = np.broadcast_to(bias.data[:, None], (B, Cout, Lout)).copy()
    for j in range(K):
        out += np.einsum("oc,bcl->bol", w.data[:, :, j], xp[:, :, j : j + Lout])
    wd = w.data

    def make_backward(needs):
        def bw(g):
            gx = gw = gb = None
            if needs[0]:
                gxp = np.zeros_like(xp)
                for j in range(K):
                    gxp[:, :, j : j + Lout] += np.einsum("oc,bol->bcl", wd[:, :, j], g)
                gx = gxp[:, :, pl : pl + L]
            if needs[1]:
                gw = np.empty_like(wd)
                for j in range(K):
                    gw[:, :, j] = np.einsum("bol,bcl->oc", g, xp[:, :, j : j + Lout])
            if needs[2]:
                gb = g.sum(axis=(0, 2))
            return gx, gw, gb

        return bw

    return _apply("conv1d", out, (x, w, bias), make_backward)


def maxpool1d(x: Tensor, k: int) -> Tensor:
    """Non-overlapping max pooling over the last axis; trailing remainder dropped."""
    if x.ndim != 3:
        raise ShapeError(f"maxpool1d expects [B, C, L], got {x.shape}")
    if k < 1:
        raise ParameterError(f"pool width must be >= 1, got {k}")
    B, C, L = x.shape
    Lout = L // k
    if Lout < 1:
        raise DegenerateInputError(f"pool width {k} exceeds length {L}")
    windows = x.data[:, :, : Lout * k].reshape(B, C, Lout, k)
    arg = windows.argmax(axis=3)
    out = np.take_along_axis(windows, arg[..., None], axis=3)[..., 0]
    ash = x.shape

    def make_backward(needs):
        def bw(g):
            buf = np.zeros(ash)
            view = buf[:, :, : Lout * k].reshape(B, C, Lout, k)
            np.put_along_axis(view, arg[..., None], g[..., None], axis=3)
            return (buf,)

        return bw

    return _apply("maxpool1d", out, (x,), make_backward)


# -- batch normalization -----------------------------------------------------


@dataclass
class BatchNormState:
    """Running statistics for eval-mode batch normalization."""

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1

    @classmethod
    def fresh(cls, channels: int, momentum: float = 0.1) -> "BatchNormState":
        return cls(np.zeros(channels), np.ones(channels), momentum)

    def copy(self) -> "BatchNormState":
        return BatchNormState(self.running_mean.copy(), self.running_var.copy(), self.momentum)


BN_EPS = 1e-5


def batchnorm1d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    state: BatchNormState,
    mode: str,
    update_running: bool = True,
) -> Tensor:
    """Per-channel normalization of ``[B, C, L]`` over the (B, L) axes.

    Train mode normalizes with batch statistics (and, unless suppressed,
    folds them into ``state`` with its momentum: running variance uses the
    unbiased estimate).  Eval mode applies the running statistics as a
    fixed affine map.
    """
    if x.ndim != 3:
        raise ShapeError(f"batchnorm1d expects [B, C, L], got {x.shape}")
    B, C, L = x.shape
    if gamma.shape != (C,) or beta.shape != (C,):
        raise ShapeError(f"batchnorm1d: gamma{gamma.shape}/beta{beta.shape} do not match C={C}")
    if mode not in ("train", "eval"):
        raise ParameterError(f"mode must be 'train' or 'eval', got {mode!r}")

    gd = gamma.data[None, :, None]
    if mode == "train":
        n = B * L
        if n < 2:
            raise DegenerateInputError(f"batchnorm needs B*L >= 2 in train mode, got {n}")
        mean = x.data.mean(axis=(0, 2))
        var = x.data.var(axis=(0, 2))
        if update_running:
            m = state.momentum
            state.running_mean = (1 - m) * state.running_mean + m * mean
            state.running_var = (1 - m) * state.running_var + m * var * n / (n - 1)
        inv_std = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (x.data - mean[None, :, None]) * inv_std[None, :, None]
        out = gd * xhat + beta.data[None, :, None]

        def make_backward(needs):
            def bw(g):
                gx = ggamma = gbeta = None
                if needs[1]:
                    ggamma = (g * xhat).sum(axis=(0, 2))
                if needs[2]:
                    gbeta = g.sum(axis=(0, 2))
                if needs[0]:
                    dxhat = g * gd
                    s1 = dxhat.sum(axis=(0, 2), keepdims=True)
                    s2 = (dxhat * xhat).sum(axis=(0, 2), keepdims=True)
                    gx = (inv_std[None, :, None] / n) * (n * dxhat - s1 - xhat * s2)
                return gx, ggamma, gbeta

            return bw

    else:
        inv_std = 1.0 / np.sqrt(state.running_var + BN_EPS)
        xhat = (x.data - state.running_mean[None, :, None]) * inv_std[None, :, None]
        out = gd * xhat + beta.data[None, :, None]

        def make_backward(needs):
            def bw(g):
                gx = (g * gd * inv_std[None, :, None]) if needs[0] else None
                ggamma = (g * xhat).sum(axis=(0, 2)) if needs[1] else None
                gbeta = g.sum(axis=(0, 2)) if needs[2] else None
                return gx, ggamma, gbeta

            return bw

    return _apply("batchnorm1d", out, (x, gamma, beta), make_backward)


# -- dropout -----------------------------------------------------------------


def dropout(x: Tensor, p: float, mode: str, rng: Rng | None = None) -> Tensor:
    """Inverted dropout: zero with probability ``p``, scale survivors by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"dropout probability must be in [0, 1), got {p}")
    if mode not in ("train", "eval"):
        raise ParameterError(f"mode must be 'train' or 'eval', got {mode!r}")
    if mode == "eval" or p == 0.0:
        return x
    if rng is None:
        raise ParameterError("train-mode dropout with p > 0 requires an Rng")
    scale = 1.0 / (1.0 - p)
    mask = (rng.uniform(x.shape) >= p) * scale
    out = x.data * mask

    def make_backward(needs):
        return lambda g: (g * mask,)

    return _apply("dropout", out, (x,), make_backward)


# -- softmax and loss --------------------------------------------------------


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def make_backward(needs):
        def bw(g):
            dot = (g * out).sum(axis=axis, keepdims=True)
            return (out * (g - dot),)

        return bw

    return _apply("softmax", out, (a,), make_backward)


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under softmax logits.

    Stabilized through log-sum-exp, so logit magnitudes up to ~1e300 stay
    finite.
    """
    if logits.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy expects [B, K] logits, got {logits.shape}")
    labels = np.asarray(labels)
    B, K = logits.shape
    if labels.shape != (B,):
        raise ShapeError(f"labels shape {labels.shape} does not match batch {B}")
    if labels.dtype.kind not in "iu":
        raise DataError(f"labels must be integers, got dtype {labels.dtype}")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= K:
        raise DataError(f"labels must lie in [0, {K}), got range "
                        f"[{labels.min()}, {labels.max()}]")

    m = logits.data.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(logits.data - m).sum(axis=1))
    picked = logits.data[np.arange(B), labels]
    out = np.asarray((lse - picked).mean())

    def make_backward(needs):
        def bw(g):
            p = np.exp(logits.data - lse[:, None])
            p[np.arange(B), labels] -= 1.0
            return (p * (float(g) / B),)

        return bw

    return _apply("softmax_cross_entropy", out, (logits,), make_backward)
