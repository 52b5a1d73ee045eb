"""Finite-difference gradient oracle.

Kept deliberately independent of the tape machinery: it only calls the
function under test on perturbed copies of the input, so agreement with
``backward`` is evidence rather than tautology.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tape, Tensor, backward


def finite_diff_grad(f, x: Tensor, h: float = 1e-5) -> Tensor:
    """Central-difference gradient of a scalar-valued ``f`` at ``x``.

    ``(f(x + h e_i) - f(x - h e_i)) / 2h`` per element, at 64-bit precision.
    ``f`` must be pure.
    """
    base = x.data.copy()
    grad = np.zeros_like(base)
    flat = base.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(Tensor(base)).item()
        flat[i] = orig - h
        fm = f(Tensor(base)).item()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return Tensor(grad)


def tape_grad(f, x: Tensor) -> Tensor:
    """Reverse-mode gradient of scalar ``f`` at ``x`` via a fresh tape."""
    leaf = Tensor(x.data.copy(), requires_grad=True)
    with Tape() as tape:
        y = f(leaf)
        backward(tape, y)
    g = tape.grad(leaf)
    if g is None:
        return Tensor(np.zeros_like(x.data))
    return g


def max_rel_err(got, want, min_mag: float = 1e-6) -> float:
    """Largest elementwise relative error over entries with |want| > min_mag.

    Entries of negligible reference magnitude are excluded: their relative
    error is dominated by finite-difference roundoff, not by the gradient
    under test.
    """
    got = np.asarray(got.data if isinstance(got, Tensor) else got)
    want = np.asarray(want.data if isinstance(want, Tensor) else want)
    if got.shape != want.shape:
        raise ValueError(f"shape mismatch {got.shape} vs {want.shape}")
    mask = np.abs(want) > min_mag
    if not mask.any():
        return 0.0
    return float(np.max(np.abs(got - want)[mask] / np.abs(want)[mask]))


def check_grad(f, x: Tensor, tol: float = 1e-4, h: float = 1e-5) -> tuple[bool, float]:
    """Compare reverse-mode and finite-difference gradients of ``f`` at ``x``."""
    err = max_rel_err(tape_grad(f, x), finite_diff_grad(f, x, h))
    return err < tol, err
