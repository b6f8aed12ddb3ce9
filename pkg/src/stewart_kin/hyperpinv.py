"""Third-order hyperpower iteration for the Moore-Penrose inverse of a 6x6 matrix.

Only matrix-matrix products are used, so the same code maps onto batched
hardware kernels. The update is written in nested (Horner) form::

    Z <- 1/4 Z (13 I - J Z (15 I - J Z (7 I - J Z)))

which gives ``I - J Z_next = 1/4 (3 H^3 + H^4)`` with ``H = I - J Z``.

Convergence policy: a fixed number of steps is run and the residual is checked
afterwards. :class:`~stewart_kin.exceptions.Diverged` is raised when the final
residual is >= 1, or when the residual sits above 1e-6 without decreasing
(by more than 1e-12) for 5 consecutive steps, which is what a rank-deficient
or numerically singular Jacobian does.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import Diverged, ZeroMatrix

F_MAX = 20
STALL_LEVEL = 1e-6
STALL_DECREASE = 1e-12
STALL_STEPS = 5

_I6 = np.eye(6)


@dataclass
class PinvState:
    z: np.ndarray
    residual: float
    iterations: int
    history: list  # residual after each step, starting with the Z0 residual


def init_z0(j) -> np.ndarray:
    """``J^T / (||J||_1 ||J||_inf)``; spectrally ``||I - J Z0||_2 < 1`` for nonsingular J."""
    j = np.asarray(j, dtype=float)
    scale = np.abs(j).sum(axis=0).max() * np.abs(j).sum(axis=1).max()
    if scale == 0.0:
        raise ZeroMatrix("cannot initialise the pseudoinverse of a zero matrix")
    return j.T / scale


def hyperpower_step(j, z) -> np.ndarray:
    # 4 matrix-matrix products
    jz = j @ z
    inner = 7.0 * _I6 - jz
    inner = 15.0 * _I6 - jz @ inner
    inner = 13.0 * _I6 - jz @ inner
    return 0.25 * (z @ inner)


def residual_norm(j, z) -> float:
    return float(np.linalg.norm(_I6 - j @ z))


def pseudoinverse(j, f_max: int = F_MAX) -> PinvState:
    """Run ``f_max`` hyperpower steps from :func:`init_z0`.

    Raises :class:`Diverged` (carrying the final :class:`PinvState`) when the
    iteration stalls or ends with a residual of 1 or more.
    """
    if f_max < 1:
        raise ValueError("f_max must be >= 1")
    j = np.asarray(j, dtype=float)
    z = init_z0(j)
    r = residual_norm(j, z)
    history = [r]
    stalled = 0
    for f in range(1, f_max + 1):
        z = hyperpower_step(j, z)
        r_new = residual_norm(j, z)
        history.append(r_new)
        if not np.isfinite(r_new):
            raise Diverged("hyperpower iteration produced non-finite values",
                           PinvState(z, r_new, f, history))
        if r_new > STALL_LEVEL and r - r_new <= STALL_DECREASE:
            stalled += 1
            if stalled >= STALL_STEPS:
                raise Diverged(f"residual stalled at {r_new:.3g} after {f} steps",
                               PinvState(z, r_new, f, history))
        else:
            stalled = 0
        r = r_new
    state = PinvState(z, r, f_max, history)
    if r >= 1.0:
        raise Diverged(f"residual {r:.3g} >= 1 after {f_max} steps", state)
    return state
