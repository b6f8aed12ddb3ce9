"""Newton-Raphson forward kinematics on twist coordinates.

The unknown is the twist ``xi = log(T)^v`` (translation part first). Each outer
iteration evaluates the leg residual, a central-difference Jacobian, and
replaces ``J^-1`` with the hyperpower pseudoinverse::

    xi <- xi - Z(xi) F(xi)

Iteration stops once ``||xi_next - xi||_1 < gamma``. That norm mixes mm and
rad exactly as the twist does; choose ``gamma`` with that in mind.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import hyperpinv
from .exceptions import Diverged
from .liegroup import se3_exp
from .platform import PlatformConfig

GAMMA = 1e-4
Z_MAX = 100
FD_STEP = 1e-6


@dataclass(frozen=True, eq=False)
class FkObjective:
    cfg: PlatformConfig
    target_los: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "target_los", np.asarray(self.target_los, dtype=float).reshape(6))


@dataclass
class SolveReport:
    xi_final: np.ndarray
    converged: bool
    outer_iterations: int
    final_step_norm: float
    singular_flag: bool
    step_norms: list

    @property
    def pose(self) -> np.ndarray:
        return se3_exp(self.xi_final)


def residual(obj: FkObjective, xi) -> np.ndarray:
    pose = se3_exp(xi)
    legs = pose[:3, :3] @ obj.cfg.b_legs.T
    legs += pose[:3, 3, None] - obj.cfg.a.T
    return np.sqrt(np.einsum("ij,ij->j", legs, legs)) - obj.cfg.l0 - obj.target_los


def jacobian(obj: FkObjective, xi, h: float = FD_STEP) -> np.ndarray:
    """Central-difference Jacobian of :func:`residual`, one column per twist coordinate."""
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    xi = np.asarray(xi, dtype=float)
    jac = np.empty((6, 6))
    for k in range(6):
        dx = np.zeros(6)
        dx[k] = h
        jac[:, k] = (residual(obj, xi + dx) - residual(obj, xi - dx)) / (2.0 * h)
    return jac


def refine(obj: FkObjective, xi0, gamma: float = GAMMA, z_max: int = Z_MAX,
           f_max: int = hyperpinv.F_MAX, h: float = FD_STEP) -> SolveReport:
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    xi = np.array(xi0, dtype=float).reshape(6)
    steps = []
    step_norm = float("inf")
    for z in range(1, z_max + 1):
        f_val = residual(obj, xi)
        try:
            state = hyperpinv.pseudoinverse(jacobian(obj, xi, h), f_max)
        except Diverged:
            return SolveReport(xi, False, z, step_norm, True, steps)
        step = state.z @ f_val
        step_norm = float(np.abs(step).sum())
        if not np.isfinite(step_norm):
            return SolveReport(xi, False, z, step_norm, False, steps)
        xi = xi - step
        steps.append(step_norm)
        if step_norm < gamma:
            return SolveReport(xi, True, z, step_norm, False, steps)
    return SolveReport(xi, False, z_max, step_norm, False, steps)


def refine_batch(objs, xi0s, gamma: float = GAMMA, z_max: int = Z_MAX,
                 f_max: int = hyperpinv.F_MAX, h: float = FD_STEP,
                 n_jobs: int | None = None) -> list[SolveReport]:
    """Refine independent problems on a thread pool; results follow input order."""
    objs = list(objs)
    xi0s = list(xi0s)
    if len(objs) != len(xi0s) or not objs:
        raise ValueError("need equal-length, non-empty objective and start lists")

    def run(pair):
        return refine(pair[0], pair[1], gamma, z_max, f_max, h)

    if n_jobs == 1:
        return [run(p) for p in zip(objs, xi0s)]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(run, zip(objs, xi0s)))
