"""Pose-error metrics, accuracy buckets and the two-stage benchmark harness.

Rotation errors are kept in Frobenius-geodesic units ``||log(R R_gt^T)||_F``
(``sqrt(2)`` times the angle); the ``*_deg`` views divide by ``sqrt(2)`` and
convert to degrees. Medians use the lower of the two middle values when the
count is even.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np

from . import liegroup, nrsolver
from .exceptions import EmptySet
from .platform import PlatformConfig, inverse_kinematics

THRESHOLDS = (0.5, 1.0, 1.5, 2.0, 3.0)


def _translations(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-2:] == (4, 4):
        x = x[..., :3, 3]
    x = x.reshape(-1, 3)
    if x.shape[0] == 0:
        raise EmptySet("metric over an empty set")
    return x


def _rotations(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if r.shape[-2:] == (4, 4):
        r = r[..., :3, :3]
    r = r.reshape(-1, 3, 3)
    if r.shape[0] == 0:
        raise EmptySet("metric over an empty set")
    return r


def _paired(a, b):
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"length mismatch: {a.shape[0]} predictions vs {b.shape[0]} references")
    return a, b


def trans_errors(preds, gts) -> np.ndarray:
    p, g = _paired(_translations(preds), _translations(gts))
    return np.linalg.norm(p - g, axis=1)


def rot_errors(preds, gts) -> np.ndarray:
    p, g = _paired(_rotations(preds), _rotations(gts))
    return liegroup.geodesic_distance(p, g)


def ik_errors(cfg: PlatformConfig, pred_poses, target_los) -> np.ndarray:
    poses = np.asarray(pred_poses, dtype=float).reshape(-1, 4, 4)
    los = np.asarray(target_los, dtype=float).reshape(-1, 6)
    if poses.shape[0] == 0:
        raise EmptySet("metric over an empty set")
    _paired(poses, los)
    return np.linalg.norm(inverse_kinematics(cfg, poses).los - los, axis=1)


def e_trans(preds, gts) -> float:
    """Mean translation error in mm; accepts poses or 3-vectors."""
    return float(trans_errors(preds, gts).mean())


def e_rot(preds, gts, degrees: bool = False) -> float:
    """Mean Frobenius-geodesic rotation error; ``degrees=True`` gives the angle view."""
    value = float(rot_errors(preds, gts).mean())
    return float(liegroup.geodesic_to_degrees(value)) if degrees else value


def e_ik(cfg: PlatformConfig, pred_poses, target_los) -> float:
    """Mean norm of the leg-displacement mismatch ``IK(T) - l_os`` in mm."""
    return float(ik_errors(cfg, pred_poses, target_los).mean())


def accuracy_buckets(errors, thresholds=THRESHOLDS) -> np.ndarray:
    """Percentage of ``errors`` strictly below each threshold."""
    errors = np.asarray(errors, dtype=float).ravel()
    thresholds = np.asarray(thresholds, dtype=float)
    if np.any(np.diff(thresholds) < 0):
        raise ValueError("thresholds must be sorted ascending")
    if errors.size == 0:
        raise EmptySet("accuracy over an empty set")
    return np.array([100.0 * np.count_nonzero(errors < t) / errors.size for t in thresholds])


def lower_median(values) -> float:
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise EmptySet("median of an empty set")
    return float(v[(v.size - 1) // 2])


@dataclass
class EvalSummary:
    count: int
    e_trans: float
    e_rot: float
    e_rot_deg: float
    e_ik: float
    median_trans: float
    median_rot_deg: float
    thresholds: tuple
    acc_trans: tuple  # percent below each threshold, mm
    acc_rot: tuple  # percent below each threshold, degrees

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class BenchReport:
    count: int
    gamma: float
    total_time: float
    n_singular: int
    n_below_precision: int

    @property
    def average_time(self) -> float:
        return self.total_time / self.count

    @property
    def success_rate(self) -> float:
        return (1.0 - (self.n_singular + self.n_below_precision) / self.count) * 100.0

    def as_dict(self) -> dict:
        out = asdict(self)
        out["average_time"] = self.average_time
        out["success_rate"] = self.success_rate
        return out


def success_rate(count: int, n_singular: int, n_below_precision: int) -> float:
    return (1.0 - (n_singular + n_below_precision) / count) * 100.0


def average_time(total_time: float, count: int) -> float:
    return total_time / count


def summarize(cfg: PlatformConfig, pred_poses, gt_poses, target_los,
              thresholds=THRESHOLDS) -> EvalSummary:
    t_err = trans_errors(pred_poses, gt_poses)
    r_err = rot_errors(pred_poses, gt_poses)
    r_deg = liegroup.geodesic_to_degrees(r_err)
    return EvalSummary(
        count=int(t_err.size),
        e_trans=float(t_err.mean()),
        e_rot=float(r_err.mean()),
        e_rot_deg=float(liegroup.geodesic_to_degrees(r_err.mean())),
        e_ik=e_ik(cfg, pred_poses, target_los),
        median_trans=lower_median(t_err),
        median_rot_deg=lower_median(r_deg),
        thresholds=tuple(float(t) for t in thresholds),
        acc_trans=tuple(accuracy_buckets(t_err, thresholds).tolist()),
        acc_rot=tuple(accuracy_buckets(r_deg, thresholds).tolist()),
    )


@dataclass
class BenchResult:
    report: BenchReport
    summary: EvalSummary
    initial_summary: EvalSummary | None
    solve_reports: list
    refined_poses: np.ndarray

    @property
    def failures(self) -> list[int]:
        return [i for i, r in enumerate(self.solve_reports) if r.singular_flag or not r.converged]


def run_benchmark(dataset, params=None, gamma: float = nrsolver.GAMMA, n_jobs: int | None = 1,
                  z_max: int = nrsolver.Z_MAX, thresholds=THRESHOLDS) -> BenchResult:
    """Network initialisation followed by Newton-Raphson refinement for every sample.

    ``params=None`` starts every solve from the zero twist (solver-only mode).
    The wall clock covers the network forward pass and the refinement, not
    data or model loading.
    """
    from .gnn.train import predict_poses

    cfg = dataset.config
    los = dataset.los
    start = time.perf_counter()
    if params is None:
        init_poses = None
        xi0 = np.zeros((len(dataset), 6))
    else:
        init_poses = predict_poses(params, dataset)
        xi0 = np.stack([liegroup.se3_log(p) for p in init_poses])
    objs = [nrsolver.FkObjective(cfg, row) for row in los]
    reports = nrsolver.refine_batch(objs, xi0, gamma=gamma, z_max=z_max, n_jobs=n_jobs)
    total = time.perf_counter() - start
    refined = np.stack([r.pose for r in reports])
    n_singular = sum(r.singular_flag for r in reports)
    n_below = sum((not r.converged) and (not r.singular_flag) for r in reports)
    bench = BenchReport(len(dataset), gamma, total, int(n_singular), int(n_below))
    gt = dataset.poses
    summary = summarize(cfg, refined, gt, los, thresholds)
    initial = None if init_poses is None else summarize(cfg, init_poses, gt, los, thresholds)
    return BenchResult(bench, summary, initial, reports, refined)


def _format(value) -> str:
    if isinstance(value, (tuple, list)):
        return ",".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def write_report(path, sections: dict) -> None:
    """Key-value text report; ``sections`` maps a prefix to a flat dict."""
    lines = []
    for prefix, values in sections.items():
        for key, value in values.items():
            lines.append(f"{prefix}.{key} = {_format(value)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_report(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            if "=" in line:
                key, value = line.split("=", 1)
                out[key.strip()] = value.strip()
    return out


def write_errors_tsv(path, cfg: PlatformConfig, pred_poses, gt_poses, target_los) -> None:
    t_err = trans_errors(pred_poses, gt_poses)
    r_deg = liegroup.geodesic_to_degrees(rot_errors(pred_poses, gt_poses))
    ik = ik_errors(cfg, pred_poses, target_los)
    with open(path, "w") as fh:
        fh.write("index\ttrans_mm\trot_deg\tik_mm\n")
        for i, (a, b, c) in enumerate(zip(t_err.tolist(), r_deg.tolist(), ik.tolist())):
            fh.write(f"{i}\t{a!r}\t{b!r}\t{c!r}\n")


def write_failures(path, result: BenchResult, dataset) -> None:
    """One TSV row per failed sample with its flags, start/end twists and target."""
    with open(path, "w") as fh:
        fh.write("index\tsingular\tconverged\touter_iterations\tfinal_step_norm\t"
                 "xi_final\ttarget_los\tgt_pose\n")
        for i in result.failures:
            r = result.solve_reports[i]
            fh.write("\t".join([
                str(i), str(int(r.singular_flag)), str(int(r.converged)), str(r.outer_iterations),
                repr(float(r.final_step_norm)), _format(r.xi_final.tolist()),
                _format(dataset.los[i].tolist()), _format(dataset.poses[i].ravel().tolist()),
            ]) + "\n")
