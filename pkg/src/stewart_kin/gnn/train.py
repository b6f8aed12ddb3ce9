"""Mini-batch Adam training for both network architectures.

Each epoch draws a fresh permutation from ``numpy.random.default_rng`` seeded
with ``(seed, epoch)``, so a run is reproducible from its config alone and
independent of how many epochs preceded it. Gradients for a batch come from
one vectorised backward pass, which keeps the reduction order fixed.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..exceptions import NonFiniteLoss
from . import disgnet, mlp
from .disgnet import NetParams

ARCHS = ("disgnet", "plain-mlp")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta: float = disgnet.BETA
    batch_size: int = 4000
    epochs: int = 1200
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    val_e_trans: float
    val_e_rot: float


@dataclass
class TrainLog:
    arch: str
    config: dict
    epochs: list = field(default_factory=list)

    def lines(self) -> list[str]:
        out = ["epoch\tmean_loss\tval_e_trans_mm\tval_e_rot"]
        for r in self.epochs:
            values = (float(r.mean_loss), float(r.val_e_trans), float(r.val_e_rot))
            out.append(f"{r.epoch}\t" + "\t".join(repr(v) for v in values))
        return out

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("\n".join(self.lines()) + "\n")


class Adam:
    def __init__(self, params: NetParams, cfg: TrainConfig):
        self.cfg = cfg
        self.m = params.zeros_like()
        self.v = params.zeros_like()
        self.step_count = 0

    def step(self, params: NetParams, grads: dict) -> None:
        c = self.cfg
        self.step_count += 1
        corr1 = 1.0 - c.adam_beta1 ** self.step_count
        corr2 = 1.0 - c.adam_beta2 ** self.step_count
        for name, g in grads.items():
            m, v = self.m[name], self.v[name]
            m *= c.adam_beta1
            m += (1.0 - c.adam_beta1) * g
            v *= c.adam_beta2
            v += (1.0 - c.adam_beta2) * g * g
            params.values[name] = params.values[name] - c.learning_rate * (m / corr1) / (
                np.sqrt(v / corr2) + c.adam_eps)


def default_params(arch: str, dataset, seed: int = 0, hidden: int | None = None) -> NetParams:
    """Fresh parameters sized for ``dataset``.

    DisGNet gets an RBF cutoff of 1.5 times the longest assembly leg and a
    translation scale equal to the standard deviation of the training
    translations; the plain-MLP gets target standardisation statistics.
    """
    if arch == "disgnet":
        x = dataset.x
        t_scale = float(x.std()) if len(dataset) > 1 and x.std() > 0 else 1.0
        return disgnet.init_params(hidden=hidden or 16, seed=seed,
                                   rbf_cutoff=1.5 * float(dataset.config.l0.max()), t_scale=t_scale)
    if arch == "plain-mlp":
        y = mlp.pose_targets(dataset.poses)
        std = y.std(axis=0) if len(dataset) > 1 else np.ones(6)
        return mlp.init_params(hidden=hidden or 64, seed=seed, target_mean=y.mean(axis=0),
                               target_std=np.where(std > 0, std, 1.0))
    raise ValueError(f"arch must be one of {ARCHS}")


def predict_poses(params: NetParams, dataset) -> np.ndarray:
    if params.arch == "disgnet":
        return disgnet.predict(dataset.distance_matrices, params)[0]
    return mlp.predict(dataset.los, params)[0]


def _batch_step(params: NetParams, dataset, index: np.ndarray, beta: float):
    if params.arch == "disgnet":
        e = dataset.distance_matrices[index]
        return disgnet.loss_and_grad(e, params, dataset.poses[index], beta)
    return mlp.loss_and_grad(dataset.los[index], params, dataset.poses[index], update_stats=True)


def train(dataset, cfg: TrainConfig, arch: str = "disgnet", params: NetParams | None = None,
          val_dataset=None, hidden: int | None = None, progress=None) -> tuple[NetParams, TrainLog]:
    """Train ``arch`` on ``dataset``; returns the final parameters and the epoch log.

    Validation metrics are computed on ``val_dataset`` (the training set when
    omitted). ``progress`` is called with each :class:`EpochRecord`.
    """
    from .. import evalbench

    if arch not in ARCHS:
        raise ValueError(f"arch must be one of {ARCHS}")
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    if params is None:
        params = default_params(arch, dataset, cfg.seed, hidden)
    else:
        params = params.copy()
    if params.arch != arch:
        raise ValueError(f"parameters are for {params.arch!r}, not {arch!r}")
    val = dataset if val_dataset is None else val_dataset
    val_poses = val.poses
    opt = Adam(params, cfg)
    log = TrainLog(arch, asdict(cfg))
    n = len(dataset)
    batch = min(cfg.batch_size, n)
    n_batches = math.ceil(n / batch)
    for epoch in range(1, cfg.epochs + 1):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(n)
        total, weight = 0.0, 0
        for b in range(n_batches):
            index = order[b * batch:(b + 1) * batch]
            if arch == "plain-mlp" and index.size < 2:
                continue
            value, grads = _batch_step(params, dataset, index, cfg.beta)
            if not (math.isfinite(value) and all(np.all(np.isfinite(g)) for g in grads.values())):
                raise NonFiniteLoss(b, epoch)
            opt.step(params, grads)
            total += value * index.size
            weight += index.size
        pred = predict_poses(params, val)
        record = EpochRecord(epoch, total / weight, evalbench.e_trans(pred, val_poses),
                             evalbench.e_rot(pred, val_poses))
        log.epochs.append(record)
        if progress is not None:
            progress(record)
    return params, log
