"""Plain-MLP baseline: leg displacements ``l_os`` (6) to ``x, y, z, alpha, beta, gamma``.

Each hidden block is ``dense -> batch norm -> GELU``; the output layer is a
dense map followed by a fixed affine rescale (training-set mean and standard
deviation per target, stored as buffers) so the raw outputs start at the
right scale. The loss is the unweighted mean squared error over the six
targets in their natural units (mm and rad), i.e. the usual Euler-angle MSE
regression without any translation/rotation balancing. Batch-norm running
statistics use momentum 0.1 and the unbiased batch variance.
"""

from __future__ import annotations

import numpy as np

from .. import liegroup
from . import autodiff as ad
from .disgnet import NetParams

BN_MOMENTUM = 0.1
BN_EPS = 1e-5


def param_shapes(dims: dict) -> dict:
    shapes = {}
    fan_in = dims["n_inputs"]
    for layer in range(dims["layers"]):
        shapes[f"l{layer}.w"] = (fan_in, dims["hidden"])
        shapes[f"l{layer}.b"] = (dims["hidden"],)
        shapes[f"bn{layer}.gamma"] = (dims["hidden"],)
        shapes[f"bn{layer}.beta"] = (dims["hidden"],)
        fan_in = dims["hidden"]
    shapes["out.w"] = (fan_in, 6)
    shapes["out.b"] = (6,)
    return shapes


def init_params(hidden=64, layers=2, seed=0, target_mean=None, target_std=None) -> NetParams:
    dims = {"hidden": hidden, "layers": layers, "n_inputs": 6}
    rng = np.random.default_rng(seed)
    values = {}
    fan_in = None
    for name, shape in param_shapes(dims).items():
        if name.endswith(".gamma"):
            values[name] = np.ones(shape)
            continue
        if name.endswith(".beta"):
            values[name] = np.zeros(shape)
            continue
        if name.endswith(".w"):
            fan_in = shape[0]
        bound = 1.0 / np.sqrt(fan_in)
        values[name] = rng.uniform(-bound, bound, size=shape)
    buffers = {}
    for layer in range(layers):
        buffers[f"bn{layer}.mean"] = np.zeros(hidden)
        buffers[f"bn{layer}.var"] = np.ones(hidden)
    buffers["target_mean"] = np.zeros(6) if target_mean is None else np.asarray(target_mean, float)
    buffers["target_std"] = np.ones(6) if target_std is None else np.asarray(target_std, float)
    return NetParams("plain-mlp", dims, values, buffers)


def pose_targets(poses) -> np.ndarray:
    """``(n, 6)`` regression targets ``x, y, z, alpha, beta, gamma`` from poses."""
    poses = np.asarray(poses, dtype=float).reshape(-1, 4, 4)
    return np.concatenate([poses[:, :3, 3], liegroup.rotation_to_euler(poses[:, :3, :3])], axis=1)


def _forward(x: np.ndarray, p: dict, params: NetParams, training: bool):
    """Returns the standardised output tensor and per-layer batch statistics."""
    h = ad.Tensor(x)
    stats = []
    for layer in range(params.dims["layers"]):
        h = ad.dense(h, p[f"l{layer}.w"], p[f"l{layer}.b"])
        gamma, beta = p[f"bn{layer}.gamma"], p[f"bn{layer}.beta"]
        if training:
            h, mu, var = ad.batch_norm(h, gamma, beta, BN_EPS)
            stats.append((mu, var, x.shape[0]))
        else:
            inv = 1.0 / np.sqrt(params.buffers[f"bn{layer}.var"] + BN_EPS)
            h = ad.affine_const(h, inv, -params.buffers[f"bn{layer}.mean"] * inv)
            h = ad.add(ad.mul(h, gamma), beta)
        h = ad.gelu(h)
    return ad.dense(h, p["out.w"], p["out.b"]), stats


def predict(los, params: NetParams):
    """Return ``(poses (n,4,4), targets (n,6))`` using running batch-norm statistics."""
    x = np.atleast_2d(np.asarray(los, dtype=float))
    p = {k: ad.Tensor(v) for k, v in params.values.items()}
    out, _ = _forward(x, p, params, training=False)
    y = out.data * params.buffers["target_std"] + params.buffers["target_mean"]
    rot = liegroup.euler_to_rotation(y[:, 3], y[:, 4], y[:, 5])
    poses = np.tile(np.eye(4), (x.shape[0], 1, 1))
    poses[:, :3, :3] = rot
    poses[:, :3, 3] = y[:, :3]
    return poses, y


def loss_and_grad(los, params: NetParams, gt_poses, update_stats: bool = False):
    """Training-mode MSE over raw targets and its gradient.

    With ``update_stats`` the batch-norm running statistics in ``params.buffers``
    are updated in place.
    """
    x = np.atleast_2d(np.asarray(los, dtype=float))
    if x.shape[0] < 2:
        raise ValueError("batch normalisation needs at least 2 samples per batch")
    target = pose_targets(gt_poses)
    p = {k: ad.parameter(v) for k, v in params.values.items()}
    out, stats = _forward(x, p, params, training=True)
    y = ad.affine_const(out, params.buffers["target_std"], params.buffers["target_mean"])
    diff = ad.add(y, ad.Tensor(-target))
    total = ad.mean(ad.square(diff), axis=(0, 1))
    total.backward()
    if update_stats:
        for layer, (mu, var, n) in enumerate(stats):
            for key, value in ((f"bn{layer}.mean", mu), (f"bn{layer}.var", var * n / (n - 1))):
                params.buffers[key] = (1 - BN_MOMENTUM) * params.buffers[key] + BN_MOMENTUM * value
    grads = {k: (v.grad if v.grad is not None else np.zeros_like(v.data)) for k, v in p.items()}
    return float(total.data), grads
