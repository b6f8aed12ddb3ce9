"""Distance-matrix graph network over node-pair (2-tuple) features.

Pipeline for a batch of distance matrices ``E`` of shape ``(B, N, N)``:

1. initialisation: tuple ``(u, v)`` gets
   ``f_d1(emb(u)) * f_d2(emb(v)) * f_e12(rbf(E[u, v])) * f_e21(rbf(E[v, u]))``;
   zero entries (non-edges) go through the same RBF path, so ``rbf(0)`` acts as
   a learnable "no edge" code.
2. message passing (2-FWL, matrix-product form): per channel ``c``
   ``h <- h + gelu([h, A_c @ B_c] W_m + b_m)`` with ``A = gelu(h W_a + b_a)`` and
   ``B = gelu(h W_b + b_b)`` viewed as ``N x N`` matrices. Cost ``O(N^3 H)``.
3. head: mean-pool all ``N^2`` tuples, two dense layers to 12 numbers
   ``t (3) | q (9)``; rotation is ``svd_orthogonalize(q)`` at inference.

The training loss acts on the raw matrix ``M(q)`` rather than its projection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import liegroup
from ..platform import N_NODES, DistanceGraph
from . import autodiff as ad

INIT_LAYERS = 3
HEAD_LAYERS = 2
BETA = 250.0


@dataclass
class NetParams:
    """Named learnable arrays plus non-learned buffers for one architecture.

    ``values`` keeps the documented parameter order (insertion order).
    """

    arch: str
    dims: dict
    values: dict
    buffers: dict = field(default_factory=dict)

    def zeros_like(self) -> dict:
        return {k: np.zeros_like(v) for k, v in self.values.items()}

    def copy(self) -> "NetParams":
        return NetParams(self.arch, dict(self.dims), {k: v.copy() for k, v in self.values.items()},
                         {k: np.array(v, copy=True) for k, v in self.buffers.items()})

    def n_params(self) -> int:
        return sum(v.size for v in self.values.values())


def param_shapes(dims: dict) -> dict:
    """Parameter names and shapes in checkpoint order."""
    h, hd, he = dims["hidden"], dims["embed_dim"], dims["rbf_dim"]
    n = dims.get("n_nodes", N_NODES)
    shapes = {"emb": (n, hd)}
    for path, width in (("fd1", hd), ("fd2", hd), ("fe12", he), ("fe21", he)):
        fan_in = width
        for layer in range(INIT_LAYERS):
            shapes[f"{path}.w{layer}"] = (fan_in, h)
            shapes[f"{path}.b{layer}"] = (h,)
            fan_in = h
    for r in range(dims["rounds"]):
        shapes[f"mp{r}.wa"] = (h, h)
        shapes[f"mp{r}.ba"] = (h,)
        shapes[f"mp{r}.wb"] = (h, h)
        shapes[f"mp{r}.bb"] = (h,)
        shapes[f"mp{r}.wm"] = (2 * h, h)
        shapes[f"mp{r}.bm"] = (h,)
    shapes["head.w0"] = (h, h)
    shapes["head.b0"] = (h,)
    shapes["head.w1"] = (h, 12)
    shapes["head.b1"] = (12,)
    return shapes


def init_params(hidden=16, embed_dim=8, rbf_dim=16, rounds=1, seed=0, rbf_cutoff=1.0,
                t_scale=1.0, n_nodes=N_NODES) -> NetParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases; standard-normal embeddings."""
    dims = {"hidden": hidden, "embed_dim": embed_dim, "rbf_dim": rbf_dim, "rounds": rounds,
            "n_nodes": n_nodes}
    rng = np.random.default_rng(seed)
    values = {}
    fan_in = None
    for name, shape in param_shapes(dims).items():
        if name == "emb":
            values[name] = rng.standard_normal(shape)
            continue
        if name.split(".")[-1].startswith("w"):
            fan_in = shape[0]
        bound = 1.0 / np.sqrt(fan_in)
        values[name] = rng.uniform(-bound, bound, size=shape)
    buffers = {"rbf_cutoff": np.float64(rbf_cutoff), "t_scale": np.float64(t_scale)}
    return NetParams("disgnet", dims, values, buffers)


def rbf_expand(d, n_basis: int, cutoff: float) -> np.ndarray:
    """Gaussian basis: centres evenly over ``[0, 1]`` after dividing by ``cutoff``."""
    centres = np.linspace(0.0, 1.0, n_basis)
    width = centres[1] - centres[0] if n_basis > 1 else 1.0
    x = (np.asarray(d, dtype=float) / cutoff)[..., None]
    return np.exp(-0.5 * ((x - centres) / width) ** 2)


def _mlp(x: ad.Tensor, p: dict, prefix: str, layers: int) -> ad.Tensor:
    for layer in range(layers):
        x = ad.dense(x, p[f"{prefix}.w{layer}"], p[f"{prefix}.b{layer}"])
        if layer < layers - 1:
            x = ad.gelu(x)
    return x


def _as_tensors(params: NetParams, trainable: bool) -> dict:
    make = ad.parameter if trainable else ad.Tensor
    return {k: make(v) for k, v in params.values.items()}


def _edge_features(e: np.ndarray, p: dict, prefix: str, dims: dict, cutoff: float) -> ad.Tensor:
    mask = e != 0.0
    vals = ad.Tensor(rbf_expand(e[mask], dims["rbf_dim"], cutoff))
    zero = ad.Tensor(rbf_expand(np.zeros(1), dims["rbf_dim"], cutoff))
    return ad.scatter_masked(_mlp(vals, p, prefix, INIT_LAYERS),
                             _mlp(zero, p, prefix, INIT_LAYERS), mask)


def _init_block(e: np.ndarray, node_types: np.ndarray, p: dict, dims: dict,
                cutoff: float) -> ad.Tensor:
    n, h = e.shape[-1], dims["hidden"]
    emb = ad.take_rows(p["emb"], node_types)
    node_u = ad.reshape(_mlp(emb, p, "fd1", INIT_LAYERS), (1, n, 1, h))
    node_v = ad.reshape(_mlp(emb, p, "fd2", INIT_LAYERS), (1, 1, n, h))
    f_uv = _edge_features(e, p, "fe12", dims, cutoff)
    f_vu = ad.swap_nodes(_edge_features(e, p, "fe21", dims, cutoff))
    return ad.mul(ad.mul(node_u, node_v), ad.mul(f_uv, f_vu))


def _message_round(h: ad.Tensor, p: dict, r: int) -> ad.Tensor:
    a = ad.gelu(ad.dense(h, p[f"mp{r}.wa"], p[f"mp{r}.ba"]))
    b = ad.gelu(ad.dense(h, p[f"mp{r}.wb"], p[f"mp{r}.bb"]))
    prod = ad.channel_matmul(a, b)
    # [h, prod] W_m without materialising the concatenation
    w_h, w_p = ad.split_rows(p[f"mp{r}.wm"], h.shape[-1])
    mixed = ad.gelu(ad.add(ad.dense(h, w_h, p[f"mp{r}.bm"]), ad.dense(prod, w_p)))
    return ad.add(h, mixed)


def _head(h: ad.Tensor, p: dict) -> ad.Tensor:
    pooled = ad.mean(h, axis=(1, 2))
    return _mlp(pooled, p, "head", HEAD_LAYERS)


def _batch(e, node_types=None) -> tuple[np.ndarray, np.ndarray]:
    """Normalise graph input to ``(B, N, N)`` distances plus ``(N,)`` node types.

    Accepts a :class:`DistanceGraph`, one ``(N, N)`` matrix, a ``(B, N, N)``
    stack or vectorised rows ``(B, N*N)``.
    """
    if isinstance(e, DistanceGraph):
        node_types = e.node_types if node_types is None else node_types
        e = e.distances
    e = np.asarray(e, dtype=float)
    if e.ndim == 1 or (e.ndim == 2 and e.shape[0] != e.shape[1]):
        n = int(round(np.sqrt(e.shape[-1])))
        e = e.reshape(e.shape[:-1] + (n, n))
    if e.ndim == 2:
        e = e[None]
    if node_types is None:
        node_types = np.arange(e.shape[-1])
    return e, np.asarray(node_types, dtype=int)


def init_features(e, params: NetParams, node_types=None) -> np.ndarray:
    """Tuple features ``(B, N, N, H)`` for distance matrices ``(B, N, N)`` or ``(N, N)``."""
    e, node_types = _batch(e, node_types)
    p = _as_tensors(params, False)
    return _init_block(e, node_types, p, params.dims, float(params.buffers["rbf_cutoff"])).data


def message_pass(h, params: NetParams, round_index: int = 0) -> np.ndarray:
    p = _as_tensors(params, False)
    h = np.asarray(h, dtype=float)
    return _message_round(ad.Tensor(h), p, round_index).data


def _forward(e: np.ndarray, node_types: np.ndarray, p: dict,
             params: NetParams) -> tuple[ad.Tensor, ad.Tensor]:
    h = _init_block(e, node_types, p, params.dims, float(params.buffers["rbf_cutoff"]))
    for r in range(params.dims["rounds"]):
        h = _message_round(h, p, r)
    out = _head(h, p)
    t = ad.scale(ad.slice_last(out, 0, 3), float(params.buffers["t_scale"]))
    q = ad.slice_last(out, 3, 12)
    return t, q


def predict(e, params: NetParams, node_types=None):
    """Return ``(poses (B,4,4), q (B,9), t (B,3))``."""
    e, node_types = _batch(e, node_types)
    t, q = _forward(e, node_types, _as_tensors(params, False), params)
    rot = liegroup.svd_orthogonalize(q.data)
    poses = np.tile(np.eye(4), (e.shape[0], 1, 1))
    poses[:, :3, :3] = rot
    poses[:, :3, 3] = t.data
    return poses, q.data, t.data


def loss_terms(t: ad.Tensor, q: ad.Tensor, gt_poses: np.ndarray, beta: float) -> ad.Tensor:
    """Per-sample ``||t - t_gt||_2 + beta ||M(q) - R_gt||_F`` as a tensor of shape (B,)."""
    t_gt = ad.Tensor(gt_poses[:, :3, 3])
    r_gt = ad.Tensor(gt_poses[:, :3, :3].reshape(-1, 9))
    trans = ad.row_norm(t - t_gt)
    rot = ad.row_norm(q - r_gt)
    return ad.add(trans, ad.scale(rot, beta))


def loss(pred_t, pred_q, gt_pose, beta: float = BETA) -> float:
    """Weighted pose loss for one sample (or the mean over a batch)."""
    pred_t = np.atleast_2d(np.asarray(pred_t, dtype=float))
    pred_q = np.atleast_2d(np.asarray(pred_q, dtype=float))
    gt = np.asarray(gt_pose, dtype=float).reshape(-1, 4, 4)
    terms = loss_terms(ad.Tensor(pred_t), ad.Tensor(pred_q), gt, beta)
    return float(terms.data.mean())


def loss_and_grad(e, params: NetParams, gt_poses, beta: float = BETA,
                  node_types=None) -> tuple[float, dict]:
    """Mean batch loss and its exact gradient for every parameter."""
    e, node_types = _batch(e, node_types)
    gt = np.asarray(gt_poses, dtype=float).reshape(-1, 4, 4)
    p = _as_tensors(params, True)
    t, q = _forward(e, node_types, p, params)
    total = ad.mean(loss_terms(t, q, gt, beta), axis=0)
    total.backward()
    grads = {k: (v.grad if v.grad is not None else np.zeros_like(v.data)) for k, v in p.items()}
    return float(total.data), grads


def backward(e, params: NetParams, gt_poses, beta: float = BETA, node_types=None) -> dict:
    return loss_and_grad(e, params, gt_poses, beta, node_types)[1]


def batch_loss(e, params: NetParams, gt_poses, beta: float = BETA, node_types=None) -> float:
    e, node_types = _batch(e, node_types)
    gt = np.asarray(gt_poses, dtype=float).reshape(-1, 4, 4)
    t, q = _forward(e, node_types, _as_tensors(params, False), params)
    return float(loss_terms(t, q, gt, beta).data.mean())
