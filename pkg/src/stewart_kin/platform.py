"""6-6 Gough-Stewart geometry, inverse kinematics and the distance graph.

Frames: ``{A}`` sits at the home position of the moving-platform centre, so the
base hinges lie at ``z = -height``; ``{B}`` is attached to the moving platform
with its hinges at ``z = 0``. The identity pose is therefore the assembly pose.

Graph nodes are ordered base hinges 0-5 then moving hinges 6-11. Leg ``s``
joins base hinge ``s`` to moving hinge ``pairing[s]`` (node ``6 + pairing[s]``).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

N_LEGS = 6
N_NODES = 12
EDGE_MODES = ("legs", "ring")
CONFIG_FORMAT = "gsp-config/1"


class LegLengths(NamedTuple):
    lbar: np.ndarray  # current leg lengths, mm
    los: np.ndarray  # displacement from the assembly lengths, mm


@dataclass(frozen=True, eq=False)
class PlatformConfig:
    """Hinge geometry of a 6-6 platform (all lengths in mm)."""

    a: np.ndarray
    b: np.ndarray
    l0: np.ndarray = None
    pairing: tuple = (0, 1, 2, 3, 4, 5)
    edge_mode: str = "legs"
    base_radius: float = float("nan")
    platform_radius: float = float("nan")
    generator: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        a = np.array(self.a, dtype=float).reshape(N_LEGS, 3)
        b = np.array(self.b, dtype=float).reshape(N_LEGS, 3)
        pairing = tuple(int(p) for p in self.pairing)
        if sorted(pairing) != list(range(N_LEGS)):
            raise ValueError(f"leg pairing must be a permutation of 0..5, got {pairing}")
        if self.edge_mode not in EDGE_MODES:
            raise ValueError(f"edge_mode must be one of {EDGE_MODES}, got {self.edge_mode!r}")
        assembled = np.linalg.norm(b[list(pairing)] - a, axis=1)
        if self.l0 is None:
            l0 = assembled
        else:
            l0 = np.array(self.l0, dtype=float).reshape(N_LEGS)
            if not np.allclose(l0, assembled, rtol=0.0, atol=1e-9 * max(1.0, assembled.max())):
                raise ValueError("l0 is inconsistent with the hinge geometry at the identity pose")
        legs = {tuple(np.round(np.concatenate([a[s], b[pairing[s]]]), 12)) for s in range(N_LEGS)}
        if len(legs) != N_LEGS:
            raise ValueError("two legs share the same (a_s, b_s) hinge pair")
        for arr in (a, b, l0):
            arr.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "l0", l0)
        object.__setattr__(self, "pairing", pairing)

    @property
    def b_legs(self) -> np.ndarray:
        """Moving hinge of each leg, in leg order."""
        return self.b[list(self.pairing)]

    def to_dict(self) -> dict:
        out = {
            "format": CONFIG_FORMAT,
            "base_points": self.a.tolist(),
            "platform_points": self.b.tolist(),
            "initial_lengths": self.l0.tolist(),
            "leg_pairing": list(self.pairing),
            "edge_mode": self.edge_mode,
        }
        if not math.isnan(self.base_radius):
            out["base_radius"] = self.base_radius
        if not math.isnan(self.platform_radius):
            out["platform_radius"] = self.platform_radius
        if self.generator is not None:
            out["generator"] = dict(self.generator)
        return out

    def config_hash(self) -> str:
        """sha256 over the geometry fields in canonical JSON."""
        payload = {k: v for k, v in self.to_dict().items() if k != "generator"}
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


def symmetric_config(base_radius=400.0, platform_radius=250.0, half_angle_deg=15.0,
                     height=500.0, edge_mode="legs", pairing=None) -> PlatformConfig:
    """Three-fold symmetric 6-6 layout.

    Base hinge pairs sit at ``+-half_angle`` around 0, 120 and 240 degrees; the
    moving hinge pairs sit around 60, 180 and 300 degrees, and each leg joins
    neighbouring hinges so the legs alternate in tilt.
    """
    delta = math.radians(half_angle_deg)
    base_angles, top_angles = [], []
    for k in range(3):
        c = math.radians(120.0 * k)
        base_angles += [c - delta, c + delta]
        top_angles += [c - math.radians(60.0) + delta, c + math.radians(60.0) - delta]
    a = [(base_radius * math.cos(t), base_radius * math.sin(t), -height) for t in base_angles]
    b = [(platform_radius * math.cos(t), platform_radius * math.sin(t), 0.0) for t in top_angles]
    generator = {"base_radius": base_radius, "platform_radius": platform_radius,
                 "half_angle_deg": half_angle_deg, "height": height}
    return PlatformConfig(a=a, b=b, pairing=tuple(range(N_LEGS)) if pairing is None else pairing,
                          edge_mode=edge_mode, base_radius=base_radius,
                          platform_radius=platform_radius, generator=generator)


def default_config() -> PlatformConfig:
    return symmetric_config()


def config_from_dict(data: dict) -> PlatformConfig:
    fmt = data.get("format", CONFIG_FORMAT)
    if fmt != CONFIG_FORMAT:
        raise ValueError(f"unsupported config format {fmt!r}")
    edge_mode = data.get("edge_mode", "legs")
    pairing = data.get("leg_pairing")
    if "base_points" in data:
        return PlatformConfig(
            a=data["base_points"], b=data["platform_points"], l0=data.get("initial_lengths"),
            pairing=tuple(range(N_LEGS)) if pairing is None else tuple(pairing),
            edge_mode=edge_mode, base_radius=data.get("base_radius", float("nan")),
            platform_radius=data.get("platform_radius", float("nan")),
            generator=data.get("generator"),
        )
    if "generator" in data:
        return symmetric_config(**data["generator"], edge_mode=edge_mode, pairing=pairing)
    raise ValueError("config needs either base_points/platform_points or a generator block")


def load_config(path) -> PlatformConfig:
    return config_from_dict(json.loads(Path(path).read_text()))


def save_config(cfg: PlatformConfig, path) -> None:
    # json writes floats with repr(), which round-trips exactly
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")


def inverse_kinematics(cfg: PlatformConfig, pose) -> LegLengths:
    """Leg lengths ``||R b_s + t - a_s||`` for one pose or a stack of poses."""
    pose = np.asarray(pose, dtype=float)
    r, t = pose[..., :3, :3], pose[..., :3, 3]
    legs = np.einsum("...ij,sj->...si", r, cfg.b_legs) + t[..., None, :] - cfg.a
    lbar = np.linalg.norm(legs, axis=-1)
    return LegLengths(lbar, lbar - cfg.l0)


def adjacency(cfg: PlatformConfig, mode: str | None = None) -> np.ndarray:
    mode = cfg.edge_mode if mode is None else mode
    if mode not in EDGE_MODES:
        raise ValueError(f"unknown edge mode {mode!r}")
    adj = np.zeros((N_NODES, N_NODES), dtype=np.int8)
    for s, p in enumerate(cfg.pairing):
        adj[s, N_LEGS + p] = adj[N_LEGS + p, s] = 1
    if mode == "ring":
        adj[:N_LEGS, :N_LEGS] = 1
        adj[N_LEGS:, N_LEGS:] = 1
        np.fill_diagonal(adj, 0)
    return adj


@dataclass(frozen=True, eq=False)
class DistanceGraph:
    adjacency: np.ndarray
    distances: np.ndarray
    node_types: np.ndarray


def build_distance_matrix(cfg: PlatformConfig, lbar, mode: str | None = None) -> np.ndarray:
    """Distance matrix ``E`` for one (6,) or many (n, 6) leg-length vectors."""
    mode = cfg.edge_mode if mode is None else mode
    lbar = np.asarray(lbar, dtype=float)
    if np.any(lbar <= 0):
        raise ValueError("leg lengths must be positive")
    e = np.zeros(lbar.shape[:-1] + (N_NODES, N_NODES))
    base = np.arange(N_LEGS)
    top = N_LEGS + np.asarray(cfg.pairing)
    e[..., base, top] = lbar
    e[..., top, base] = lbar
    if mode == "ring":
        e[..., :N_LEGS, :N_LEGS] = np.linalg.norm(cfg.a[:, None] - cfg.a[None], axis=-1)
        e[..., N_LEGS:, N_LEGS:] = np.linalg.norm(cfg.b[:, None] - cfg.b[None], axis=-1)
    elif mode not in EDGE_MODES:
        raise ValueError(f"unknown edge mode {mode!r}")
    return e


def build_distance_graph(cfg: PlatformConfig, lbar, mode: str | None = None) -> DistanceGraph:
    return DistanceGraph(
        adjacency=adjacency(cfg, mode),
        distances=build_distance_matrix(cfg, lbar, mode),
        node_types=np.arange(N_NODES),
    )


def vectorize_distance(e) -> np.ndarray:
    """Row-major flattening of one or many 12x12 matrices."""
    e = np.asarray(e, dtype=float)
    return e.reshape(e.shape[:-2] + (N_NODES * N_NODES,))


def unvectorize_distance(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v.reshape(v.shape[:-1] + (N_NODES, N_NODES))
