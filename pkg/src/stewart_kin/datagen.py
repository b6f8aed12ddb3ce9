"""Randomised dataset generation through inverse kinematics, plus file I/O.

Random stream: ``numpy.random.Philox`` (Philox4x64-10, counter based) keyed by
the integer seed; ``Generator.random`` draws doubles in ``[0, 1)``. Sample ``i``
consumes draws ``6i .. 6i+5`` in the order ``x, y, z, alpha, beta, gamma``, so
any worker can reproduce a slice by advancing the counter.

Record columns (little-endian float64):

* quaternion mode (157): ``x y z | qw qx qy qz | lbar1..lbar6 | e0..e143``
* euler mode (156): ``x y z | alpha beta gamma | lbar1..lbar6 | e0..e143``

See ``docs/formats.md`` for the byte layout of the binary container.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import liegroup
from .exceptions import BadMagic, TruncatedFile, VersionMismatch
from .platform import (N_NODES, PlatformConfig, build_distance_matrix, config_from_dict,
                       inverse_kinematics, vectorize_distance)

MAGIC = b"GSFK"
VERSION = 1
ROTATION_MODES = ("quaternion", "euler")
_HEADER = struct.Struct("<4sIQIIQ5d32sI")  # up to and including the config length


@dataclass(frozen=True)
class DatasetMeta:
    count: int
    l_min: float = -50.0
    l_max: float = 50.0
    theta_min: float = math.radians(-30.0)
    theta_max: float = math.radians(30.0)
    seed: int = 0
    rotation_mode: str = "quaternion"
    split_ratio: float = 0.8
    config_hash: str = ""

    @property
    def record_width(self) -> int:
        return (157 if self.rotation_mode == "quaternion" else 156)


@dataclass(eq=False)
class Dataset:
    meta: DatasetMeta
    config: PlatformConfig
    records: np.ndarray

    def __len__(self) -> int:
        return self.records.shape[0]

    @property
    def x(self) -> np.ndarray:
        return self.records[:, 0:3]

    @property
    def rotation_params(self) -> np.ndarray:
        return self.records[:, 3:7] if self.meta.rotation_mode == "quaternion" else self.records[:, 3:6]

    @property
    def _off(self) -> int:
        return 7 if self.meta.rotation_mode == "quaternion" else 6

    @property
    def lbar(self) -> np.ndarray:
        return self.records[:, self._off:self._off + 6]

    @property
    def los(self) -> np.ndarray:
        return self.lbar - self.config.l0

    @property
    def e(self) -> np.ndarray:
        return self.records[:, self._off + 6:]

    @property
    def distance_matrices(self) -> np.ndarray:
        return self.e.reshape(-1, N_NODES, N_NODES)

    @property
    def rotations(self) -> np.ndarray:
        if self.meta.rotation_mode == "quaternion":
            return liegroup.quaternion_to_rotation(self.rotation_params)
        p = self.rotation_params
        return liegroup.euler_to_rotation(p[:, 0], p[:, 1], p[:, 2])

    @property
    def poses(self) -> np.ndarray:
        poses = np.tile(np.eye(4), (len(self), 1, 1))
        poses[:, :3, :3] = self.rotations
        poses[:, :3, 3] = self.x
        return poses

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        if index.dtype != bool:
            index = index.astype(int)
        records = self.records[index]
        return Dataset(replace(self.meta, count=records.shape[0]), self.config, records)


def _check_meta(meta: DatasetMeta) -> None:
    vals = (meta.l_min, meta.l_max, meta.theta_min, meta.theta_max)
    if not all(math.isfinite(v) for v in vals):
        raise ValueError("sampling bounds must be finite")
    if meta.l_min > meta.l_max or meta.theta_min > meta.theta_max:
        raise ValueError("sampling bounds must satisfy min <= max")
    if meta.rotation_mode not in ROTATION_MODES:
        raise ValueError(f"rotation_mode must be one of {ROTATION_MODES}")
    if meta.count < 0:
        raise ValueError("count must be non-negative")


def sample_stream(seed: int, start: int, count: int) -> np.ndarray:
    """Uniform draws for samples ``start .. start+count-1`` as a ``(count, 6)`` array."""
    bitgen = np.random.Philox(key=seed)
    # each double consumes one 64-bit output; one counter step yields four
    draws_before = 6 * start
    bitgen.advance(draws_before // 4)
    gen = np.random.Generator(bitgen)
    skip = draws_before % 4
    if skip:
        gen.random(skip)
    return gen.random(6 * count).reshape(count, 6)


def generate(cfg: PlatformConfig, meta: DatasetMeta) -> Dataset:
    """Sample poses uniformly per component and label them through IK.

    Degenerate bounds (``min == max``) are allowed and pin that component.
    """
    _check_meta(meta)
    meta = replace(meta, config_hash=cfg.config_hash())
    u = sample_stream(meta.seed, 0, meta.count)
    x = meta.l_min + (meta.l_max - meta.l_min) * u[:, :3]
    euler = meta.theta_min + (meta.theta_max - meta.theta_min) * u[:, 3:]
    rot = liegroup.euler_to_rotation(euler[:, 0], euler[:, 1], euler[:, 2])
    poses = np.tile(np.eye(4), (meta.count, 1, 1))
    poses[:, :3, :3] = rot
    poses[:, :3, 3] = x
    lbar = inverse_kinematics(cfg, poses).lbar
    e = vectorize_distance(build_distance_matrix(cfg, lbar))
    rot_cols = liegroup.rotation_to_quaternion(rot) if meta.rotation_mode == "quaternion" else euler
    records = np.concatenate([x, rot_cols.reshape(meta.count, -1), lbar, e], axis=1)
    return Dataset(meta, cfg, np.ascontiguousarray(records))


def from_arrays(cfg: PlatformConfig, poses, lbar, meta: DatasetMeta | None = None) -> Dataset:
    """Wrap given poses and leg lengths as a quaternion-mode :class:`Dataset`.

    ``lbar`` is stored as given, so it need not come from ``poses`` (for
    instance measured lengths with their reference poses).
    """
    poses = np.asarray(poses, dtype=float).reshape(-1, 4, 4)
    lbar = np.asarray(lbar, dtype=float).reshape(-1, 6)
    if poses.shape[0] != lbar.shape[0]:
        raise ValueError("poses and leg lengths must have the same length")
    quat = liegroup.rotation_to_quaternion(poses[:, :3, :3]).reshape(-1, 4)
    e = vectorize_distance(build_distance_matrix(cfg, lbar)).reshape(-1, N_NODES * N_NODES)
    records = np.concatenate([poses[:, :3, 3], quat, lbar, e], axis=1)
    if meta is None:
        meta = DatasetMeta(count=records.shape[0])
    meta = replace(meta, count=records.shape[0], rotation_mode="quaternion",
                   config_hash=cfg.config_hash())
    return Dataset(meta, cfg, np.ascontiguousarray(records))


def split(dataset: Dataset, ratio: float = 0.8, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Seeded shuffle, then the first ``round(ratio * W)`` samples go to train."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie strictly between 0 and 1")
    order = np.random.default_rng(seed).permutation(len(dataset))
    n_train = int(round(ratio * len(dataset)))
    return dataset.subset(np.sort(order[:n_train])), dataset.subset(np.sort(order[n_train:]))


def column_names(rotation_mode: str = "quaternion") -> list[str]:
    rot = ["qw", "qx", "qy", "qz"] if rotation_mode == "quaternion" else ["alpha", "beta", "gamma"]
    return (["x", "y", "z"] + rot + [f"lbar{s}" for s in range(1, 7)]
            + [f"e{k}" for k in range(N_NODES * N_NODES)])


def save(dataset: Dataset, path) -> None:
    meta = dataset.meta
    config_blob = json.dumps(dataset.config.to_dict(), sort_keys=True).encode("utf-8")
    header = _HEADER.pack(
        MAGIC, VERSION, len(dataset), ROTATION_MODES.index(meta.rotation_mode),
        meta.record_width, meta.seed, meta.l_min, meta.l_max, meta.theta_min, meta.theta_max,
        meta.split_ratio, bytes.fromhex(meta.config_hash or dataset.config.config_hash()),
        len(config_blob),
    )
    body = np.ascontiguousarray(dataset.records, dtype="<f8").tobytes()
    Path(path).write_bytes(header + config_blob + body)


def load(path) -> Dataset:
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagic(f"not a GSFK dataset: {bytes(data[:4])!r}", 0)
    if len(data) < 8:
        raise TruncatedFile("header ends before the version field", len(data))
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise VersionMismatch(f"dataset version {version}, reader supports {VERSION}", 4)
    if len(data) < _HEADER.size:
        raise TruncatedFile("header is incomplete", len(data))
    (_, _, count, mode, width, seed, l_min, l_max, th_min, th_max, ratio, digest,
     cfg_len) = _HEADER.unpack_from(data, 0)
    cfg_end = _HEADER.size + cfg_len
    if len(data) < cfg_end:
        raise TruncatedFile("embedded platform config is incomplete", len(data))
    cfg = config_from_dict(json.loads(data[_HEADER.size:cfg_end].decode("utf-8")))
    meta = DatasetMeta(count=count, l_min=l_min, l_max=l_max, theta_min=th_min, theta_max=th_max,
                       seed=seed, rotation_mode=ROTATION_MODES[mode], split_ratio=ratio,
                       config_hash=digest.hex())
    if width != meta.record_width:
        raise VersionMismatch(f"record width {width} does not match mode {meta.rotation_mode}", 20)
    record_bytes = 8 * width
    available = len(data) - cfg_end
    if available < count * record_bytes:
        index = available // record_bytes
        raise TruncatedFile(f"record {index} of {count} is incomplete",
                            cfg_end + index * record_bytes, record_index=index)
    records = np.frombuffer(data, dtype="<f8", count=count * width, offset=cfg_end)
    return Dataset(meta, cfg, records.reshape(count, width).astype(float))


def export_csv(dataset: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(column_names(dataset.meta.rotation_mode))
        for row in dataset.records:
            writer.writerow([format(v, ".17g") for v in row])


def import_csv(path, cfg: PlatformConfig, meta: DatasetMeta | None = None) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        names = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    mode = "quaternion" if "qw" in names else "euler"
    records = np.array(rows, dtype=float).reshape(len(rows), len(names))
    if meta is None:
        meta = DatasetMeta(count=len(rows), rotation_mode=mode, config_hash=cfg.config_hash())
    return Dataset(replace(meta, count=len(rows), rotation_mode=mode), cfg, records)


def meta_dict(meta: DatasetMeta) -> dict:
    return asdict(meta)
