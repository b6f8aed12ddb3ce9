import math
import struct

import numpy as np
import pytest
from scipy import stats

from stewart_kin import datagen as D
from stewart_kin import platform as P
from stewart_kin.exceptions import BadMagic, TruncatedFile, VersionMismatch


@pytest.fixture(scope="module")
def small(cfg):
    return D.generate(cfg, D.DatasetMeta(count=200, seed=7))


def test_collapsed_bounds_give_assembly_pose(cfg):
    meta = D.DatasetMeta(count=5, l_min=0.0, l_max=0.0, theta_min=0.0, theta_max=0.0)
    ds = D.generate(cfg, meta)
    np.testing.assert_array_equal(ds.x, 0.0)
    np.testing.assert_allclose(ds.lbar, np.tile(cfg.l0, (5, 1)), atol=1e-12)
    np.testing.assert_allclose(ds.los, 0.0, atol=1e-12)
    np.testing.assert_allclose(ds.rotation_params, np.tile([1.0, 0, 0, 0], (5, 1)))


def test_records_are_self_consistent(cfg, small):
    assert small.records.shape == (200, 157)
    np.testing.assert_allclose(P.inverse_kinematics(cfg, small.poses).lbar, small.lbar, atol=1e-9)
    for k in range(0, 200, 37):
        np.testing.assert_array_equal(small.distance_matrices[k],
                                      P.build_distance_matrix(cfg, small.lbar[k]))


def test_within_bounds_and_unit_quaternions(small):
    assert np.all(np.abs(small.x) <= 50.0)
    q = small.rotation_params
    np.testing.assert_allclose(np.linalg.norm(q, axis=1), 1.0, atol=1e-15)
    assert np.all(q[:, 0] >= 0)


def test_euler_mode(cfg):
    meta = D.DatasetMeta(count=50, seed=3, rotation_mode="euler")
    ds = D.generate(cfg, meta)
    quat = D.generate(cfg, D.DatasetMeta(count=50, seed=3))
    assert ds.records.shape == (50, 156)
    assert np.all(np.abs(ds.rotation_params) <= math.radians(30))
    np.testing.assert_allclose(ds.rotations, quat.rotations, atol=1e-12)
    np.testing.assert_array_equal(ds.lbar, quat.lbar)


def test_uniform_translation(cfg):
    ds = D.generate(cfg, D.DatasetMeta(count=10_000, seed=11))
    crit = 1.63 / math.sqrt(10_000)  # asymptotic 1% critical value
    for c in range(3):
        stat = stats.kstest(ds.x[:, c], stats.uniform(loc=-50, scale=100).cdf).statistic
        assert stat < crit
    assert ds.x.min() >= -50.0 and ds.x.max() < 50.0


def test_stream_slices_agree():
    full = D.sample_stream(5, 0, 40)
    for start in (0, 1, 3, 7, 22):
        np.testing.assert_array_equal(D.sample_stream(5, start, 40 - start), full[start:])


def test_deterministic(cfg):
    a = D.generate(cfg, D.DatasetMeta(count=30, seed=1))
    b = D.generate(cfg, D.DatasetMeta(count=30, seed=1))
    c = D.generate(cfg, D.DatasetMeta(count=30, seed=2))
    np.testing.assert_array_equal(a.records, b.records)
    assert not np.array_equal(a.records, c.records)
    assert a.meta.config_hash == cfg.config_hash()


def test_rejects_bad_meta(cfg):
    with pytest.raises(ValueError):
        D.generate(cfg, D.DatasetMeta(count=1, l_min=10.0, l_max=-10.0))
    with pytest.raises(ValueError):
        D.generate(cfg, D.DatasetMeta(count=1, theta_max=math.inf))
    with pytest.raises(ValueError):
        D.generate(cfg, D.DatasetMeta(count=1, rotation_mode="matrix"))


def test_from_arrays_matches_generate(cfg, small):
    ds = D.from_arrays(cfg, small.poses, small.lbar)
    np.testing.assert_allclose(ds.records, small.records, atol=1e-12)


class TestSplit:
    def test_sizes(self, cfg):
        ds = D.generate(cfg, D.DatasetMeta(count=10))
        train, test = D.split(ds, 0.8, seed=0)
        assert (len(train), len(test)) == (8, 2)

    def test_same_seed_same_split(self, small):
        a = D.split(small, 0.8, seed=4)
        b = D.split(small, 0.8, seed=4)
        np.testing.assert_array_equal(a[0].records, b[0].records)

    def test_partition_is_exhaustive_and_disjoint(self, small):
        train, test = D.split(small, 0.75, seed=9)
        joined = np.concatenate([train.records, test.records])
        key = np.lexsort(joined.T[::-1])
        ref = np.lexsort(small.records.T[::-1])
        np.testing.assert_array_equal(joined[key], small.records[ref])

    def test_ratio_validated(self, small):
        for r in (0.0, 1.0, 1.5):
            with pytest.raises(ValueError):
                D.split(small, r)


class TestFiles:
    def test_round_trip_bit_identical(self, small, tmp_path):
        path = tmp_path / "d.gsfk"
        D.save(small, path)
        back = D.load(path)
        np.testing.assert_array_equal(back.records, small.records)
        assert back.meta == small.meta
        assert back.config.config_hash() == small.config.config_hash()

    def test_header_layout(self, small, tmp_path):
        path = tmp_path / "d.gsfk"
        D.save(small, path)
        raw = path.read_bytes()
        assert raw[:4] == b"GSFK"
        assert struct.unpack_from("<I", raw, 4)[0] == 1
        assert struct.unpack_from("<Q", raw, 8)[0] == 200
        assert struct.unpack_from("<II", raw, 16) == (0, 157)
        assert struct.unpack_from("<Q", raw, 24)[0] == 7
        assert struct.unpack_from("<d", raw, 32)[0] == -50.0
        assert raw[72:104].hex() == small.config.config_hash()
        cfg_len = struct.unpack_from("<I", raw, 104)[0]
        assert len(raw) == 108 + cfg_len + 8 * 157 * 200
        first = np.frombuffer(raw, "<f8", count=157, offset=108 + cfg_len)
        np.testing.assert_array_equal(first, small.records[0])

    def test_bad_magic(self, small, tmp_path):
        path = tmp_path / "d.gsfk"
        D.save(small, path)
        raw = bytearray(path.read_bytes())
        raw[0:4] = b"NOPE"
        path.write_bytes(bytes(raw))
        with pytest.raises(BadMagic) as info:
            D.load(path)
        assert info.value.offset == 0

    def test_version_mismatch(self, small, tmp_path):
        path = tmp_path / "d.gsfk"
        D.save(small, path)
        raw = bytearray(path.read_bytes())
        struct.pack_into("<I", raw, 4, 2)
        path.write_bytes(bytes(raw))
        with pytest.raises(VersionMismatch) as info:
            D.load(path)
        assert info.value.offset == 4

    def test_truncated_records(self, small, tmp_path):
        path = tmp_path / "d.gsfk"
        D.save(small, path)
        raw = path.read_bytes()
        cfg_len = struct.unpack_from("<I", raw, 104)[0]
        record = 8 * 157
        cut = 108 + cfg_len + 5 * record + 17
        path.write_bytes(raw[:cut])
        with pytest.raises(TruncatedFile) as info:
            D.load(path)
        assert info.value.record_index == 5
        assert info.value.offset == 108 + cfg_len + 5 * record

    def test_truncated_header(self, small, tmp_path):
        path = tmp_path / "d.gsfk"
        D.save(small, path)
        path.write_bytes(path.read_bytes()[:50])
        with pytest.raises(TruncatedFile):
            D.load(path)

    def test_csv_round_trip(self, cfg, small, tmp_path):
        path = tmp_path / "d.csv"
        D.export_csv(small, path)
        header = path.read_text().splitlines()[0].split(",")
        assert header == D.column_names("quaternion")
        assert header[:8] == ["x", "y", "z", "qw", "qx", "qy", "qz", "lbar1"]
        back = D.import_csv(path, cfg)
        np.testing.assert_array_equal(back.records, small.records)

    def test_csv_euler_columns(self, cfg, tmp_path):
        ds = D.generate(cfg, D.DatasetMeta(count=3, rotation_mode="euler"))
        D.export_csv(ds, tmp_path / "e.csv")
        back = D.import_csv(tmp_path / "e.csv", cfg)
        assert back.meta.rotation_mode == "euler"
        np.testing.assert_array_equal(back.records, ds.records)
