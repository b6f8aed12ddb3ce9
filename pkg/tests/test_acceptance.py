"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The learning criteria (6 and 7) share one desk-scale training run: 20k
samples split 80/20, 200 epochs, H=16, batch size 64, for both DisGNet and
the plain-MLP baseline. That run takes most of the suite's wall time.
Failure samples of the two-stage benchmark are written to
``$STEWART_KIN_ACCEPTANCE_DIR`` (default ``acceptance_artifacts/``).
"""

import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

import conftest
from helpers import random_pose
from stewart_kin import cli
from stewart_kin import datagen as D
from stewart_kin import evalbench as E
from stewart_kin import hyperpinv as H
from stewart_kin import liegroup as L
from stewart_kin import nrsolver as N
from stewart_kin import platform as P
from stewart_kin.gnn import disgnet as G
from stewart_kin.gnn import train as T

SATURATION = 1e-13
ARTIFACTS = Path(os.environ.get("STEWART_KIN_ACCEPTANCE_DIR", "acceptance_artifacts"))


def report(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    conftest.ACCEPTANCE_LINES[number] = line
    print(line)
    assert ok, line


def gauss_jordan_inverse(a):
    n = a.shape[0]
    aug = np.hstack([a.astype(float), np.eye(n)])
    for col in range(n):
        pivot = col + int(np.argmax(np.abs(aug[col:, col])))
        aug[[col, pivot]] = aug[[pivot, col]]
        aug[col] /= aug[col, col]
        for row in range(n):
            if row != col:
                aug[row] -= aug[row, col] * aug[col]
    return aug[:, n:]


def test_criterion_1_pseudoinverse_oracle():
    rng = np.random.default_rng(1)
    mats = []
    while len(mats) < 1000:
        j = rng.normal(size=(6, 6))
        if np.linalg.cond(j) <= 1e4:
            mats.append(j)
    start = time.perf_counter()
    results = [H.pseudoinverse(j).z for j in mats]
    elapsed = time.perf_counter() - start
    worst = max(np.linalg.norm(z - gauss_jordan_inverse(j)) / np.linalg.norm(gauss_jordan_inverse(j))
                for j, z in zip(mats, results))
    report(1, worst <= 1e-9 and elapsed < 5.0,
           f"max rel Frobenius error {worst:.2e} (<= 1e-9), {elapsed:.2f} s for 1000 (< 5 s)")


def test_criterion_2_third_order_convergence():
    rng = np.random.default_rng(2)
    xs, ys, slopes, worst_bound, worst_identity = [], [], [], -np.inf, 0.0
    for _ in range(100):
        while True:
            j = rng.normal(size=(6, 6))
            if np.linalg.cond(j) <= 100:
                break
        h = rng.normal(size=(6, 6))
        h *= rng.uniform(0.1, 0.9) / np.linalg.norm(h)
        z = np.linalg.solve(j, np.eye(6) - h)
        hk = np.eye(6) - j @ z
        residuals = [np.linalg.norm(hk)]
        while residuals[-1] > 1e-13 and len(residuals) < 12:
            z = H.hyperpower_step(j, z)
            h_next = np.eye(6) - j @ z
            predicted = 0.25 * (3 * np.linalg.matrix_power(hk, 3) + np.linalg.matrix_power(hk, 4))
            worst_identity = max(worst_identity, np.abs(h_next - predicted).max())
            r = residuals[-1]
            worst_bound = max(worst_bound, np.linalg.norm(h_next) - 0.25 * (3 * r ** 3 + r ** 4))
            residuals.append(np.linalg.norm(h_next))
            hk = h_next
        # pairs whose successor sits above the float64 roundoff floor
        logs = np.log(residuals)
        keep = np.asarray(residuals[1:]) > SATURATION
        xs.extend(logs[:-1][keep])
        ys.extend(logs[1:][keep])
        if keep.sum() >= 3:
            slopes.append(np.polyfit(logs[:-1][keep], logs[1:][keep], 1)[0])
    # one fit over all trajectories; per-trajectory fits on two points are
    # biased low by the faster-than-cubic first step (|H^3| < |H|^3 in Frobenius norm)
    slope = np.polyfit(xs, ys, 1)[0]
    ok = slope >= 2.7 and min(slopes) >= 2.7 and worst_bound <= 1e-12 and worst_identity <= 1e-12
    report(2, ok, f"pooled log-log slope {slope:.3f} over {len(xs)} pre-saturation steps (>= 2.7; "
                  f"per-matrix fits with >= 3 steps: min {min(slopes):.2f}), max bound excess "
                  f"{worst_bound:.1e}, max |H_next - (3H^3+H^4)/4| {worst_identity:.1e} (<= 1e-12)")


def test_criterion_3_fk_round_trip(cfg):
    rng = np.random.default_rng(3)
    ok_count, nonsingular = 0, 0
    start = time.perf_counter()
    for _ in range(1000):
        pose = random_pose(rng)
        xi = L.se3_log(pose)
        obj = N.FkObjective(cfg, P.inverse_kinematics(cfg, pose).los)
        start_xi = xi + np.concatenate([rng.uniform(-2, 2, 3), np.radians(rng.uniform(-2, 2, 3))])
        rep = N.refine(obj, start_xi, gamma=1e-4)
        if rep.singular_flag:
            continue
        nonsingular += 1
        residual = np.linalg.norm(N.residual(obj, rep.xi_final))
        ok_count += rep.converged and rep.final_step_norm < 1e-4 and residual <= 1e-3
    elapsed = time.perf_counter() - start
    rate = 100.0 * ok_count / nonsingular
    report(3, rate >= 99.0 and elapsed < 30.0,
           f"{rate:.1f}% of {nonsingular} non-singular trials recovered (>= 99%), "
           f"{elapsed:.1f} s single-threaded (< 30 s)")


def test_criterion_4_precision_monotonicity(cfg):
    ds = D.generate(cfg, D.DatasetMeta(count=500, seed=4))
    objs = [N.FkObjective(cfg, row) for row in ds.los]
    medians = []
    for gamma in (1e-2, 1e-3, 1e-4):
        reps = N.refine_batch(objs, np.zeros((500, 6)), gamma=gamma, n_jobs=1)
        medians.append(E.lower_median([r.outer_iterations for r in reps]))
    ok = medians[0] <= medians[1] <= medians[2]
    report(4, ok, f"median outer iterations from the zero twist at gamma 1e-2/1e-3/1e-4: "
                  f"{medians[0]:g}/{medians[1]:g}/{medians[2]:g} (nondecreasing)")


def test_criterion_5_gradient_correctness(cfg):
    ds = D.generate(cfg, D.DatasetMeta(count=3, seed=5))
    e, poses = ds.distance_matrices, ds.poses
    worst = 0.0
    for seed in range(5):
        params = G.init_params(hidden=4, embed_dim=4, rbf_dim=4, seed=seed,
                               rbf_cutoff=1.5 * cfg.l0.max(), t_scale=30.0)
        _, grads = G.loss_and_grad(e, params, poses)
        floor = 1e-3 * max(np.abs(g).max() for g in grads.values())
        for name, v in params.values.items():
            for i in np.ndindex(v.shape):
                old = v[i]
                v[i] = old + 1e-6
                up = G.batch_loss(e, params, poses)
                v[i] = old - 1e-6
                down = G.batch_loss(e, params, poses)
                v[i] = old
                num = (up - down) / 2e-6
                a = grads[name][i]
                worst = max(worst, abs(a - num) / max(abs(a), abs(num), floor))
    report(5, worst <= 1e-5, f"max relative error {worst:.2e} over 5 seeds, H=4 (<= 1e-5)")


@pytest.fixture(scope="module")
def desk_scale(cfg):
    """Train both networks once at desk scale; returns data, params and timings."""
    start = time.perf_counter()
    ds = D.generate(cfg, D.DatasetMeta(count=20_000, seed=1))
    train_set, test_set = D.split(ds, 0.8, seed=0)
    val_slice = test_set.subset(np.arange(500))
    tcfg = T.TrainConfig(batch_size=64, epochs=200, seed=0)
    nets, untrained = {}, {}
    for arch in T.ARCHS:
        params = T.default_params(arch, train_set, seed=0, hidden=16 if arch == "disgnet" else None)
        untrained[arch] = params
        nets[arch], _ = T.train(train_set, tcfg, arch, params, val_slice)
    elapsed = time.perf_counter() - start
    return {"train": train_set, "test": test_set, "nets": nets, "untrained": untrained,
            "seconds": elapsed}


@pytest.mark.slow
def test_criterion_6_learning_separation(desk_scale):
    test_set = desk_scale["test"]
    gt = test_set.poses
    pred = {arch: T.predict_poses(p, test_set) for arch, p in desk_scale["nets"].items()}
    init_pred = T.predict_poses(desk_scale["untrained"]["disgnet"], test_set)
    rot_gnn = E.e_rot(pred["disgnet"], gt, degrees=True)
    rot_mlp = E.e_rot(pred["plain-mlp"], gt, degrees=True)
    trans_gnn = E.e_trans(pred["disgnet"], gt)
    trans_init = E.e_trans(init_pred, gt)
    minutes = desk_scale["seconds"] / 60
    rot_ratio = rot_mlp / rot_gnn
    trans_ratio = trans_init / trans_gnn
    ok = rot_ratio >= 3.0 and trans_ratio >= 5.0 and minutes <= 30.0
    report(6, ok, f"held-out E-rot DisGNet {rot_gnn:.3f} deg vs plain-MLP {rot_mlp:.3f} deg "
                  f"(ratio {rot_ratio:.2f}, need >= 3); E-trans {trans_gnn:.2f} mm vs untrained "
                  f"{trans_init:.2f} mm (ratio {trans_ratio:.1f}, need >= 5); "
                  f"{minutes:.1f} min (<= 30)")


@pytest.mark.slow
def test_criterion_7_two_stage_success(desk_scale):
    held_out = desk_scale["test"].subset(np.arange(1000))
    result = E.run_benchmark(held_out, desk_scale["nets"]["disgnet"], gamma=1e-4, n_jobs=1)
    rep = result.report
    ARTIFACTS.mkdir(parents=True, exist_ok=True)
    E.write_failures(ARTIFACTS / "bench_failures.tsv", result, held_out)
    E.write_report(ARTIFACTS / "bench_report.txt", {"bench": rep.as_dict(),
                                                    "refined": result.summary.as_dict(),
                                                    "initial": result.initial_summary.as_dict()})
    report(7, rep.success_rate >= 90.0,
           f"success rate {rep.success_rate:.1f}% (>= 90%), N1={rep.n_singular} "
           f"N2={rep.n_below_precision} of W={rep.count}; failures in "
           f"{ARTIFACTS / 'bench_failures.tsv'}")


def test_criterion_8_metric_formulas(cfg):
    rng = np.random.default_rng(8)
    formula_ok = True
    for w, n1, n2, t in [(1000, 20, 15, 3.7), (1, 0, 0, 0.5), (7, 3, 4, 1e-3), (250, 0, 13, 0.0)]:
        rep = E.BenchReport(w, 1e-4, t, n1, n2)
        formula_ok &= rep.success_rate == (1 - (n1 + n2) / w) * 100
        formula_ok &= rep.average_time == t / w
    pred = np.stack([random_pose(rng) for _ in range(200)])
    gt = np.stack([random_pose(rng) for _ in range(200)])
    target = rng.uniform(-30, 30, size=(200, 6))
    t_loop = r_loop = ik_loop = 0.0
    for p, g, los in zip(pred, gt, target):
        t_loop += math.sqrt(sum((p[i, 3] - g[i, 3]) ** 2 for i in range(3)))
        rel = p[:3, :3] @ g[:3, :3].T
        cos = max(-1.0, min(1.0, (np.trace(rel) - 1) / 2))
        r_loop += math.sqrt(2.0) * math.acos(cos)
        sq = 0.0
        for s in range(6):
            leg = p[:3, :3] @ cfg.b[cfg.pairing[s]] + p[:3, 3] - cfg.a[s]
            sq += (math.sqrt(float(leg @ leg)) - cfg.l0[s] - los[s]) ** 2
        ik_loop += math.sqrt(sq)
    diffs = [abs(E.e_trans(pred, gt) - t_loop / 200), abs(E.e_rot(pred, gt) - r_loop / 200),
             abs(E.e_ik(cfg, pred, target) - ik_loop / 200)]
    ok = formula_ok and max(diffs) <= 1e-12
    report(8, ok, f"success_rate/average_time formulas exact: {formula_ok}; "
                  f"max metric deviation from loop oracles {max(diffs):.1e} (<= 1e-12)")


def test_criterion_9_determinism(tmp_path):
    def pipeline(root):
        root.mkdir()
        data = root / "dataset.gsfk"
        codes = [
            cli.main(["gen", "--out", str(root), "--count", "80", "--seed", "5"]),
            cli.main(["train", "--out", str(root), "--data", str(data), "--epochs", "3",
                      "--h", "6", "--batch-size", "16", "--seed", "2"]),
            cli.main(["eval", "--out", str(root), "--ckpt", str(root / "model.ckpt"),
                      "--data", str(data)]),
        ]
        np.savetxt(root / "los.csv", D.load(data).los[:10], delimiter=",")
        codes.append(cli.main(["solve", "--out", str(root), "--los-file", str(root / "los.csv"),
                               "--init", "zero"]))
        assert codes == [0, 0, 0, 0]
        names = ["dataset.gsfk", "model.ckpt", "train_log.tsv", "eval_report.txt",
                 "eval_errors.tsv", "solve_results.tsv"]
        return {n: (root / n).read_bytes() for n in names}

    first, second = pipeline(tmp_path / "a"), pipeline(tmp_path / "b")
    same = [n for n in first if first[n] == second[n]]
    report(9, len(same) == len(first),
           f"{len(same)}/{len(first)} outputs of gen/train/eval/solve bit-identical on rerun")
