"""Command-line entry point: ``stewart-kin {gen,train,solve,eval,bench}``.

Exit codes: 0 success, 2 usage or input error, 3 training failure
(non-finite loss), 4 singular Jacobian during a solve. Every run writes
``<subcommand>.manifest.json`` into its ``--out`` directory. The environment
variable ``STEWART_KIN_SEED`` overrides every seed flag. The manifest records
the full argument list, so ``main(manifest["argv"])`` repeats a run.
"""

from __future__ import annotations

import argparse
import datetime
import json
import logging
import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import __version__, datagen, evalbench, liegroup, nrsolver
from .exceptions import DatasetFormatError, NonFiniteLoss
from .platform import default_config, load_config

EXIT_OK, EXIT_USAGE, EXIT_TRAIN, EXIT_SINGULAR = 0, 2, 3, 4
SEED_ENV = "STEWART_KIN_SEED"

log = logging.getLogger("stewart_kin")


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _version() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).parent, capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _seed(value: int) -> int:
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return value
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def _write_manifest(out: Path, args, config_paths: dict, seeds: dict, outputs: list) -> None:
    manifest = {
        "subcommand": args.command,
        "argv": args.argv,
        "arguments": {k: v for k, v in vars(args).items() if k not in ("func", "argv")},
        "config_paths": {k: (str(Path(v).resolve()) if v else None) for k, v in config_paths.items()},
        "seeds": seeds,
        "version": _version(),
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "outputs": [str(p) for p in outputs],
    }
    (out / f"{args.command}.manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_dataset(path):
    if not path or not Path(path).is_file():
        raise UsageError(f"dataset not found: {path}")
    try:
        return datagen.load(path)
    except DatasetFormatError as exc:
        raise UsageError(f"cannot read dataset {path}: {exc}") from None


def _load_checkpoint(path):
    from .exceptions import CheckpointError
    from .gnn import checkpoint

    if not Path(path).is_file():
        raise UsageError(f"checkpoint not found: {path}")
    try:
        return checkpoint.load(path)
    except CheckpointError as exc:
        raise UsageError(f"cannot read checkpoint {path}: {exc}") from None


def _platform(path):
    if path is None:
        return default_config()
    if not Path(path).is_file():
        raise UsageError(f"platform config not found: {path}")
    return load_config(path)


def _select(dataset, which: str, split_seed: int):
    if which == "all":
        return dataset
    train, test = datagen.split(dataset, dataset.meta.split_ratio, split_seed)
    return train if which == "train" else test


def cmd_gen(args) -> int:
    if args.lmin > args.lmax or args.thmin > args.thmax:
        raise UsageError("bounds must satisfy min <= max")
    if args.count < 1:
        raise UsageError("--count must be >= 1")
    if not 0.0 < args.split < 1.0:
        raise UsageError("--split must lie strictly between 0 and 1")
    cfg = _platform(args.config)
    seed = _seed(args.seed)
    meta = datagen.DatasetMeta(count=args.count, l_min=args.lmin, l_max=args.lmax,
                               theta_min=math.radians(args.thmin), theta_max=math.radians(args.thmax),
                               seed=seed, rotation_mode=args.mode, split_ratio=args.split)
    dataset = datagen.generate(cfg, meta)
    out = _out_dir(args)
    outputs = [out / args.name]
    datagen.save(dataset, outputs[0])
    if args.csv:
        outputs.append(out / (Path(args.name).stem + ".csv"))
        datagen.export_csv(dataset, outputs[-1])
    _write_manifest(out, args, {"config": args.config}, {"seed": seed}, outputs)
    print(f"wrote {len(dataset)} samples to {outputs[0]}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .gnn import checkpoint, train

    dataset = _load_dataset(args.data)
    seed = _seed(args.seed)
    split_seed = _seed(args.split_seed)
    train_set, val_set = datagen.split(dataset, dataset.meta.split_ratio, split_seed)
    try:
        cfg = train.TrainConfig(learning_rate=args.lr, beta=args.beta, batch_size=args.batch_size,
                                epochs=args.epochs, seed=seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    params = train.default_params(args.arch, train_set, seed, args.h)

    def progress(rec):
        log.info("epoch %d loss %.6g val e_trans %.6g mm e_rot %.6g deg", rec.epoch,
                 rec.mean_loss, rec.val_e_trans, liegroup.geodesic_to_degrees(rec.val_e_rot))

    try:
        params, train_log = train.train(train_set, cfg, args.arch, params, val_set, progress=progress)
    except NonFiniteLoss as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRAIN
    out = _out_dir(args)
    ckpt, log_path = out / args.name, out / "train_log.tsv"
    checkpoint.save(params, ckpt)
    train_log.write(log_path)
    _write_manifest(out, args, {"data": args.data}, {"seed": seed, "split_seed": split_seed},
                    [ckpt, log_path])
    print(f"wrote checkpoint {ckpt}")
    return EXIT_OK


def _read_los_file(path) -> np.ndarray:
    if not Path(path).is_file():
        raise UsageError(f"displacement file not found: {path}")
    try:
        rows = np.loadtxt(path, delimiter=",", ndmin=2, comments="#")
    except ValueError as exc:
        raise UsageError(f"cannot parse {path}: {exc}") from None
    if rows.shape[1] != 6:
        raise UsageError(f"{path} must have 6 comma-separated columns per row")
    return rows


def _initial_twists(args, cfg, los: np.ndarray) -> np.ndarray:
    if args.ckpt:
        from .gnn.train import predict_poses

        params = _load_checkpoint(args.ckpt)
        dataset = datagen.from_arrays(cfg, np.tile(np.eye(4), (len(los), 1, 1)), los + cfg.l0)
        return np.stack([liegroup.se3_log(p) for p in predict_poses(params, dataset)])
    if args.init in (None, "zero"):
        return np.zeros((len(los), 6))
    xi = _floats(args.init)
    if len(xi) != 6:
        raise UsageError("--init takes 'zero' or six comma-separated twist values")
    return np.tile(np.asarray(xi), (len(los), 1))


def cmd_solve(args) -> int:
    cfg = _platform(args.config)
    if args.gamma <= 0:
        raise UsageError("--gamma must be positive")
    if args.ckpt and args.init:
        raise UsageError("use either --ckpt or --init, not both")
    sources = [v is not None for v in (args.los, args.lbar, args.los_file)]
    if sum(sources) != 1:
        raise UsageError("give exactly one of --los, --lbar or --los-file")
    if args.los_file:
        los = _read_los_file(args.los_file)
    else:
        values = args.los if args.los is not None else args.lbar
        if len(values) != 6:
            raise UsageError("leg values need six comma-separated numbers")
        los = np.asarray(values, dtype=float)[None] - (cfg.l0 if args.lbar is not None else 0.0)
    xi0 = _initial_twists(args, cfg, los)
    objs = [nrsolver.FkObjective(cfg, row) for row in los]
    reports = nrsolver.refine_batch(objs, list(xi0), gamma=args.gamma, z_max=args.z_max,
                                    n_jobs=args.jobs)
    out = _out_dir(args)
    outputs = []
    if args.los_file:
        outputs.append(out / "solve_results.tsv")
        with open(outputs[0], "w") as fh:
            fh.write("index\tconverged\tsingular\touter_iterations\tfinal_step_norm\t"
                     + "\t".join(f"xi{k}" for k in range(6)) + "\t"
                     + "\t".join(f"T{r}{c}" for r in range(4) for c in range(4)) + "\n")
            for i, rep in enumerate(reports):
                fh.write("\t".join([str(i), str(int(rep.converged)), str(int(rep.singular_flag)),
                                    str(rep.outer_iterations), repr(float(rep.final_step_norm))]
                                   + [repr(v) for v in rep.xi_final.tolist()]
                                   + [repr(v) for v in rep.pose.ravel().tolist()]) + "\n")
        print(f"solved {len(reports)} samples; results in {outputs[0]}")
    else:
        rep = reports[0]
        with np.printoptions(precision=12, suppress=True):
            print("T_final =")
            print(rep.pose)
        print(f"converged = {rep.converged}")
        print(f"singular = {rep.singular_flag}")
        print(f"outer_iterations = {rep.outer_iterations}")
        print(f"final_step_norm = {float(rep.final_step_norm)!r}")
        print("xi_final = " + ",".join(repr(v) for v in rep.xi_final.tolist()))
    _write_manifest(out, args, {"config": args.config, "ckpt": args.ckpt}, {}, outputs)
    singular = [i for i, r in enumerate(reports) if r.singular_flag]
    if singular:
        print(f"error: singular Jacobian at sample {singular[0]}", file=sys.stderr)
        return EXIT_SINGULAR
    return EXIT_OK


def _thresholds(args):
    t = args.thresholds
    if not t or any(b < a for a, b in zip(t, t[1:])):
        raise UsageError("--thresholds must be a non-empty ascending list")
    return t


def cmd_eval(args) -> int:
    from .gnn.train import predict_poses

    thresholds = _thresholds(args)
    dataset = _select(_load_dataset(args.data), args.subset, _seed(args.split_seed))
    params = _load_checkpoint(args.ckpt)
    pred = predict_poses(params, dataset)
    summary = evalbench.summarize(dataset.config, pred, dataset.poses, dataset.los, thresholds)
    out = _out_dir(args)
    report, errors = out / "eval_report.txt", out / "eval_errors.tsv"
    evalbench.write_report(report, {"eval": summary.as_dict()})
    evalbench.write_errors_tsv(errors, dataset.config, pred, dataset.poses, dataset.los)
    _write_manifest(out, args, {"data": args.data, "ckpt": args.ckpt},
                    {"split_seed": _seed(args.split_seed)}, [report, errors])
    print(report.read_text(), end="")
    return EXIT_OK


def cmd_bench(args) -> int:
    thresholds = _thresholds(args)
    if args.gamma <= 0:
        raise UsageError("--gamma must be positive")
    dataset = _select(_load_dataset(args.data), args.subset, _seed(args.split_seed))
    if args.count is not None:
        dataset = dataset.subset(np.arange(min(args.count, len(dataset))))
    params = _load_checkpoint(args.ckpt) if args.ckpt else None
    result = evalbench.run_benchmark(dataset, params, args.gamma, n_jobs=args.jobs,
                                     z_max=args.z_max, thresholds=thresholds)
    out = _out_dir(args)
    report, errors, failures = out / "bench_report.txt", out / "bench_errors.tsv", \
        out / "bench_failures.tsv"
    sections = {"bench": result.report.as_dict(), "refined": result.summary.as_dict()}
    if result.initial_summary is not None:
        sections["initial"] = result.initial_summary.as_dict()
    evalbench.write_report(report, sections)
    evalbench.write_errors_tsv(errors, dataset.config, result.refined_poses, dataset.poses,
                               dataset.los)
    evalbench.write_failures(failures, result, dataset)
    _write_manifest(out, args, {"data": args.data, "ckpt": args.ckpt},
                    {"split_seed": _seed(args.split_seed)}, [report, errors, failures])
    print(report.read_text(), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    from .gnn.train import ARCHS, TrainConfig

    defaults = TrainConfig()
    parser = argparse.ArgumentParser(prog="stewart-kin", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", default=".", help="output directory (created if missing)")

    def thresholds(p):
        p.add_argument("--thresholds", type=_floats, default=list(evalbench.THRESHOLDS),
                       help="accuracy thresholds in mm and deg (default 0.5,1,1.5,2,3)")

    def subset(p):
        p.add_argument("--subset", choices=("test", "train", "all"), default="test")
        p.add_argument("--split-seed", type=int, default=0)

    p = sub.add_parser("gen", help="generate a dataset through inverse kinematics")
    common(p)
    p.add_argument("--config", help="platform config JSON (default: built-in platform)")
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lmin", type=float, default=-50.0, help="translation lower bound, mm")
    p.add_argument("--lmax", type=float, default=50.0, help="translation upper bound, mm")
    p.add_argument("--thmin", type=float, default=-30.0, help="Euler angle lower bound, deg")
    p.add_argument("--thmax", type=float, default=30.0, help="Euler angle upper bound, deg")
    p.add_argument("--mode", choices=datagen.ROTATION_MODES, default="quaternion")
    p.add_argument("--split", type=float, default=0.8, help="train fraction stored in the header")
    p.add_argument("--name", default="dataset.gsfk")
    p.add_argument("--csv", action="store_true", help="also write a CSV export")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a pose initialiser")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--arch", choices=ARCHS, default="disgnet")
    p.add_argument("--epochs", type=int, default=defaults.epochs)
    p.add_argument("--batch-size", type=int, default=defaults.batch_size)
    p.add_argument("--lr", type=float, default=defaults.learning_rate)
    p.add_argument("--beta", type=float, default=defaults.beta)
    p.add_argument("--h", type=int, default=None, help="hidden width (16 DisGNet, 64 plain-MLP)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--name", default="model.ckpt")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("solve", help="forward kinematics for given leg displacements")
    common(p)
    p.add_argument("--config")
    p.add_argument("--ckpt", help="network checkpoint used for the initial pose")
    p.add_argument("--init", help="'zero' or six comma-separated twist values (solver-only mode)")
    p.add_argument("--los", type=_floats, help="six leg displacements l_os, mm; write --los=-1,... when the first is negative")
    p.add_argument("--lbar", type=_floats, help="six absolute leg lengths, mm")
    p.add_argument("--los-file", help="CSV file with six displacements per row (batch mode)")
    p.add_argument("--gamma", type=float, default=nrsolver.GAMMA)
    p.add_argument("--z-max", type=int, default=nrsolver.Z_MAX)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("eval", help="stage-I accuracy of a checkpoint on a dataset split")
    common(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    subset(p)
    thresholds(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="two-stage benchmark: success rate and timing")
    common(p)
    p.add_argument("--ckpt", help="network checkpoint (omit for zero-twist starts)")
    p.add_argument("--data", required=True)
    p.add_argument("--count", type=int, default=None, help="use the first N samples of the subset")
    p.add_argument("--gamma", type=float, default=nrsolver.GAMMA)
    p.add_argument("--z-max", type=int, default=nrsolver.Z_MAX)
    p.add_argument("--jobs", type=int, default=1)
    subset(p)
    thresholds(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
