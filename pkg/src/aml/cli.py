"""Command-line front end.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bootstrap import bootstrap_replicates, summarize_bootstrap
from .config import ConfigError, build_model, build_run_config, load_config, load_observed, snapshot
from .estimator import make_objective, multi_start_estimate
from .records import dumps, estimate_record, read_json, write_csv, write_json, write_trajectory_csv
from .studies import bias_curve, checkpoint_iterates, replicate_estimates

logger = logging.getLogger("aml")

OUT_DIR_ENV = "AML_OUT_DIR"

# first element of every stream path; keeps the commands' random streams disjoint
ESTIMATE_STREAMS = 0
DENSITY_STREAMS = 1
BIAS_STREAMS = 2
BOOTSTRAP_STREAMS = 3


class RunFailure(RuntimeError):
    pass


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


class RunDirectory:
    """Output directory with a manifest that stays ``incomplete`` until the run finishes."""

    def __init__(self, out_dir, command, cfg, s_obs):
        self.path = Path(out_dir)
        self.path.mkdir(parents=True, exist_ok=True)
        self.manifest = {
            "command": command,
            "status": "incomplete",
            "software_version": __version__,
            "master_seed": cfg.master_seed,
            "config": snapshot(cfg),
            "observed_summary": s_obs,
            "started_at": _now(),
            "finished_at": None,
            "outputs": [],
        }
        self._flush()

    def _flush(self):
        write_json(self.path / "manifest.json", self.manifest)

    def file(self, name) -> Path:
        self.manifest["outputs"].append(name)
        return self.path / name

    def complete(self):
        self.manifest["status"] = "complete"
        self.manifest["finished_at"] = _now()
        self._flush()


def _prepare(args):
    cfg = load_config(args.config, args.override)
    model = build_model(cfg)
    run_cfg = build_run_config(cfg)
    s_obs, data = load_observed(cfg, model)
    return cfg, model, run_cfg, s_obs, data


def _reference(cfg, model, data):
    if cfg.reference_theta is not None:
        ref = np.asarray(cfg.reference_theta, dtype=float)
        if ref.shape != (model.p,):
            raise ConfigError(f"reference_theta: expected {model.p} values")
        return ref
    if data is not None:
        return model.ml_estimate(data)
    return None


def cmd_estimate(args) -> int:
    cfg, model, run_cfg, s_obs, _ = _prepare(args)
    run = RunDirectory(args.out_dir, "estimate", cfg, s_obs)
    objective = make_objective(model, s_obs, run_cfg)
    est = multi_start_estimate(objective, model.space, run_cfg, seed_path=(ESTIMATE_STREAMS,), workers=args.threads)
    record = estimate_record(est)
    record["observed_summary"] = s_obs
    record["parameter_space"] = {"lower": model.space.lower, "upper": model.space.upper}
    for i, tr in enumerate(est.trajectories):
        name = f"trajectory_start{i}.csv"
        write_trajectory_csv(run.file(name), tr)
    write_json(run.file("result.json"), record)
    run.complete()
    print(f"theta_hat = {np.array2string(est.theta, precision=6)}")
    return 0


def cmd_bootstrap(args) -> int:
    cfg, model, run_cfg, s_obs, _ = _prepare(args)
    est_path = Path(args.estimate)
    if not est_path.is_file():
        raise RunFailure(f"estimate file not found: {est_path}")
    theta_hat = np.asarray(read_json(est_path)["theta_hat"], dtype=float)
    if theta_hat.shape != (model.p,):
        raise RunFailure(f"{est_path}: theta_hat has wrong length")
    B = args.B if args.B is not None else cfg.bootstrap.B
    run = RunDirectory(args.out_dir, "bootstrap", cfg, s_obs)
    reps = bootstrap_replicates(theta_hat, model, run_cfg, B, seed_path=(BOOTSTRAP_STREAMS,), workers=args.threads)
    res = summarize_bootstrap(theta_hat, reps, cfg.bootstrap.level, cfg.bootstrap.simultaneous, model.nonnegative)
    write_csv(run.file("bootstrap_replicates.csv"), [f"theta_{i + 1}" for i in range(model.p)], reps)
    write_json(
        run.file("bootstrap.json"),
        {
            "B": B,
            "theta_hat": res.theta_hat,
            "bias_corrected": res.bias_corrected,
            "se": res.se,
            "level": res.level,
            "simultaneous": res.simultaneous,
            "ci_lower": res.ci_lower,
            "ci_upper": res.ci_upper,
            "raw_ci_lower": res.raw_ci_lower,
            "raw_ci_upper": res.raw_ci_upper,
            "shifted": res.shifted,
            "replicates": res.replicates,
        },
    )
    run.complete()
    return 0


def cmd_replicate_density(args) -> int:
    cfg, model, run_cfg, s_obs, data = _prepare(args)
    run = RunDirectory(args.out_dir, "replicate-density", cfg, s_obs)
    objective = make_objective(model, s_obs, run_cfg)
    est = replicate_estimates(objective, model.space, run_cfg, args.R, args.threads, seed_path=(DENSITY_STREAMS,))
    header = ["replicate"] + [f"theta_{i + 1}" for i in range(model.p)]
    write_csv(run.file("replicates.csv"), header, [[str(r)] + list(row) for r, row in enumerate(est)])
    ref = _reference(cfg, model, data)
    write_json(
        run.file("replicate_density.json"),
        {
            "R": args.R,
            "mean": est.mean(axis=0),
            "sd": est.std(axis=0, ddof=1) if args.R > 1 else None,
            "reference": ref,
            "bias": None if ref is None else est.mean(axis=0) - ref,
        },
    )
    run.complete()
    return 0


def _parse_checkpoints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"--checkpoints: cannot parse {text!r}") from None


def cmd_bias_curve(args) -> int:
    cfg, model, run_cfg, s_obs, data = _prepare(args)
    checkpoints = _parse_checkpoints(args.checkpoints)
    if not checkpoints or any(b <= a for a, b in zip(checkpoints, checkpoints[1:])):
        raise ConfigError("--checkpoints must be increasing")
    if checkpoints[0] < 1 or checkpoints[-1] > run_cfg.K:
        raise ConfigError(f"--checkpoints must lie in [1, tuning.K={run_cfg.K}]")
    ref = _reference(cfg, model, data)
    run = RunDirectory(args.out_dir, "bias-curve", cfg, s_obs)
    objective = make_objective(model, s_obs, run_cfg)
    snaps = checkpoint_iterates(objective, model.space, run_cfg, checkpoints, args.R, args.threads, seed_path=(BIAS_STREAMS,))
    bias, se = bias_curve(snaps, ref)
    rows = []
    for c, k in enumerate(checkpoints):
        for i in range(model.p):
            rows.append([str(k), str(i + 1), bias[c, i], se[c, i]])
    write_csv(run.file("bias_curve.csv"), ["iteration", "coordinate", "abs_bias", "se"], rows)
    run.complete()
    return 0


def cmd_validate(args) -> int:
    cfg, model, run_cfg, s_obs, _ = _prepare(args)
    sys.stdout.write(dumps({"valid": True, "config": snapshot(cfg)}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aml", description="Approximate maximum likelihood estimation by simulated gradients.")
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="YAML run configuration")
    common.add_argument("--out-dir", default=os.environ.get(OUT_DIR_ENV, "aml-out"), help=f"output directory (default ${OUT_DIR_ENV} or ./aml-out)")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker processes")
    common.add_argument("--override", action="append", default=[], metavar="KEY=VALUE", help="override a config field, dotted keys (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", parents=[common], help="multi-start AML estimate")
    p.set_defaults(func=cmd_estimate)
    p = sub.add_parser("bootstrap", parents=[common], help="parametric bootstrap around an estimate")
    p.add_argument("--estimate", required=True, help="result.json written by 'estimate'")
    p.add_argument("--B", type=int, default=None, help="bootstrap replicates (default: config bootstrap.B)")
    p.set_defaults(func=cmd_bootstrap)
    p = sub.add_parser("replicate-density", parents=[common], help="R independent estimates on the same data")
    p.add_argument("--R", type=int, required=True)
    p.set_defaults(func=cmd_replicate_density)
    p = sub.add_parser("bias-curve", parents=[common], help="bias and se of the estimator against iteration count")
    p.add_argument("--checkpoints", required=True, help="comma-separated increasing iteration numbers")
    p.add_argument("--R", type=int, required=True)
    p.set_defaults(func=cmd_bias_curve)
    p = sub.add_parser("validate-config", parents=[common], help="parse and validate a configuration")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    if getattr(args, "R", 1) is not None and getattr(args, "R", 1) < 1:
        print("error: --R must be >= 1", file=sys.stderr)
        return 2
    if getattr(args, "B", None) is not None and args.B < 2:
        print("error: --B must be >= 2", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # runtime failures map to exit 1
        logger.debug("run failed", exc_info=True)
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
