"""Command line: ``generate``, ``run`` and ``verify``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import load_config
from .data import generate, save_model, save_tensor
from .errors import ConfigError, FormatError, ResourceError
from .experiment import header_block, run_experiment, trial_seed
from .verify import SUITES, verify


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="brascpd", description="Stochastic CPD experiments.")
    sub = p.add_subparsers(dest="verb", required=True)

    g = sub.add_parser("generate", help="write a synthetic tensor and its true factors")
    g.add_argument("--config", required=True, type=Path)
    g.add_argument("--out", required=True, type=Path)
    g.add_argument("--seed", type=int)

    r = sub.add_parser("run", help="run the configured trials and write traces")
    r.add_argument("--config", required=True, type=Path)
    r.add_argument("--out", required=True, type=Path)
    r.add_argument("--trials", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--parallel", type=int)
    r.add_argument("--no-plot", action="store_true", help="skip the PNG figures")

    v = sub.add_parser("verify", help="run the oracle self-checks")
    v.add_argument("suites", nargs="*", help=f"subset of {', '.join(SUITES)}")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--inject-gradient-scale", type=float, default=1.0, help=argparse.SUPPRESS)
    return p


def _generate(args) -> int:
    cfg = load_config(args.config).override(seed=args.seed)
    if cfg.get("source") != "synthetic":
        raise ConfigError("generate needs source = synthetic")
    seed = trial_seed(cfg.seed, 0)
    inst = generate(cfg.synthetic_spec(seed))
    args.out.mkdir(parents=True, exist_ok=True)
    save_tensor(args.out / "tensor.dten", inst.tensor)
    save_tensor(args.out / "clean.dten", inst.clean)
    save_model(args.out / "truth.dfac", inst.truth)
    (args.out / "generate.txt").write_text(header_block(cfg, {"data_seed": seed}))
    print(f"wrote {args.out / 'tensor.dten'} shape {'x'.join(map(str, inst.tensor.shape))}")
    return 0


def _run(args) -> int:
    cfg = load_config(args.config).override(trials=args.trials, seed=args.seed, parallel=args.parallel)
    summary = run_experiment(cfg, args.out, plot=False if args.no_plot else None)
    metrics = summary["metrics"]
    print(f"trials={summary['trials']} finite={summary['finite_trials']} diverged={summary['diverged']}")
    for name in ("cost", "mse_avg"):
        if name in metrics:
            print(f"{name}: mean={metrics[name]['mean']:.6g} median={metrics[name]['median']:.6g}")
    print(f"outputs in {args.out}")
    return 1 if summary["diverged"] else 0


def _verify(args) -> int:
    report = verify(args.suites, seed=args.seed, gradient_scale=args.inject_gradient_scale)
    json.dump(report, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0 if report["passed"] else 1


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = _parser().parse_args(argv)
    try:
        if args.verb == "generate":
            return _generate(args)
        if args.verb == "run":
            return _run(args)
        return _verify(args)
    except (ConfigError, FormatError, ResourceError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
