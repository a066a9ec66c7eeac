"""Command line driver.

Exit status: 0 all checks passed, 1 a check failed, 2 configuration, usage,
input, metric or geometry error, 3 numeric error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, _accel
from .config import KINDS, TIERS, ExperimentConfig, from_dict, load_config
from .errors import ConfigurationError, NumericError, TransferLabError
from .experiments import RUNNERS, Outcome
from .report import emit_plot, format_value, write_csv

log = logging.getLogger("transferlab")


def _manifest(cfg: ExperimentConfig, extra=None) -> str:
    d = {
        "id": cfg.id,
        "kind": cfg.kind,
        "seed": cfg.seed,
        "backend": _accel.backend_name(),
        "version": __version__,
        "lattice": cfg.lattice,
        "metric": cfg.metric,
        "mass": cfg.mass,
        "params": cfg.params,
        **(extra or {}),
    }
    return json.dumps(d, indent=2, sort_keys=True, default=lambda o: np.asarray(o).tolist()) + "\n"


def _write_timings(out: Path, timings: dict) -> None:
    # wall times live apart from the result tables so those stay byte-identical across runs
    write_csv(out / "timings.csv", [{"id": k, "wall_time": v} for k, v in timings.items()])


def write_outcome(cfg: ExperimentConfig, outcome: Outcome, out: Path) -> list[Path]:
    written = []
    for name, rows in outcome.tables.items():
        written.append(write_csv(out / f"{name}.csv", rows))
    if outcome.checks:
        written.append(write_csv(out / "checks.csv", [c.row() for c in outcome.checks]))
    for name, series, kw in outcome.plots:
        written.append(emit_plot(series, out / f"{name}.svg", **kw))
    (out / "manifest.json").write_text(_manifest(cfg))
    return written


def run_experiment(cfg: ExperimentConfig, out) -> int:
    """Run one experiment and write its reports; returns the exit status."""
    import time

    out = Path(out)
    t0 = time.perf_counter()
    outcome = RUNNERS[cfg.kind](cfg)
    write_outcome(cfg, outcome, out)
    _write_timings(out, {cfg.id: time.perf_counter() - t0})
    for c in outcome.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.id} {c.quantity} {format_value(c.value)} {c.comparison} {c.tolerance:g}")
    return 0 if all(c.passed for c in outcome.checks) else 1


def run_verify(cfg: ExperimentConfig, out, workers: int = 1) -> int:
    from .suite import verify_suite

    out = Path(out)
    tier = cfg.params.get("tier", "small")
    instances = [
        from_dict(i, cfg.base) if isinstance(i, dict) else load_config(cfg.resolve(i)) for i in cfg.params.get("instances", [])
    ]
    res = verify_suite(tier, cfg.seed, workers, instances)
    write_csv(out / "verify.csv", res.rows)
    write_csv(out / "verify_details.csv", res.details)
    _write_timings(out, res.timings)
    (out / "manifest.json").write_text(_manifest(cfg, {"tier": tier}))
    for r in res.rows:
        print(f"{'PASS' if r['pass'] else 'FAIL'} {r['id']} {r['quantity']} {format_value(r['value'])} {r['comparison']} {r['tolerance']:g}")
    print(f"{'ALL PASS' if res.passed else 'FAILURES'} tier={tier} seed={cfg.seed} wall={res.timings['first_pass']:.1f}s")
    return 0 if res.passed else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment configuration (JSON)")
    common.add_argument("--out", type=Path, help="output directory (default: out/<id>)")
    common.add_argument("--seed", type=int, help="seed for probe vectors and start vectors (overrides config)")
    common.add_argument("--workers", type=int, default=1, help="parallel workers for verify-all")
    common.add_argument("--tier", choices=TIERS, help="catalog tier for verify-all (overrides config)")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="transferlab", description="Transfer-matrix laboratory for scalar fields on metric lattices.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="kind", required=True)
    for k in KINDS:
        sub.add_parser(k, parents=[common], help=f"run a {k} experiment")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        if args.workers < 1:
            raise ConfigurationError("--workers must be at least 1", where="cli.main")
        if args.config is not None:
            cfg = load_config(args.config)
            if cfg.kind != args.kind:
                raise ConfigurationError(f"config kind {cfg.kind!r} does not match subcommand {args.kind!r}", where="cli.main")
        elif args.kind == "verify-all":
            cfg = from_dict({"id": "verify-all", "kind": "verify-all"})
        else:
            raise ConfigurationError(f"{args.kind} needs --config", where="cli.main")
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigurationError("--seed must be non-negative", where="cli.main")
            cfg.seed = args.seed
        if args.tier is not None:
            cfg.params["tier"] = args.tier
        out = args.out or Path("out") / cfg.id
        if cfg.kind == "verify-all":
            return run_verify(cfg, out, args.workers)
        return run_experiment(cfg, out)
    except TransferLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except np.linalg.LinAlgError as exc:
        print(f"error: {NumericError(str(exc), where='cli.main')}", file=sys.stderr)
        return NumericError.exit_code


if __name__ == "__main__":
    sys.exit(main())
