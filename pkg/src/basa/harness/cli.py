"""Command line front end: ``basa {run,audit,oracle,validate}``.

Exit codes: 0 pass, 1 threshold fail, 2 validation or audit hard failure,
3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .. import engine, markov, rl
from .audit import audit_assumptions
from .config import ConfigError, ExperimentConfig, ExperimentKind, config_from_dict, load_config
from .run import AuditFailure, RunError, run_experiment

EXIT_OK, EXIT_THRESHOLD, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("basa")


def _seed_list(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("at least one seed is required")
    return seeds


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="basa", description="Seeded stochastic approximation experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="experiment YAML file")
        sp.add_argument("--seed-override", type=_seed_list, metavar="S[,S...]", help="replace the configured seeds")
        sp.add_argument("--stride", type=_positive, help="override the record stride")
        return sp

    r = common(sub.add_parser("run", help="audit, then run every seed and write traces"))
    r.add_argument("--out-dir", help="override the configured output directory")
    r.add_argument("--no-audit-gate", action="store_true", help="run even if the audit reports a hard failure")
    common(sub.add_parser("audit", help="print the hypothesis audit as JSON"))
    common(sub.add_parser("oracle", help="print exact reference quantities as JSON"))
    common(sub.add_parser("validate", help="validate and echo the config with defaults filled in"))
    return p


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    d = cfg.to_dict()
    if args.seed_override is not None:
        d["seeds"] = args.seed_override
        if d["min_pass"] is not None and d["min_pass"] > len(d["seeds"]):
            d["min_pass"] = len(d["seeds"])
    if args.stride is not None:
        d["stride"] = args.stride
    return config_from_dict(d)


def oracle(cfg: ExperimentConfig) -> dict:
    """Exact quantities the runs are measured against."""
    k = cfg.kind
    if k is ExperimentKind.TD_LAMBDA:
        mrp = cfg.mrp()
        return {"v_star": rl.exact_value(mrp).tolist(), "stationary": markov.stationary_distribution(mrp.A).tolist()}
    if k in (ExperimentKind.Q_BATCH, ExperimentKind.Q_CLASSIC):
        Q = rl.exact_q_star(cfg.mdp(), 1e-12)
        return {"q_star": Q.tolist(), "greedy_policy": rl.greedy_policy(Q).tolist()}
    if k is ExperimentKind.MARKOV_DIAGNOSTICS:
        return {"stationary": markov.stationary_distribution(cfg.chain()).tolist()}
    if k is ExperimentKind.SCALAR_RECURSION:
        return {"limit": 0.0}
    g = engine.AffineMap(cfg.problem["map"]["M"], cfg.problem["map"]["b"])
    if cfg.problem["measurement"]["form"] == "fixed_point":
        return {"fixed_point": g.fixed_point().tolist(), "lipschitz": g.lipschitz}
    return {"zero": np.linalg.solve(g.M, -g.b).tolist(), "lipschitz": g.lipschitz}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _apply_overrides(load_config(args.config), args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVALID

    try:
        if args.command == "validate":
            sys.stdout.write(cfg.dump())
            return EXIT_OK
        if args.command == "audit":
            rep = audit_assumptions(cfg)
            print(rep.to_json())
            return EXIT_OK if rep.ok else EXIT_INVALID
        if args.command == "oracle":
            print(json.dumps(oracle(cfg), indent=2))
            return EXIT_OK
        log.info("running %s over %d seeds", cfg.name, len(cfg.seeds))
        summary = run_experiment(cfg, out_dir=args.out_dir, enforce_audit=not args.no_audit_gate)
    except AuditFailure as exc:
        print(str(exc), file=sys.stderr)
        print(exc.report.to_json())
        return EXIT_INVALID
    except (RunError, OSError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    agg = summary.to_dict()["aggregate"]
    print(json.dumps({"summary": str(summary.path), **agg}, indent=2))
    return summary.exit_code


if __name__ == "__main__":
    sys.exit(main())
