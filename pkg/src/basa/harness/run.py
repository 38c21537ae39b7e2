"""Seeded multi-run execution with per-seed trace files and one summary."""

from __future__ import annotations

import json
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .. import markov, rl
from ..recursions import run_scalar_recursion
from ..engine import run_basa
from ..trace import RunTrace, TraceRecorder, read_trace_csv
from .audit import AuditReport, audit_assumptions
from .config import ExperimentConfig, ExperimentKind, config_from_dict


class RunError(RuntimeError):
    """An engine failure, tagged with the seed that raised it."""

    def __init__(self, seed: int, cause: BaseException):
        super().__init__(f"seed {seed}: {type(cause).__name__}: {cause}")
        self.seed = seed
        self.cause = cause


class AuditFailure(RuntimeError):
    def __init__(self, report: AuditReport):
        names = ", ".join(f.name for f in report.hard_failures)
        super().__init__(f"audit hard failure: {names}")
        self.report = report


@dataclass
class RunSummary:
    experiment: str
    kind: str
    threshold: float | None
    min_pass: int | None
    per_seed: list[dict[str, Any]]
    audit: dict[str, Any]
    config: dict[str, Any]
    path: Path | None = None

    @property
    def pass_count(self) -> int | None:
        if self.threshold is None:
            return None
        return sum(1 for r in self.per_seed if r["passed"])

    @property
    def median_final_err(self) -> float | None:
        errs = [r["final_sup_err"] for r in self.per_seed if r["final_sup_err"] is not None]
        return statistics.median(errs) if errs else None

    @property
    def required(self) -> int | None:
        if self.threshold is None:
            return None
        return len(self.per_seed) if self.min_pass is None else self.min_pass

    @property
    def passed(self) -> bool | None:
        if self.threshold is None:
            return None
        return self.pass_count >= self.required

    @property
    def exit_code(self) -> int:
        return 1 if self.passed is False else 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "experiment": self.experiment,
            "kind": self.kind,
            "per_seed": self.per_seed,
            "aggregate": {
                "n_seeds": len(self.per_seed),
                "median_final_err": self.median_final_err,
                "threshold": self.threshold,
                "required": self.required,
                "pass_count": self.pass_count,
                "passed": self.passed,
            },
            "audit": self.audit,
            "config": self.config,
        }


# ---------------------------------------------------------------------------
# Single-seed execution
# ---------------------------------------------------------------------------


def _scalar_trace(cfg: ExperimentConfig, seed: int) -> RunTrace:
    sc = cfg.scalar()
    st = run_scalar_recursion(sc, seed, cfg.stride)
    csum = np.concatenate([[0.0], np.cumsum(sc.alpha.values(1, cfg.horizon + 1))])
    return RunTrace(
        t=st.t,
        sup_err=np.abs(st.u),
        lambda_t=np.maximum(st.running_max, cfg.c1),
        step_partial_sums=csum[st.t][:, None],
        visit_counts=st.t[:, None].copy(),
        summary={
            "algorithm": "scalar_recursion",
            "horizon": cfg.horizon,
            "seed": seed,
            "final_sup_err": float(abs(st.u[-1])),
            "max_lambda": float(max(st.max_abs, cfg.c1)),
            "final_u": st.final,
        },
    )


def _markov_trace(cfg: ExperimentConfig, seed: int) -> RunTrace:
    A = cfg.chain()
    nu = markov.stationary_distribution(A)
    path = markov.sample_path(A, cfg.problem["start"], cfg.horizon, seed)
    n = A.n
    rec = TraceRecorder(n, cfg.horizon, cfg.stride)
    counts = np.zeros(n, dtype=np.int64)
    done = 0
    zeros = np.zeros(n)
    rec.record(0, float("nan"), float("nan"), zeros, counts)
    while rec.next_tick() != -1:
        t = rec.next_tick()
        counts += np.bincount(path.states[done:t], minlength=n)
        done = t
        rec.record(t, float(np.max(np.abs(counts / t - nu))), float("nan"), zeros, counts)
    freq = counts / cfg.horizon
    return rec.finish(
        {
            "algorithm": "markov_diagnostics",
            "horizon": cfg.horizon,
            "seed": seed,
            "final_sup_err": float(np.max(np.abs(freq - nu))),
            "max_lambda": None,
            "occupation_frequencies": freq.tolist(),
            "stationary": nu.tolist(),
        }
    )


def execute_seed(cfg: ExperimentConfig, seed: int) -> RunTrace:
    """Run one seed of ``cfg`` and return its trace (nothing is written)."""
    kind = cfg.kind
    if kind is ExperimentKind.TD_LAMBDA:
        return rl.run_td_lambda(
            cfg.mrp(), cfg.problem["lambda"], cfg.step_schedule(), cfg.clock, cfg.horizon, seed,
            stride=cfg.stride, start=cfg.problem["start"], c1=cfg.c1,
        )
    if kind is ExperimentKind.Q_BATCH:
        return rl.run_q_learning_batch(
            cfg.mdp(), cfg.step_schedule(), cfg.clock, cfg.horizon, seed,
            stride=cfg.stride, starts=cfg.problem["starts"], q0=cfg.problem["q0"], c1=cfg.c1,
        )
    if kind is ExperimentKind.Q_CLASSIC:
        ex = cfg.problem["exploration"]
        return rl.run_q_learning_classic(
            cfg.mdp(), cfg.step_schedule(), rl.ExplorationPolicy(ex["kind"], ex["epsilon"]), cfg.horizon, seed,
            stride=cfg.stride, start=cfg.problem["start"], q0=cfg.problem["q0"], c1=cfg.c1,
        )
    if kind is ExperimentKind.SCALAR_RECURSION:
        return _scalar_trace(cfg, seed)
    if kind is ExperimentKind.MARKOV_DIAGNOSTICS:
        return _markov_trace(cfg, seed)
    if kind is ExperimentKind.BASA_GENERIC:
        return run_basa(cfg.basa(seed))
    raise ValueError(f"unsupported experiment kind {kind}")


def trace_paths(out_dir: Path, prefix: str, seed: int) -> dict[str, Path]:
    stem = f"{prefix}_seed{seed}"
    return {"csv": out_dir / f"{stem}.csv", "json": out_dir / f"{stem}.json", "table": out_dir / f"{stem}_final.csv"}


def _final_table(trace: RunTrace):
    """Final estimate as a table with one row per state (or coordinate)."""
    s = trace.summary
    if "final_q" in s:
        return np.asarray(s["final_q"], dtype=float)
    for key in ("final_v", "final_theta"):
        if key in s:
            return np.asarray(s[key], dtype=float)[:, None]
    return None


def _seed_job(cfg_dict: dict, seed: int, out_dir: str, threshold) -> dict[str, Any]:
    cfg = config_from_dict(cfg_dict)
    out = Path(out_dir)
    t0 = time.perf_counter()
    try:
        trace = execute_seed(cfg, seed)
    except Exception as exc:
        raise RunError(seed, exc) from exc
    wall = time.perf_counter() - t0
    paths = trace_paths(out, cfg.output["prefix"], seed)
    written = trace.write_csv(paths["csv"])
    written.append(trace.write_json(paths["json"]))
    table = _final_table(trace)
    if table is not None:
        rl.write_table_csv(paths["table"], table)
        written.append(paths["table"])
    err = trace.summary.get("final_sup_err")
    err = None if err is None or np.isnan(err) else float(err)
    return {
        "seed": seed,
        "final_sup_err": err,
        "max_lambda": trace.summary.get("max_lambda"),
        "wall_time": wall,
        "passed": (err is not None and err < threshold) if threshold is not None else None,
        "files": [p.name for p in written],
    }


# ---------------------------------------------------------------------------
# Coordinator
# ---------------------------------------------------------------------------


def run_experiment(cfg: ExperimentConfig, *, out_dir: str | Path | None = None, enforce_audit: bool = True) -> RunSummary:
    """Audit, run every seed, write per-seed traces, then write the summary.

    Raises ``AuditFailure`` before any seed runs if the audit reports a
    hard failure and ``enforce_audit`` is set.
    """
    report = audit_assumptions(cfg)
    if enforce_audit and not report.ok:
        raise AuditFailure(report)
    out = Path(out_dir if out_dir is not None else cfg.output["dir"])
    out.mkdir(parents=True, exist_ok=True)
    cfg_dict = cfg.to_dict()
    if cfg.workers > 1 and len(cfg.seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(cfg.seeds))) as pool:
            futures = [pool.submit(_seed_job, cfg_dict, s, str(out), cfg.threshold) for s in cfg.seeds]
            per_seed = [f.result() for f in futures]
    else:
        per_seed = [_seed_job(cfg_dict, s, str(out), cfg.threshold) for s in cfg.seeds]
    summary = RunSummary(
        experiment=cfg.name,
        kind=cfg.kind.value,
        threshold=cfg.threshold,
        min_pass=cfg.min_pass,
        per_seed=per_seed,
        audit=report.to_dict(),
        config=cfg_dict,
    )
    summary.path = out / f"{cfg.output['prefix']}_summary.json"
    summary.path.write_text(json.dumps(summary.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
    return summary


def recount_from_traces(paths, threshold: float) -> dict[str, Any]:
    """Pass count and median final error recomputed from trace CSVs alone."""
    finals, lams = [], []
    for p in paths:
        cols = read_trace_csv(p)
        finals.append(float(cols["sup_err"][-1]))
        lams.append(float(cols["lambda_t"][-1]))
    ok = [e for e in finals if not np.isnan(e)]
    return {
        "n_seeds": len(finals),
        "pass_count": sum(1 for e in ok if e < threshold),
        "median_final_err": statistics.median(ok) if ok else None,
        "max_lambda": lams,
    }
