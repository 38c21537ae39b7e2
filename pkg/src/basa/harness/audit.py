"""Consolidated hypothesis audit for an experiment config.

``hard`` findings gate execution: a run whose config fails a hypothesis the
algorithm's convergence theorem relies on is refused.  ``soft`` findings are
reported and the run proceeds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

from .. import engine, markov
from ..core import ClockMode, Verdict, check_robbins_monro
from ..recursions import verdict_basis, verify_summability
from .config import ExperimentConfig, ExperimentKind

HARD = "hard"
SOFT = "soft"
INFO = "info"


@dataclass
class Finding:
    name: str
    verdict: str
    severity: str
    detail: str = ""

    @property
    def failed(self) -> bool:
        return self.verdict in ("fail", engine.AssumptionVerdict.FAILS.value)

    def to_dict(self):
        return {"name": self.name, "verdict": self.verdict, "severity": self.severity, "detail": self.detail}


@dataclass
class AuditReport:
    experiment: str
    kind: str
    findings: list[Finding] = field(default_factory=list)

    def add(self, name, verdict, severity, detail=""):
        self.findings.append(Finding(name, str(verdict), severity, detail))

    @property
    def hard_failures(self) -> list[Finding]:
        return [f for f in self.findings if f.severity == HARD and f.failed]

    @property
    def warnings(self) -> list[Finding]:
        return [f for f in self.findings if f.severity == SOFT and f.verdict != "pass" and not f.verdict.startswith(("holds", "implied"))]

    @property
    def ok(self) -> bool:
        return not self.hard_failures

    def to_dict(self) -> dict[str, Any]:
        return {
            "experiment": self.experiment,
            "kind": self.kind,
            "ok": self.ok,
            "hard_failures": [f.name for f in self.hard_failures],
            "warnings": [f.name for f in self.warnings],
            "findings": [f.to_dict() for f in self.findings],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _robbins_monro(rep: AuditReport, cfg: ExperimentConfig, severity: str) -> None:
    rm = check_robbins_monro(cfg.step_schedule())
    rep.add("robbins_monro.square_summable", rm.square_summable.value, severity,
            f"sum beta^2 ({rm.basis}); partial sum over {rm.horizon} ticks = {rm.partial_sum_sq:.6g}")
    rep.add("robbins_monro.divergent", rm.divergent.value, severity,
            f"sum beta = inf ({rm.basis}); partial sum over {rm.horizon} ticks = {rm.partial_sum:.6g}")


def _monotone(rep: AuditReport, cfg: ExperimentConfig, severity_if_global: str) -> None:
    s = cfg.step_schedule()
    mono = s.is_nonincreasing()
    glob = cfg.clock_mode() is ClockMode.GLOBAL
    rep.add(
        "monotone_step",
        Verdict.PASS.value if mono else (Verdict.FAIL.value if glob else Verdict.INCONCLUSIVE.value),
        severity_if_global if glob else INFO,
        "beta nonincreasing" if mono else ("global clock needs nonincreasing beta" if glob else "not required under the local clock"),
    )


def _irreducible(rep: AuditReport, label: str, A, severity: str) -> None:
    ok = markov.is_irreducible(A)
    rep.add(f"irreducible.{label}", Verdict.PASS.value if ok else Verdict.FAIL.value, severity,
            "positive-entry digraph strongly connected" if ok else f"{label} is reducible")


def audit_assumptions(cfg: ExperimentConfig) -> AuditReport:
    rep = AuditReport(cfg.name, cfg.kind.value)
    kind = cfg.kind

    if kind is ExperimentKind.TD_LAMBDA:
        _robbins_monro(rep, cfg, HARD)
        _monotone(rep, cfg, HARD)
        _irreducible(rep, "transition", cfg.problem["transition"], HARD)
        rep.add("noise", "intrinsic", INFO, "TD error noise is generated by the sampled transitions")

    elif kind is ExperimentKind.Q_BATCH:
        _robbins_monro(rep, cfg, HARD)
        _monotone(rep, cfg, HARD)
        for k, A in enumerate(cfg.problem["transitions"]):
            _irreducible(rep, f"action_{k}", A, HARD)
        rep.add("noise", "intrinsic", INFO, "Bellman-target noise is generated by the sampled transitions")

    elif kind is ExperimentKind.Q_CLASSIC:
        _robbins_monro(rep, cfg, HARD)
        _monotone(rep, cfg, SOFT)
        for k, A in enumerate(cfg.problem["transitions"]):
            _irreducible(rep, f"action_{k}", A, INFO)
        rep.add("visits", Verdict.INCONCLUSIVE.value, SOFT,
                "infinitely-often visits and their step sums are audited from the trace visit counts")

    elif kind is ExperimentKind.MARKOV_DIAGNOSTICS:
        _irreducible(rep, "transition", cfg.problem["transition"], HARD)

    elif kind is ExperimentKind.SCALAR_RECURSION:
        sc = cfg.scalar()
        basis = verdict_basis(sc)
        for name, v in verify_summability(sc).items():
            rep.add(f"summability.{name}", v.value, SOFT, f"decided from asymptotic rates ({basis})")
        rep.add("noise", "biased_gaussian", INFO,
                f"declared envelopes mu={sc.mu.to_dict()}, sigma={sc.sigma.to_dict()}, bias sign {sc.bias_sign.value}")

    elif kind is ExperimentKind.BASA_GENERIC:
        b = cfg.basa(cfg.seeds[0])
        res = engine.check_assumptions(b.measurement, b.noise, b.schedule, mask=b.mask, clock=b.clock)
        for c in res.checks:
            rep.add(f"assumption.{c.name}", c.verdict.value, HARD if c.verdict is engine.AssumptionVerdict.FAILS else SOFT, c.detail)
        _robbins_monro(rep, cfg, SOFT)
        _monotone(rep, cfg, SOFT)
        if isinstance(b.mask, engine.SingleCoordinateFromIndexChain):
            _irreducible(rep, "mask_chain", b.mask.P, SOFT)
        rep.add("noise", b.noise.kind.value, INFO, json.dumps(b.noise.to_dict(), sort_keys=True))

    return rep
