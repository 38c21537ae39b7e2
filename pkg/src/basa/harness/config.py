"""Experiment configuration: YAML documents validated into ``ExperimentConfig``.

Every problem is validated before anything runs, and all errors are
reported together, each tagged with its dotted field path and, when the
document came from a file, its line number.
"""

from __future__ import annotations

import copy
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .. import engine, markov, rl
from ..core import ClockMode, Schedule, schedule_from_dict, validate_step_schedule
from ..recursions import BiasSign, ScalarRecursionConfig


class ExperimentKind(str, enum.Enum):
    BASA_GENERIC = "BasaGeneric"
    SCALAR_RECURSION = "ScalarRecursion"
    TD_LAMBDA = "TdLambda"
    Q_CLASSIC = "QClassic"
    Q_BATCH = "QBatch"
    MARKOV_DIAGNOSTICS = "MarkovDiagnostics"


class ConfigError(ValueError):
    """All validation problems found in one document."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid config:\n" + "\n".join(f"  - {e}" for e in self.errors))


TOP_LEVEL = {
    "kind", "name", "problem", "schedule", "clock", "horizon", "seeds",
    "stride", "c1", "threshold", "min_pass", "output", "workers",
}

PROBLEM_FIELDS = {
    ExperimentKind.TD_LAMBDA: {"transition", "rewards", "discount", "lambda", "start"},
    ExperimentKind.Q_CLASSIC: {"transitions", "rewards", "discount", "exploration", "start", "q0"},
    ExperimentKind.Q_BATCH: {"transitions", "rewards", "discount", "starts", "q0"},
    ExperimentKind.MARKOV_DIAGNOSTICS: {"transition", "start"},
    ExperimentKind.SCALAR_RECURSION: {"u0", "mu", "sigma", "bias_sign"},
    ExperimentKind.BASA_GENERIC: {"map", "theta0", "mask", "measurement", "noise"},
}

DEFAULT_SCHEDULE = {"kind": "harmonic", "c": 1.0, "t0": 1.0}


# ---------------------------------------------------------------------------
# Error collection with source lines
# ---------------------------------------------------------------------------


def _line_index(node, path=(), out=None) -> dict[tuple, int]:
    out = {} if out is None else out
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = k.value
            out[path + (key,)] = k.start_mark.line + 1
            _line_index(v, path + (key,), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_index(v, path + (i,), out)
    return out


class _Errors:
    def __init__(self, lines: dict[tuple, int] | None):
        self.lines = lines or {}
        self.items: list[str] = []

    def add(self, path: tuple, msg: str) -> None:
        name = _dotted(path) or "<document>"
        line = None
        p = tuple(path)
        while p and line is None:
            line = self.lines.get(p)
            p = p[:-1]
        where = f" (line {line})" if line is not None else ""
        self.items.append(f"{name}{where}: {msg}")

    def __bool__(self):
        return bool(self.items)


def _dotted(path) -> str:
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


# ---------------------------------------------------------------------------
# Field coercion
# ---------------------------------------------------------------------------


_MISSING = object()


def _get(d: dict, key: str, errs: _Errors, path: tuple, default=_MISSING):
    if key in d:
        return d[key]
    if default is _MISSING:
        errs.add(path + (key,), "required field is missing")
        return None
    return copy.deepcopy(default)


def _number(v, errs, path, *, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        errs.add(path, f"expected a number, got {v!r}")
        return None
    if integer:
        if isinstance(v, float) and not v.is_integer():
            errs.add(path, f"expected an integer, got {v!r}")
            return None
        return int(v)
    if not np.isfinite(v):
        errs.add(path, "must be finite")
        return None
    return float(v)


def _array(v, errs, path, ndim: int):
    try:
        a = np.array(v, dtype=float)
    except (TypeError, ValueError):
        errs.add(path, f"expected a numeric array of rank {ndim}")
        return None
    if a.ndim != ndim:
        errs.add(path, f"expected rank {ndim}, got shape {a.shape}")
        return None
    if not np.all(np.isfinite(a)):
        errs.add(path, "entries must be finite")
        return None
    return a


def _stochastic(v, errs, path):
    a = _array(v, errs, path, 2)
    if a is None:
        return None
    try:
        return markov.StochasticMatrix(a)
    except ValueError as exc:
        errs.add(path, str(exc))
        return None


def _schedule(v, errs, path, *, step=False):
    try:
        s = schedule_from_dict(v)
        if step:
            validate_step_schedule(s)
        return s
    except (ValueError, TypeError) as exc:
        errs.add(path, str(exc))
        return None


def _discount(v, errs, path):
    g = _number(v, errs, path)
    if g is not None and not 0 < g < 1:
        errs.add(path, "discount must lie in (0,1)")
        return None
    return g


def _state(v, n, errs, path):
    s = _number(v, errs, path, integer=True)
    if s is not None and n is not None and not 0 <= s < n:
        errs.add(path, f"state {s} outside [0, {n})")
        return None
    return s


def _unknown(d: dict, allowed: set, errs, path):
    for k in sorted(set(d) - allowed, key=str):
        errs.add(path + (k,), "unknown field")


# ---------------------------------------------------------------------------
# Config object
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    """A validated experiment; ``to_dict`` echoes every default explicitly."""

    kind: ExperimentKind
    name: str
    problem: dict[str, Any]
    schedule: dict[str, Any]
    clock: str
    horizon: int
    seeds: list[int]
    stride: int = 1
    c1: float = 1.0
    threshold: float | None = None
    min_pass: int | None = None
    output: dict[str, Any] = field(default_factory=dict)
    workers: int = 1

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "name": self.name,
            "problem": copy.deepcopy(self.problem),
            "schedule": copy.deepcopy(self.schedule),
            "clock": self.clock,
            "horizon": self.horizon,
            "seeds": list(self.seeds),
            "stride": self.stride,
            "c1": self.c1,
            "threshold": self.threshold,
            "min_pass": self.min_pass,
            "output": copy.deepcopy(self.output),
            "workers": self.workers,
        }

    def dump(self) -> str:
        return dump_config(self)

    # -- domain objects ---------------------------------------------------

    def step_schedule(self) -> Schedule:
        return schedule_from_dict(self.schedule)

    def clock_mode(self) -> ClockMode:
        return ClockMode(self.clock)

    def mrp(self) -> rl.MarkovRewardProcess:
        p = self.problem
        return rl.MarkovRewardProcess(p["transition"], p["rewards"], p["discount"])

    def mdp(self) -> rl.Mdp:
        p = self.problem
        return rl.Mdp(p["transitions"], p["rewards"], p["discount"])

    def chain(self) -> markov.StochasticMatrix:
        return markov.StochasticMatrix(self.problem["transition"])

    def scalar(self) -> ScalarRecursionConfig:
        p = self.problem
        return ScalarRecursionConfig(
            u0=p["u0"],
            alpha=self.step_schedule(),
            mu=schedule_from_dict(p["mu"]),
            sigma=schedule_from_dict(p["sigma"]),
            bias_sign=p["bias_sign"],
            horizon=self.horizon,
        )

    def basa(self, seed: int) -> engine.BasaConfig:
        p = self.problem
        g = engine.AffineMap(p["map"]["M"], p["map"]["b"])
        return engine.BasaConfig(
            theta0=np.array(p["theta0"], dtype=float),
            measurement=_build_measurement(g, p["measurement"]),
            noise=_build_noise(p["noise"]),
            mask=_build_mask(p["mask"], len(p["theta0"])),
            schedule=self.step_schedule(),
            clock=self.clock,
            horizon=self.horizon,
            fixed_point=g.fixed_point() if p["measurement"]["form"] == "fixed_point" else None,
            seed=seed,
            stride=self.stride,
            c1=self.c1,
        )


def _build_measurement(g, m: dict) -> engine.MeasurementModel:
    kind = m["kind"]
    if kind == "delayed":
        delays = (
            engine.cyclic_delays(len(g.b), m["bound"]) if m["delays"] == "cyclic" else engine.fixed_delays(m["delays"])
        )
        return engine.MeasurementModel.delayed(g, delays, m["bound"], form=m["form"])
    if kind == "history_average":
        return engine.MeasurementModel.history_average(g, m["window"], form=m["form"])
    return engine.MeasurementModel.memoryless(g, form=m["form"])


def _build_noise(n: dict) -> engine.NoiseModel:
    kind = engine.NoiseKind(n["kind"])
    return engine.NoiseModel(
        kind,
        mu=schedule_from_dict(n["mu"]),
        sigma=schedule_from_dict(n["sigma"]),
        c_mu=n["c_mu"],
        c_sigma=n["c_sigma"],
    )


def _build_mask(m: dict, d: int) -> engine.UpdateMaskProcess:
    kind = m["kind"]
    if kind == "all":
        return engine.AllCoordinates(d)
    if kind == "cycle":
        return engine.SingleCoordinateCycle(d)
    if kind == "index_chain":
        return engine.SingleCoordinateFromIndexChain(m["matrix"], m["start"])
    if kind == "bernoulli":
        return engine.BernoulliIndependent(m["p"])
    if kind == "batches":
        return engine.FixedBatches(d, m["partition"], m["order"])
    raise ValueError(f"unknown mask kind {kind!r}")


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def config_from_dict(doc: Any, lines: dict[tuple, int] | None = None) -> ExperimentConfig:
    """Validate a parsed document; raises ``ConfigError`` listing every problem."""
    errs = _Errors(lines)
    if not isinstance(doc, dict):
        errs.add((), "top level must be a mapping")
        raise ConfigError(errs.items)
    _unknown(doc, TOP_LEVEL, errs, ())

    kind = None
    raw_kind = _get(doc, "kind", errs, ())
    if raw_kind is not None:
        try:
            kind = ExperimentKind(raw_kind)
        except ValueError:
            errs.add(("kind",), f"unknown experiment kind {raw_kind!r}; expected one of {[k.value for k in ExperimentKind]}")

    name = _get(doc, "name", errs, (), default=(kind.value if kind else "experiment"))
    if not isinstance(name, str) or not name:
        errs.add(("name",), "must be a nonempty string")

    horizon = _get(doc, "horizon", errs, ())
    if horizon is not None:
        horizon = _number(horizon, errs, ("horizon",), integer=True)
        if horizon is not None and horizon < 1:
            errs.add(("horizon",), "must be >= 1")

    seeds = _get(doc, "seeds", errs, ())
    if seeds is not None:
        if not isinstance(seeds, list):
            errs.add(("seeds",), "must be a list of nonnegative integers")
            seeds = None
        elif not seeds:
            errs.add(("seeds",), "at least one seed is required")
        else:
            clean = []
            for i, s in enumerate(seeds):
                v = _number(s, errs, ("seeds", i), integer=True)
                if v is not None and v < 0:
                    errs.add(("seeds", i), "seeds must be nonnegative")
                clean.append(v)
            if len(set(clean)) != len(clean):
                errs.add(("seeds",), "seeds must be distinct")
            seeds = clean

    stride = _number(_get(doc, "stride", errs, (), default=1), errs, ("stride",), integer=True)
    if stride is not None and stride < 1:
        errs.add(("stride",), "must be >= 1")
    workers = _number(_get(doc, "workers", errs, (), default=1), errs, ("workers",), integer=True)
    if workers is not None and workers < 1:
        errs.add(("workers",), "must be >= 1")
    c1 = _number(_get(doc, "c1", errs, (), default=1.0), errs, ("c1",))
    if c1 is not None and c1 < 0:
        errs.add(("c1",), "must be nonnegative")

    threshold = _get(doc, "threshold", errs, (), default=None)
    if threshold is not None:
        threshold = _number(threshold, errs, ("threshold",))
        if threshold is not None and threshold <= 0:
            errs.add(("threshold",), "must be positive")
    min_pass = _get(doc, "min_pass", errs, (), default=None)
    if min_pass is not None:
        min_pass = _number(min_pass, errs, ("min_pass",), integer=True)
        if min_pass is not None:
            if threshold is None:
                errs.add(("min_pass",), "min_pass needs a threshold")
            if min_pass < 0 or (isinstance(seeds, list) and min_pass > len(seeds)):
                errs.add(("min_pass",), "must lie between 0 and the number of seeds")

    clock = _get(doc, "clock", errs, (), default="global")
    try:
        clock = ClockMode(clock).value
    except ValueError:
        errs.add(("clock",), f"clock must be 'global' or 'local', got {clock!r}")
    if kind is ExperimentKind.Q_CLASSIC and clock == "local":
        errs.add(("clock",), "classic Q-learning uses the global clock")

    sched = _get(doc, "schedule", errs, (), default=DEFAULT_SCHEDULE)
    s = _schedule(sched, errs, ("schedule",), step=kind is not ExperimentKind.SCALAR_RECURSION)
    sched = s.to_dict() if s is not None else None
    if s is not None and kind is ExperimentKind.SCALAR_RECURSION:
        if not (s.min_value() >= 0 and s.max_value() < 1):
            errs.add(("schedule",), "alpha must lie in [0, 1)")

    output = _get(doc, "output", errs, (), default={})
    if not isinstance(output, dict):
        errs.add(("output",), "must be a mapping")
        output = {}
    _unknown(output, {"dir", "prefix"}, errs, ("output",))
    output = {
        "dir": str(output.get("dir", "runs")),
        "prefix": str(output.get("prefix", name if isinstance(name, str) else "experiment")),
    }

    problem = _get(doc, "problem", errs, ())
    if problem is not None and not isinstance(problem, dict):
        errs.add(("problem",), "must be a mapping")
        problem = None
    if problem is not None and kind is not None:
        _unknown(problem, PROBLEM_FIELDS[kind], errs, ("problem",))
        problem = _VALIDATORS[kind](problem, errs, ("problem",))

    if errs:
        raise ConfigError(errs.items)
    return ExperimentConfig(
        kind=kind,
        name=name,
        problem=problem,
        schedule=sched,
        clock=clock,
        horizon=horizon,
        seeds=seeds,
        stride=stride,
        c1=c1,
        threshold=threshold,
        min_pass=min_pass,
        output=output,
        workers=workers,
    )


def _td_problem(p, errs, path):
    A = _stochastic(_get(p, "transition", errs, path), errs, path + ("transition",))
    n = A.n if A is not None else None
    r = _array(_get(p, "rewards", errs, path), errs, path + ("rewards",), 1)
    if r is not None and n is not None and r.shape != (n,):
        errs.add(path + ("rewards",), f"expected {n} rewards, got {r.shape[0]}")
    g = _discount(_get(p, "discount", errs, path), errs, path + ("discount",))
    lam = _number(_get(p, "lambda", errs, path, default=0.0), errs, path + ("lambda",))
    if lam is not None and not 0 <= lam < 1:
        errs.add(path + ("lambda",), "lambda must lie in [0, 1)")
    start = _state(_get(p, "start", errs, path, default=0), n, errs, path + ("start",))
    if A is not None and not markov.is_irreducible(A):
        errs.add(path + ("transition",), "transition matrix is reducible; TD(lambda) needs an irreducible chain")
    return {
        "transition": A.entries.tolist() if A is not None else None,
        "rewards": r.tolist() if r is not None else None,
        "discount": g,
        "lambda": lam,
        "start": start,
    }


def _mdp_common(p, errs, path):
    raw = _get(p, "transitions", errs, path)
    mats = []
    if raw is not None:
        if not isinstance(raw, list) or not raw:
            errs.add(path + ("transitions",), "expected a nonempty list of per-action matrices")
        else:
            mats = [_stochastic(a, errs, path + ("transitions", k)) for k, a in enumerate(raw)]
    good = [a for a in mats if a is not None]
    n = good[0].n if good else None
    for k, a in enumerate(mats):
        if a is not None and a.n != n:
            errs.add(path + ("transitions", k), f"action {k} matrix is {a.n}x{a.n}, expected {n}x{n}")
    m = len(mats) if mats else None
    R = _array(_get(p, "rewards", errs, path), errs, path + ("rewards",), 2)
    if R is not None and n is not None and m is not None and R.shape != (n, m):
        errs.add(path + ("rewards",), f"reward table has shape {R.shape}, expected ({n}, {m})")
    g = _discount(_get(p, "discount", errs, path), errs, path + ("discount",))
    q0 = _get(p, "q0", errs, path, default=None)
    if q0 is not None:
        q = _array(q0, errs, path + ("q0",), 2)
        if q is not None and n is not None and m is not None and q.shape != (n, m):
            errs.add(path + ("q0",), f"initial Q has shape {q.shape}, expected ({n}, {m})")
        q0 = q.tolist() if q is not None else None
    out = {
        "transitions": [a.entries.tolist() if a is not None else None for a in mats],
        "rewards": R.tolist() if R is not None else None,
        "discount": g,
        "q0": q0,
    }
    return out, mats, n, m


def _qclassic_problem(p, errs, path):
    out, _, n, _ = _mdp_common(p, errs, path)
    ex = _get(p, "exploration", errs, path, default={"kind": "uniform"})
    if not isinstance(ex, dict):
        errs.add(path + ("exploration",), "must be a mapping")
        ex = {"kind": "uniform"}
    _unknown(ex, {"kind", "epsilon"}, errs, path + ("exploration",))
    try:
        pol = rl.ExplorationPolicy(ex.get("kind", "uniform"), float(ex.get("epsilon", 0.1)))
        out["exploration"] = {"kind": pol.kind.value, "epsilon": pol.epsilon}
    except (ValueError, TypeError) as exc:
        errs.add(path + ("exploration",), str(exc))
    out["start"] = _state(_get(p, "start", errs, path, default=0), n, errs, path + ("start",))
    return out


def _qbatch_problem(p, errs, path):
    out, mats, n, m = _mdp_common(p, errs, path)
    for k, a in enumerate(mats):
        if a is not None and not markov.is_irreducible(a):
            errs.add(path + ("transitions", k), f"action {k} has a reducible transition matrix")
    starts = _get(p, "starts", errs, path, default=None)
    if starts is not None:
        if not isinstance(starts, list) or (m is not None and len(starts) != m):
            errs.add(path + ("starts",), f"need one start state per action ({m})")
            starts = None
        else:
            starts = [_state(s, n, errs, path + ("starts", i)) for i, s in enumerate(starts)]
    out["starts"] = starts
    return out


def _markov_problem(p, errs, path):
    A = _stochastic(_get(p, "transition", errs, path), errs, path + ("transition",))
    n = A.n if A is not None else None
    start = _state(_get(p, "start", errs, path, default=0), n, errs, path + ("start",))
    if A is not None and not markov.is_irreducible(A):
        errs.add(path + ("transition",), "transition matrix is reducible; the stationary law is not unique")
    return {"transition": A.entries.tolist() if A is not None else None, "start": start}


def _scalar_problem(p, errs, path):
    u0 = _number(_get(p, "u0", errs, path, default=0.0), errs, path + ("u0",))
    mu = _schedule(_get(p, "mu", errs, path, default=0.0), errs, path + ("mu",))
    sigma = _schedule(_get(p, "sigma", errs, path, default=0.0), errs, path + ("sigma",))
    for key, s in (("mu", mu), ("sigma", sigma)):
        if s is not None and s.min_value() < 0:
            errs.add(path + (key,), f"{key} must be nonnegative")
    sign = _get(p, "bias_sign", errs, path, default="positive")
    try:
        sign = BiasSign(sign).value
    except ValueError:
        errs.add(path + ("bias_sign",), f"expected one of {[b.value for b in BiasSign]}")
    return {
        "u0": u0,
        "mu": mu.to_dict() if mu is not None else None,
        "sigma": sigma.to_dict() if sigma is not None else None,
        "bias_sign": sign,
    }


_MASK_FIELDS = {
    "all": set(),
    "cycle": set(),
    "index_chain": {"matrix", "start"},
    "bernoulli": {"p"},
    "batches": {"partition", "order"},
}


def _basa_problem(p, errs, path):
    mp = _get(p, "map", errs, path)
    M = b = None
    if mp is not None:
        if not isinstance(mp, dict):
            errs.add(path + ("map",), "expected a mapping with M and b")
        else:
            _unknown(mp, {"M", "b"}, errs, path + ("map",))
            M = _array(_get(mp, "M", errs, path + ("map",)), errs, path + ("map", "M"), 2)
            b = _array(_get(mp, "b", errs, path + ("map",)), errs, path + ("map", "b"), 1)
            if M is not None and b is not None and (M.shape[0] != M.shape[1] or M.shape[0] != b.shape[0]):
                errs.add(path + ("map",), f"M {M.shape} and b {b.shape} are inconsistent")
                M = None
    d = b.shape[0] if b is not None else None
    theta0 = _get(p, "theta0", errs, path, default=None)
    if theta0 is None and d is not None:
        theta0 = [0.0] * d
    elif theta0 is not None:
        th = _array(theta0, errs, path + ("theta0",), 1)
        if th is not None and d is not None and th.shape != (d,):
            errs.add(path + ("theta0",), f"theta0 has {th.shape[0]} entries, the map has {d}")
        theta0 = th.tolist() if th is not None else None

    mask = _get(p, "mask", errs, path, default={"kind": "all"})
    mk = mask.get("kind") if isinstance(mask, dict) else None
    if mk not in _MASK_FIELDS:
        errs.add(path + ("mask",), f"mask kind must be one of {sorted(_MASK_FIELDS)}")
        mask = None
    else:
        _unknown(mask, _MASK_FIELDS[mk] | {"kind"}, errs, path + ("mask",))
        mask = {"kind": mk, **{k: copy.deepcopy(mask.get(k)) for k in _MASK_FIELDS[mk]}}
        if mk == "index_chain" and mask["start"] is None:
            mask["start"] = 0
        if mk == "batches" and mask["order"] is None and isinstance(mask["partition"], list):
            mask["order"] = list(range(len(mask["partition"])))
        if d is not None:
            try:
                proc = _build_mask(mask, d)
                if proc.d != d:
                    errs.add(path + ("mask",), f"mask process has dimension {proc.d}, the map has {d}")
                mask = proc.to_dict() | {"kind": mk}
                mask.pop("d", None)
            except (ValueError, TypeError, KeyError) as exc:
                errs.add(path + ("mask",), str(exc))

    meas = _get(p, "measurement", errs, path, default={"kind": "memoryless"})
    if not isinstance(meas, dict):
        errs.add(path + ("measurement",), "must be a mapping")
        meas = {"kind": "memoryless"}
    mkind = meas.get("kind", "memoryless")
    allowed = {"kind", "form"} | {"delayed": {"delays", "bound"}, "history_average": {"window"}}.get(mkind, set())
    _unknown(meas, allowed, errs, path + ("measurement",))
    meas_out = {"kind": mkind, "form": meas.get("form", "fixed_point")}
    if mkind == "delayed":
        meas_out["delays"] = meas.get("delays", "cyclic")
        meas_out["bound"] = meas.get("bound", 1)
    elif mkind == "history_average":
        meas_out["window"] = meas.get("window", 1)
    if M is not None and b is not None:
        try:
            _build_measurement(engine.AffineMap(M, b), meas_out)
            if mkind == "delayed" and meas_out["delays"] != "cyclic":
                lag = np.asarray(meas_out["delays"])
                if lag.shape != (d,) or np.any(lag < 0) or np.any(lag > meas_out["bound"] - 1):
                    raise ValueError(f"delays must be {d} integers in [0, {meas_out['bound'] - 1}]")
        except (ValueError, TypeError) as exc:
            errs.add(path + ("measurement",), str(exc))

    noise = _get(p, "noise", errs, path, default={"kind": "none"})
    noise_out = None
    if not isinstance(noise, dict):
        errs.add(path + ("noise",), "must be a mapping")
    else:
        _unknown(noise, {"kind", "mu", "sigma", "c_mu", "c_sigma"}, errs, path + ("noise",))
        try:
            n = engine.NoiseModel(
                engine.NoiseKind(noise.get("kind", "none")),
                mu=schedule_from_dict(noise.get("mu", 0.0)),
                sigma=schedule_from_dict(noise.get("sigma", 0.0)),
                c_mu=float(noise.get("c_mu", 1.0)),
                c_sigma=float(noise.get("c_sigma", 1.0)),
            )
            noise_out = n.to_dict()
        except (ValueError, TypeError) as exc:
            errs.add(path + ("noise",), str(exc))
    return {
        "map": {"M": M.tolist(), "b": b.tolist()} if M is not None and b is not None else None,
        "theta0": theta0,
        "mask": mask,
        "measurement": meas_out,
        "noise": noise_out,
    }


_VALIDATORS = {
    ExperimentKind.TD_LAMBDA: _td_problem,
    ExperimentKind.Q_CLASSIC: _qclassic_problem,
    ExperimentKind.Q_BATCH: _qbatch_problem,
    ExperimentKind.MARKOV_DIAGNOSTICS: _markov_problem,
    ExperimentKind.SCALAR_RECURSION: _scalar_problem,
    ExperimentKind.BASA_GENERIC: _basa_problem,
}


# ---------------------------------------------------------------------------
# YAML I/O
# ---------------------------------------------------------------------------


def loads_config(text: str) -> ExperimentConfig:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ConfigError([f"parse error at {where}: {exc.problem}"]) from None
    except yaml.YAMLError as exc:
        raise ConfigError([f"parse error: {exc}"]) from None
    lines = _line_index(node) if node is not None else {}
    return config_from_dict(doc, lines)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"{path}: no such config file"])
    return loads_config(path.read_text(encoding="utf-8"))


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=None)
