"""Shared numeric primitives: sup-norm, deterministic schedules and clocks.

Every deterministic sequence in this package (step sizes, noise bias and
noise scale envelopes) is a function of a *tick index* ``n >= 1``: the number
of occasions counted so far, including the current one.  A local clock ticks
once per update of a coordinate; the global clock ticks once per iteration, so
at iteration ``t`` (starting at 0) the global tick is ``t + 1``.  Index 0 is
never consumed, which lets the familiar harmonic schedule ``1/(n+1)`` stay
strictly inside ``(0, 1)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

__all__ = [
    "Verdict",
    "Schedule",
    "Harmonic",
    "HarmonicLog",
    "PowerLaw",
    "LogPower",
    "Constant",
    "Custom",
    "schedule_from_dict",
    "validate_step_schedule",
    "series_verdict",
    "product_rate",
    "RobbinsMonroReport",
    "check_robbins_monro",
    "ClockMode",
    "ClockState",
    "resolve_step",
    "sup_norm",
]


class Verdict(str, enum.Enum):
    PASS = "pass"
    FAIL = "fail"
    INCONCLUSIVE = "inconclusive"


def sup_norm(v) -> float:
    """Return ``max_i |v_i|`` (0.0 for the zero vector)."""
    a = np.asarray(v, dtype=float)
    if a.size == 0:
        return 0.0
    if not np.all(np.isfinite(a)):
        raise ValueError("sup_norm requires a finite vector")
    return float(np.max(np.abs(a)))


# ---------------------------------------------------------------------------
# Schedules
# ---------------------------------------------------------------------------

# Asymptotic rate of a sequence: x_n ~ coef * n**(-p) * log(n)**(-q).
# ``None`` as a rate means the sequence is identically zero.
Rate = "tuple[float, float] | None"


class Schedule:
    """A deterministic real sequence indexed by tick ``n >= 1``."""

    kind: str = ""

    def __call__(self, n: int) -> float:
        return float(self.values(n, n + 1)[0])

    def values(self, start: int, stop: int) -> np.ndarray:
        """Vectorised evaluation at ticks ``start, ..., stop - 1``."""
        raise NotImplementedError

    def rate(self):
        """Asymptotic ``(p, q)`` exponents, ``None`` for the zero sequence."""
        raise NotImplementedError

    def is_nonincreasing(self) -> bool:
        raise NotImplementedError

    def max_value(self) -> float:
        """Supremum over ticks ``n >= 1``."""
        raise NotImplementedError

    def min_value(self) -> float:
        """Infimum over ticks ``n >= 1``."""
        raise NotImplementedError

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError


@dataclass(frozen=True)
class _PowerLogFamily(Schedule):
    """``c * (n + t0)**(-p) * log(n + t0)**(-q)``; concrete kinds fix p, q."""

    c: float = 1.0
    t0: float = 1.0

    @property
    def _p(self) -> float:
        raise NotImplementedError

    @property
    def _q(self) -> float:
        raise NotImplementedError

    def __post_init__(self):
        if not math.isfinite(self.c) or not math.isfinite(self.t0):
            raise ValueError(f"{self.kind}: parameters must be finite")
        if self._q != 0 and 1 + self.t0 <= 1:
            raise ValueError(f"{self.kind}: t0 must be > 0 so that log(n + t0) > 0")
        if 1 + self.t0 <= 0:
            raise ValueError(f"{self.kind}: t0 must be > -1")

    def values(self, start, stop):
        x = np.arange(start, stop, dtype=float) + self.t0
        out = self.c * x ** (-self._p)
        if self._q:
            out = out * np.log(x) ** (-self._q)
        return out

    def rate(self):
        if self.c == 0:
            return None
        return (float(self._p), float(self._q))

    def _monotone_sign(self) -> int:
        # sign of d/dx [x**-p log(x)**-q] for x >= 1 + t0.  With p >= 0, q >= 0
        # the function is nonincreasing; q > 0 also needs log(x) > 0.
        p, q = self._p, self._q
        if self.c == 0 or (p == 0 and q == 0):
            return 0
        if p >= 0 and q >= 0:
            return -1
        if p <= 0 and q <= 0:
            return 1
        return 2  # mixed signs, not monotone in general

    def is_nonincreasing(self) -> bool:
        s = self._monotone_sign()
        if s in (0, -1):
            return self.c >= 0
        if s == 1:
            return self.c <= 0
        return bool(np.all(np.diff(self.values(1, 10_000)) <= 0))

    def max_value(self) -> float:
        s = self._monotone_sign()
        first = float(self.values(1, 2)[0])
        if s == 0:
            return first
        if (s == -1 and self.c >= 0) or (s == 1 and self.c <= 0):
            return first
        return math.inf if self.c > 0 else 0.0

    def min_value(self) -> float:
        s = self._monotone_sign()
        first = float(self.values(1, 2)[0])
        if s == 0:
            return first
        if (s == -1 and self.c >= 0) or (s == 1 and self.c <= 0):
            # nonincreasing towards its limit
            if self._p > 0 or self._q > 0:
                return 0.0 if self.c >= 0 else -math.inf
            return first
        return 0.0 if self.c > 0 else -math.inf

    def to_dict(self):
        return {"kind": self.kind, "c": self.c, "t0": self.t0}


@dataclass(frozen=True)
class Harmonic(_PowerLogFamily):
    """``c / (n + t0)``; the default is ``1/(n+1)``."""

    kind = "harmonic"
    _p = 1.0
    _q = 0.0


@dataclass(frozen=True)
class HarmonicLog(_PowerLogFamily):
    """``c / ((n + t0) log(n + t0))``."""

    t0: float = 2.0
    kind = "harmonic_log"
    _p = 1.0
    _q = 1.0


@dataclass(frozen=True)
class PowerLaw(_PowerLogFamily):
    """``c / (n + t0)**p``.  Negative ``p`` gives growing envelopes."""

    p: float = 1.0
    kind = "power_law"

    @property
    def _p(self):
        return self.p

    _q = 0.0

    def to_dict(self):
        return {"kind": self.kind, "p": self.p, "c": self.c, "t0": self.t0}


@dataclass(frozen=True)
class LogPower(_PowerLogFamily):
    """``c / log(n + t0)**q``, e.g. ``1/sqrt(log(n+2))`` with ``q=0.5``."""

    q: float = 1.0
    t0: float = 2.0
    kind = "log_power"
    _p = 0.0

    @property
    def _q(self):
        return self.q

    def to_dict(self):
        return {"kind": self.kind, "q": self.q, "c": self.c, "t0": self.t0}


@dataclass(frozen=True)
class Constant(Schedule):
    value: float = 0.0
    kind = "constant"

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError("constant: value must be finite")

    def values(self, start, stop):
        return np.full(max(stop - start, 0), float(self.value))

    def rate(self):
        return None if self.value == 0 else (0.0, 0.0)

    def is_nonincreasing(self):
        return True

    def max_value(self):
        return float(self.value)

    def min_value(self):
        return float(self.value)

    def to_dict(self):
        return {"kind": self.kind, "value": self.value}


@dataclass(frozen=True)
class Custom(Schedule):
    """Explicit table for ticks ``1..len(table)`` followed by an analytic tail.

    The tail is evaluated at the same tick index (no re-basing), so the
    sequence is ``table[n-1]`` for ``n <= len(table)`` and ``tail(n)`` after.
    """

    table: tuple = ()
    tail: Schedule | None = None
    kind = "custom"

    def __post_init__(self):
        object.__setattr__(self, "table", tuple(float(x) for x in self.table))
        if not self.table:
            raise ValueError("custom: table must be nonempty")
        if not all(math.isfinite(x) for x in self.table):
            raise ValueError("custom: table entries must be finite")
        if self.tail is None:
            raise ValueError(
                "custom: an analytic tail is required; a finite table cannot "
                "decide summability"
            )

    def values(self, start, stop):
        out = np.empty(max(stop - start, 0))
        L = len(self.table)
        for k, n in enumerate(range(start, stop)):
            if 1 <= n <= L:
                out[k] = self.table[n - 1]
            elif n > L:
                out[k:] = self.tail.values(n, stop)
                break
            else:
                raise ValueError(f"custom: tick {n} outside the table domain")
        return out

    def rate(self):
        return self.tail.rate()

    def is_nonincreasing(self):
        L = len(self.table)
        head = np.diff(np.asarray(self.table))
        junction = self.tail(L + 1) <= self.table[-1]
        return bool(np.all(head <= 0) and junction and self.tail.is_nonincreasing())

    def max_value(self):
        return max(max(self.table), self.tail.max_value())

    def min_value(self):
        return min(min(self.table), self.tail.min_value())

    def to_dict(self):
        return {"kind": self.kind, "table": list(self.table), "tail": self.tail.to_dict()}


_KINDS = {
    "harmonic": Harmonic,
    "harmonic_log": HarmonicLog,
    "power_law": PowerLaw,
    "log_power": LogPower,
    "constant": Constant,
}


def schedule_from_dict(doc: dict[str, Any] | float | int) -> Schedule:
    """Inverse of ``Schedule.to_dict``.  A bare number is a constant."""
    if isinstance(doc, (int, float)) and not isinstance(doc, bool):
        return Constant(float(doc))
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ValueError(f"schedule must be a mapping with a 'kind': {doc!r}")
    params = dict(doc)
    kind = params.pop("kind")
    if kind == "custom":
        if "tail" not in params:
            raise ValueError("custom: an analytic tail is required")
        return Custom(table=tuple(params.get("table", ())), tail=schedule_from_dict(params["tail"]))
    if kind not in _KINDS:
        raise ValueError(f"unknown schedule kind {kind!r}; expected one of {sorted(_KINDS) + ['custom']}")
    try:
        return _KINDS[kind](**{k: float(v) for k, v in params.items()})
    except TypeError as exc:
        raise ValueError(f"{kind}: {exc}") from None


def validate_step_schedule(s: Schedule) -> None:
    """Raise ``ValueError`` unless every tick value lies in ``(0, 1)``."""
    lo, hi = s.min_value(), s.max_value()
    if not hi < 1.0:
        raise ValueError(f"step schedule {s.to_dict()} reaches {hi!r}; values must lie in (0, 1)")
    if lo < 0 or (lo == 0 and isinstance(s, Constant)):
        raise ValueError(f"step schedule {s.to_dict()} reaches {lo!r}; values must lie in (0, 1)")
    if isinstance(s, Custom) and min(s.table) <= 0:
        raise ValueError("step schedule table values must lie in (0, 1)")
    if s.rate() is None:
        raise ValueError("step schedule is identically zero; values must lie in (0, 1)")


# ---------------------------------------------------------------------------
# Summability algebra
# ---------------------------------------------------------------------------

def product_rate(*rates):
    """Rate of a product of sequences; ``None`` if any factor is zero."""
    p = q = 0.0
    for r in rates:
        if r is None:
            return None
        p += r[0]
        q += r[1]
    return (p, q)


def series_verdict(rate) -> bool:
    """True iff ``sum_n n**-p log(n)**-q`` converges (Bertrand's test)."""
    if rate is None:
        return True
    p, q = rate
    return p > 1 or (p == 1 and q > 1)


@dataclass
class RobbinsMonroReport:
    square_summable: Verdict
    divergent: Verdict
    basis: str
    horizon: int
    partial_sum: float
    partial_sum_sq: float

    def passes(self) -> bool:
        return self.square_summable is Verdict.PASS and self.divergent is Verdict.PASS

    def to_dict(self):
        return {
            "square_summable": self.square_summable.value,
            "divergent": self.divergent.value,
            "basis": self.basis,
            "horizon": self.horizon,
            "partial_sum": self.partial_sum,
            "partial_sum_sq": self.partial_sum_sq,
        }


def check_robbins_monro(s: Schedule, horizon: int = 10_000) -> RobbinsMonroReport:
    """Robbins-Monro verdicts: ``sum beta^2 < inf`` and ``sum beta = inf``.

    Analytic kinds are decided exactly from their asymptotic rate.  A custom
    table is decided from its declared tail, since a finite prefix never
    changes convergence; partial sums over ``horizon`` ticks are reported as
    evidence in every case.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    validate_step_schedule(s)
    vals = s.values(1, horizon + 1)
    rate = s.rate()
    if rate is None:
        sq, div, basis = Verdict.INCONCLUSIVE, Verdict.INCONCLUSIVE, "unknown"
    else:
        sq = Verdict.PASS if series_verdict(product_rate(rate, rate)) else Verdict.FAIL
        div = Verdict.FAIL if series_verdict(rate) else Verdict.PASS
        basis = "tail" if isinstance(s, Custom) else "analytic"
    return RobbinsMonroReport(
        square_summable=sq,
        divergent=div,
        basis=basis,
        horizon=horizon,
        partial_sum=float(vals.sum()),
        partial_sum_sq=float((vals**2).sum()),
    )


# ---------------------------------------------------------------------------
# Clocks
# ---------------------------------------------------------------------------

class ClockMode(str, enum.Enum):
    GLOBAL = "global"
    LOCAL = "local"


@dataclass
class ClockState:
    """Per-coordinate update counters plus the global iteration count.

    ``counters[i]`` is the number of past iterations that updated coordinate
    ``i``; ``t`` is the number of completed iterations.
    """

    mode: ClockMode
    counters: np.ndarray
    t: int = 0

    @classmethod
    def new(cls, mode: ClockMode | str, d: int) -> "ClockState":
        if d < 1:
            raise ValueError("dimension must be >= 1")
        return cls(ClockMode(mode), np.zeros(d, dtype=np.int64), 0)


def resolve_step(s: Schedule, clock: ClockState, mask: Sequence[bool]) -> np.ndarray:
    """Return the step vector for the current iteration and advance ``clock``.

    Off the mask the step is exactly zero.  On the mask it is ``s(t + 1)`` for
    the global clock and ``s(counters[i])`` for the local clock, where the
    counter includes the current occasion.
    """
    m = np.asarray(mask, dtype=bool)
    if m.shape != clock.counters.shape:
        raise ValueError(f"mask has shape {m.shape}, clock has {clock.counters.shape}")
    clock.counters += m
    alpha = np.zeros(m.shape)
    if clock.mode is ClockMode.GLOBAL:
        alpha[m] = s(clock.t + 1)
    else:
        for i in np.flatnonzero(m):
            alpha[i] = s(int(clock.counters[i]))
    clock.t += 1
    return alpha
