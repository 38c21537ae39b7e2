"""Generic batch asynchronous stochastic approximation.

Iterates ``theta_{t+1} = theta_t + alpha_t * (eta_t + xi_{t+1})`` where only
coordinates in the update set ``S(t)`` move, ``eta_t`` is a nonanticipative
measurement of the iterate history and ``xi_{t+1}`` is additive noise.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from . import streams
from .core import (
    ClockMode,
    ClockState,
    Constant,
    Schedule,
    product_rate,
    series_verdict,
    sup_norm,
    validate_step_schedule,
)
from .markov import ChainSampler, as_stochastic, is_irreducible
from .trace import RunTrace, TraceRecorder

# ---------------------------------------------------------------------------
# Update masks
# ---------------------------------------------------------------------------


class UpdateMaskProcess:
    """Emits ``kappa_t in {0,1}^d``; subclasses define the update pattern."""

    kind = ""

    def __init__(self, d: int):
        if d < 1:
            raise ValueError("dimension must be >= 1")
        self.d = d

    def start(self, rng: np.random.Generator) -> None:
        """Reset internal state and bind the mask stream."""

    def next_mask(self, t: int) -> np.ndarray:
        raise NotImplementedError

    def updates_every_coordinate(self) -> bool:
        """Whether every coordinate is (a.s.) updated infinitely often."""
        return True

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "d": self.d}


class AllCoordinates(UpdateMaskProcess):
    kind = "all"

    def next_mask(self, t):
        return np.ones(self.d, dtype=bool)


class SingleCoordinateCycle(UpdateMaskProcess):
    kind = "cycle"

    def next_mask(self, t):
        m = np.zeros(self.d, dtype=bool)
        m[t % self.d] = True
        return m


class SingleCoordinateFromIndexChain(UpdateMaskProcess):
    """Updates the coordinate given by the current state of a Markov chain."""

    kind = "index_chain"

    def __init__(self, A, start: int = 0):
        self.P = as_stochastic(A)
        super().__init__(self.P.n)
        self.start_state = start
        self._sampler = None

    def start(self, rng):
        self._sampler = ChainSampler(self.P, self.start_state, streams.Draws(rng))
        self._first = True

    def next_mask(self, t):
        if self._first:
            self._first = False
            i = self._sampler.state
        else:
            i = self._sampler.step()
        m = np.zeros(self.d, dtype=bool)
        m[i] = True
        return m

    def updates_every_coordinate(self):
        return is_irreducible(self.P)

    def to_dict(self):
        return {"kind": self.kind, "matrix": self.P.entries.tolist(), "start": self.start_state}


class BernoulliIndependent(UpdateMaskProcess):
    kind = "bernoulli"

    def __init__(self, p: Sequence[float]):
        self.p = np.asarray(p, dtype=float)
        if self.p.ndim != 1 or np.any(self.p < 0) or np.any(self.p > 1):
            raise ValueError("bernoulli probabilities must be a vector in [0, 1]")
        super().__init__(len(self.p))

    def start(self, rng):
        self._rng = rng

    def next_mask(self, t):
        return self._rng.random(self.d) < self.p

    def updates_every_coordinate(self):
        return bool(np.all(self.p > 0))

    def to_dict(self):
        return {"kind": self.kind, "p": self.p.tolist()}


class FixedBatches(UpdateMaskProcess):
    """Cycles through ``order`` (indices into ``partition``) deterministically."""

    kind = "batches"

    def __init__(self, d: int, partition: Sequence[Sequence[int]], order: Sequence[int] | None = None):
        super().__init__(d)
        self.partition = [sorted(int(i) for i in b) for b in partition]
        flat = sorted(i for b in self.partition for i in b)
        if flat != list(range(d)):
            raise ValueError("batches must partition the coordinates 0..d-1")
        self.order = list(range(len(self.partition))) if order is None else [int(k) for k in order]
        if not self.order or any(not 0 <= k < len(self.partition) for k in self.order):
            raise ValueError("batch order must index the partition")

    def next_mask(self, t):
        m = np.zeros(self.d, dtype=bool)
        m[self.partition[self.order[t % len(self.order)]]] = True
        return m

    def updates_every_coordinate(self):
        return set(self.order) == set(range(len(self.partition)))

    def to_dict(self):
        return {"kind": self.kind, "d": self.d, "partition": self.partition, "order": self.order}


# ---------------------------------------------------------------------------
# Measurement maps
# ---------------------------------------------------------------------------


class AffineMap:
    """``g(x) = M x + b``; its sup-norm Lipschitz constant is the max row sum of ``|M|``."""

    def __init__(self, M, b):
        self.M = np.array(M, dtype=float)
        self.b = np.array(b, dtype=float)
        if self.M.ndim != 2 or self.M.shape[0] != self.M.shape[1] or self.b.shape != (self.M.shape[0],):
            raise ValueError("affine map needs a square M and matching b")

    def __call__(self, x):
        return self.M @ x + self.b

    @property
    def lipschitz(self) -> float:
        return float(np.abs(self.M).sum(axis=1).max())

    def fixed_point(self) -> np.ndarray:
        return np.linalg.solve(np.eye(len(self.b)) - self.M, self.b)

    def to_dict(self):
        return {"M": self.M.tolist(), "b": self.b.tolist()}


class Form(str, enum.Enum):
    # FIXED_POINT: eta = g(.) - theta_t, so theta moves towards a fixed point of g.
    # ZERO_FINDING: eta = g(.), so theta moves towards a zero of g.
    FIXED_POINT = "fixed_point"
    ZERO_FINDING = "zero_finding"


def cyclic_delays(d: int, bound: int) -> Callable[[int], np.ndarray]:
    """``Delta_i(t) = (t + i) mod bound``."""
    idx = np.arange(d)
    return lambda t: (t + idx) % bound


def fixed_delays(delays: Sequence[int]) -> Callable[[int], np.ndarray]:
    arr = np.asarray(delays, dtype=np.int64)
    return lambda t: arr


class MeasurementModel:
    """Nonanticipative measurement ``eta_t = h(t, theta_0^t)``.

    ``kind`` is one of ``memoryless``, ``delayed`` or ``history_average``.
    ``window`` is the number of past iterates the map may read (the history
    buffer length).  ``contraction`` is the declared sup-norm Lipschitz
    constant of ``g``; when it is below 1 in fixed-point form, the model
    contracts over its window.
    """

    def __init__(
        self,
        g: Callable[[np.ndarray], np.ndarray],
        *,
        kind: str = "memoryless",
        form: Form | str = Form.FIXED_POINT,
        contraction: float | None = None,
        delays: Callable[[int], np.ndarray] | None = None,
        window: int = 1,
    ):
        self.g = g
        self.kind = kind
        self.form = Form(form)
        if contraction is None and isinstance(g, AffineMap):
            contraction = g.lipschitz
        self.contraction = contraction
        if window < 1:
            raise ValueError("window must be >= 1")
        if kind == "memoryless":
            window = 1
        elif kind == "delayed":
            if delays is None:
                raise ValueError("delayed measurement needs a delay assignment")
        elif kind != "history_average":
            raise ValueError(f"unknown measurement kind {kind!r}")
        self.delays = delays
        self.window = window

    @classmethod
    def memoryless(cls, g, **kw):
        return cls(g, kind="memoryless", **kw)

    @classmethod
    def delayed(cls, g, delays, bound: int, **kw):
        return cls(g, kind="delayed", delays=delays, window=bound, **kw)

    @classmethod
    def history_average(cls, g, window: int, **kw):
        return cls(g, kind="history_average", window=window, **kw)

    def _argument(self, t: int, history: Sequence[np.ndarray]) -> np.ndarray | list:
        cur = history[-1]
        if self.kind == "memoryless":
            return cur
        if self.kind == "delayed":
            lag = np.asarray(self.delays(t), dtype=np.int64)
            if lag.shape != cur.shape or np.any(lag < 0) or np.any(lag > self.window - 1):
                raise ValueError(f"delays at t={t} must lie in [0, {self.window - 1}]")
            # history[-1 - k] is theta_{t-k}; before t = window the oldest is theta_0
            lag = np.minimum(lag, len(history) - 1)
            return np.array([history[-1 - lag[i]][i] for i in range(len(cur))])
        return [history[-1 - k] if k < len(history) else history[0] for k in range(self.window)]

    def __call__(self, t: int, history: Sequence[np.ndarray]) -> np.ndarray:
        cur = history[-1]
        arg = self._argument(t, history)
        if self.kind == "history_average":
            val = np.mean([np.asarray(self.g(x), dtype=float) for x in arg], axis=0)
        else:
            val = np.asarray(self.g(arg), dtype=float)
        if val.shape != cur.shape:
            raise ValueError(f"measurement has shape {val.shape}, iterate has {cur.shape}")
        return val - cur if self.form is Form.FIXED_POINT else val

    def map_value(self, t: int, history: Sequence[np.ndarray]) -> np.ndarray:
        """``h(t, theta_0^t)`` as a map whose fixed point is sought (no ``- theta_t``)."""
        arg = self._argument(t, history)
        if self.kind == "history_average":
            return np.mean([np.asarray(self.g(x), dtype=float) for x in arg], axis=0)
        return np.asarray(self.g(arg), dtype=float)


# ---------------------------------------------------------------------------
# Noise
# ---------------------------------------------------------------------------


class NoiseKind(str, enum.Enum):
    NONE = "none"
    MARTINGALE_GAUSSIAN = "martingale_gaussian"
    BIASED_GAUSSIAN = "biased_gaussian"
    INTRINSIC = "intrinsic"


@dataclass
class NoiseModel:
    """Additive noise with envelopes scaled by ``1 + ||theta_0^t||``.

    Biased noise has conditional mean ``c_mu * mu(t+1) * scale`` in every
    coordinate and conditional standard deviation ``c_sigma * sigma(t+1) *
    scale``, which sits exactly on the envelopes it declares.
    """

    kind: NoiseKind = NoiseKind.NONE
    mu: Schedule = field(default_factory=lambda: Constant(0.0))
    sigma: Schedule = field(default_factory=lambda: Constant(0.0))
    c_mu: float = 1.0
    c_sigma: float = 1.0

    def __post_init__(self):
        self.kind = NoiseKind(self.kind)
        if self.kind is NoiseKind.MARTINGALE_GAUSSIAN and self.mu.rate() is not None:
            raise ValueError("martingale noise has zero conditional mean; mu must be 0")
        if self.mu.min_value() < 0 or self.sigma.min_value() < 0:
            raise ValueError("noise envelopes must be nonnegative")

    @classmethod
    def none(cls):
        return cls(NoiseKind.NONE)

    @classmethod
    def martingale(cls, sigma: Schedule, c_sigma: float = 1.0):
        return cls(NoiseKind.MARTINGALE_GAUSSIAN, sigma=sigma, c_sigma=c_sigma)

    @classmethod
    def biased(cls, mu: Schedule, sigma: Schedule, c_mu: float = 1.0, c_sigma: float = 1.0):
        return cls(NoiseKind.BIASED_GAUSSIAN, mu=mu, sigma=sigma, c_mu=c_mu, c_sigma=c_sigma)

    @classmethod
    def intrinsic(cls):
        return cls(NoiseKind.INTRINSIC)

    @property
    def additive(self) -> bool:
        return self.kind in (NoiseKind.MARTINGALE_GAUSSIAN, NoiseKind.BIASED_GAUSSIAN)

    def sample(self, t: int, scale: float, d: int, rng: np.random.Generator | None) -> np.ndarray:
        if not self.additive:
            return np.zeros(d)
        if rng is None:
            raise ValueError("stochastic noise needs a generator")
        n = t + 1
        xi = self.c_sigma * self.sigma(n) * scale * rng.standard_normal(d)
        if self.kind is NoiseKind.BIASED_GAUSSIAN:
            xi += self.c_mu * self.mu(n) * scale
        return xi

    def to_dict(self):
        return {
            "kind": self.kind.value,
            "mu": self.mu.to_dict(),
            "sigma": self.sigma.to_dict(),
            "c_mu": self.c_mu,
            "c_sigma": self.c_sigma,
        }


# ---------------------------------------------------------------------------
# Iteration
# ---------------------------------------------------------------------------


class BasaStepError(RuntimeError):
    def __init__(self, t: int, cause: Exception):
        super().__init__(f"step {t}: {cause}")
        self.t = t


def basa_step(
    theta,
    meas: MeasurementModel,
    noise: NoiseModel,
    mask,
    alpha,
    *,
    t: int = 0,
    history: Sequence[np.ndarray] | None = None,
    rng: np.random.Generator | None = None,
    envelope: float | None = None,
) -> np.ndarray:
    """One BASA update.  Coordinates off ``mask`` are copied unchanged.

    ``history`` holds the last ``meas.window`` iterates, most recent last,
    and defaults to ``[theta]``.  ``envelope`` is ``||theta_0^t||`` and
    defaults to the max over ``history``.
    """
    theta = np.asarray(theta, dtype=float)
    m = np.asarray(mask, dtype=bool)
    a = np.asarray(alpha, dtype=float)
    if m.shape != theta.shape or a.shape != theta.shape:
        raise ValueError(f"dimension mismatch: theta {theta.shape}, mask {m.shape}, alpha {a.shape}")
    if np.any(a[~m] != 0):
        raise ValueError("alpha must vanish off the update mask")
    if np.any(a < 0) or np.any(a >= 1):
        raise ValueError("alpha must lie in [0, 1)")
    if history is None:
        history = [theta]
    if envelope is None:
        envelope = max(sup_norm(h) for h in history)
    return _advance(theta, meas, noise, m, a, t, history, rng, envelope)


def _advance(theta, meas, noise, m, a, t, history, rng, envelope) -> np.ndarray:
    # basa_step without the argument checks; callers guarantee shapes and steps
    eta = meas(t, history)
    if not np.all(np.isfinite(eta)):
        raise ValueError("measurement is not finite")
    xi = noise.sample(t, 1.0 + envelope, theta.size, rng)
    out = theta.copy()
    out[m] = theta[m] + a[m] * (eta[m] + xi[m])
    return out


@dataclass
class BasaConfig:
    theta0: np.ndarray
    measurement: MeasurementModel
    noise: NoiseModel
    mask: UpdateMaskProcess
    schedule: Schedule
    clock: ClockMode | str = ClockMode.GLOBAL
    horizon: int = 1000
    fixed_point: np.ndarray | None = None
    seed: int = 0
    stride: int = 1
    c1: float = 1.0


def run_basa(cfg: BasaConfig) -> RunTrace:
    """Run the iteration for ``cfg.horizon`` steps and record a trace."""
    if cfg.horizon < 1:
        raise ValueError("horizon must be >= 1")
    validate_step_schedule(cfg.schedule)
    theta = np.array(cfg.theta0, dtype=float)
    d = theta.size
    if cfg.mask.d != d:
        raise ValueError(f"mask process has dimension {cfg.mask.d}, theta0 has {d}")
    pi = None
    if cfg.fixed_point is not None:
        pi = np.asarray(cfg.fixed_point, dtype=float)
        if pi.shape != theta.shape:
            raise ValueError(f"fixed point has shape {pi.shape}, theta0 has {theta.shape}")

    cfg.mask.start(streams.stream(cfg.seed, streams.MASK))
    noise_rng = streams.stream(cfg.seed, streams.NOISE)
    clock = ClockState.new(cfg.clock, d)
    history: deque[np.ndarray] = deque([theta], maxlen=cfg.measurement.window)
    running = sup_norm(theta)
    psums = np.zeros(d)
    rec = TraceRecorder(d, cfg.horizon, cfg.stride)

    def err(th):
        return sup_norm(th - pi) if pi is not None else math.nan

    # Same steps as resolve_step, read from a table instead of re-evaluating
    # the schedule every iteration; tick n sits at beta[n - 1].
    beta = cfg.schedule.values(1, cfg.horizon + 1)
    local = clock.mode is ClockMode.LOCAL
    rec.record(0, err(theta), max(running, cfg.c1), psums, clock.counters)
    for t in range(cfg.horizon):
        try:
            mask = np.asarray(cfg.mask.next_mask(t), dtype=bool)
            clock.counters += mask
            alpha = np.zeros(d)
            alpha[mask] = beta[clock.counters[mask] - 1] if local else beta[t]
            clock.t += 1
            theta = _advance(theta, cfg.measurement, cfg.noise, mask, alpha, t, history, noise_rng, running)
        except Exception as exc:
            raise BasaStepError(t, exc) from exc
        psums += alpha
        history.append(theta)
        running = max(running, float(np.max(np.abs(theta))))
        if rec.due(t + 1):
            rec.record(t + 1, err(theta), max(running, cfg.c1), psums, clock.counters)
    return rec.finish(
        {
            "horizon": cfg.horizon,
            "seed": cfg.seed,
            "final_sup_err": err(theta),
            "max_lambda": max(running, cfg.c1),
            "final_theta": theta.tolist(),
        }
    )


# ---------------------------------------------------------------------------
# Proof apparatus: D-process and step-weight identity
# ---------------------------------------------------------------------------


def _check_indices(alpha, zeta, s, k):
    if s < 0 or k < s:
        raise IndexError(f"need 0 <= s <= k, got s={s}, k={k}")
    if len(alpha) <= k or len(zeta) <= k + 1:
        raise IndexError(f"sequences too short for k={k}: need len(alpha) > k and len(zeta) > k + 1")


def d_process_recursive(alpha: Sequence[float], zeta: Sequence[float], s: int, k: int) -> float:
    """``D(s, k+1)`` by ``D(s, r+1) = (1 - alpha_r) D(s, r) + alpha_r zeta_{r+1}``, ``D(s, s) = 0``."""
    _check_indices(alpha, zeta, s, k)
    D = 0.0
    for r in range(s, k + 1):
        D = (1.0 - alpha[r]) * D + alpha[r] * zeta[r + 1]
    return D


def d_process_closed_form(alpha: Sequence[float], zeta: Sequence[float], s: int, k: int) -> float:
    """``D(s, k+1) = sum_{t=s}^{k} [prod_{r=t+1}^{k} (1 - alpha_r)] alpha_t zeta_{t+1}``."""
    _check_indices(alpha, zeta, s, k)
    total = 0.0
    for t in range(s, k + 1):
        prod = 1.0
        for r in range(t + 1, k + 1):
            prod *= 1.0 - alpha[r]
        total += prod * alpha[t] * zeta[t + 1]
    return total


def step_weight_identity_check(alpha: Sequence[float], T: int) -> float:
    """``prod_{t<=T}(1 - alpha_t) + sum_{t<=T} [prod_{t<r<=T}(1 - alpha_r)] alpha_t``; always 1."""
    if len(alpha) <= T:
        raise IndexError(f"alpha too short for T={T}")
    head = 1.0
    for t in range(T + 1):
        head *= 1.0 - alpha[t]
    tail = 0.0
    for t in range(T + 1):
        prod = 1.0
        for r in range(t + 1, T + 1):
            prod *= 1.0 - alpha[r]
        tail += prod * alpha[t]
    return head + tail


# ---------------------------------------------------------------------------
# Assumption audit
# ---------------------------------------------------------------------------


class AssumptionVerdict(str, enum.Enum):
    HOLDS_BY_CONSTRUCTION = "holds-by-construction"
    HOLDS_ANALYTICALLY = "holds-analytically"
    IMPLIED = "implied"
    FAILS = "fails"
    INCONCLUSIVE = "inconclusive"

    @property
    def ok(self) -> bool:
        return self in (
            AssumptionVerdict.HOLDS_BY_CONSTRUCTION,
            AssumptionVerdict.HOLDS_ANALYTICALLY,
            AssumptionVerdict.IMPLIED,
        )


@dataclass
class AssumptionCheck:
    name: str
    verdict: AssumptionVerdict
    detail: str = ""

    def to_dict(self):
        return {"name": self.name, "verdict": self.verdict.value, "detail": self.detail}


@dataclass
class AssumptionReport:
    checks: list[AssumptionCheck]

    def __getitem__(self, name: str) -> AssumptionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self):
        return {"checks": [c.to_dict() for c in self.checks]}


def check_assumptions(
    meas: MeasurementModel,
    noise: NoiseModel,
    schedule: Schedule,
    *,
    mask: UpdateMaskProcess | None = None,
    clock: ClockMode | str = ClockMode.GLOBAL,
) -> AssumptionReport:
    """Audit the noise (N), step-size (S1, S2) and measurement (F1-F4) hypotheses."""
    clock = ClockMode(clock)
    V = AssumptionVerdict
    checks: list[AssumptionCheck] = []

    # (N)
    if noise.kind is NoiseKind.NONE:
        checks.append(AssumptionCheck("N", V.HOLDS_BY_CONSTRUCTION, "no noise: mu = sigma = 0"))
    elif noise.kind is NoiseKind.INTRINSIC:
        checks.append(AssumptionCheck("N", V.INCONCLUSIVE, "sampled measurement; envelopes must be shown per problem"))
    else:
        checks.append(AssumptionCheck(
            "N", V.HOLDS_BY_CONSTRUCTION,
            f"gaussian noise on declared envelopes mu={noise.mu.to_dict()}, sigma={noise.sigma.to_dict()}",
        ))

    # (S1)
    beta = schedule.rate()
    mu = noise.mu.rate() if noise.additive else None
    sig = noise.sigma.rate() if noise.additive else None
    sums = {
        "sum beta^2": series_verdict(product_rate(beta, beta)),
        "sum sigma^2 beta^2": series_verdict(product_rate(sig, sig, beta, beta)),
        "sum mu beta": series_verdict(product_rate(mu, beta)),
    }
    failed = [k for k, ok in sums.items() if not ok]
    if failed:
        checks.append(AssumptionCheck("S1", V.FAILS, "diverges: " + ", ".join(failed)))
    elif clock is ClockMode.LOCAL and noise.additive and not (
        noise.mu.is_nonincreasing() and noise.sigma.is_nonincreasing()
    ):
        # a local tick lags the global tick, so growing envelopes are not dominated
        checks.append(AssumptionCheck("S1", V.INCONCLUSIVE, "local clock with non-monotone noise envelopes"))
    else:
        checks.append(AssumptionCheck("S1", V.HOLDS_ANALYTICALLY, "all three series converge"))

    # (S2)
    if series_verdict(beta):
        checks.append(AssumptionCheck("S2", V.FAILS, "sum beta converges"))
    elif mask is None:
        checks.append(AssumptionCheck("S2", V.INCONCLUSIVE, "sum beta diverges; update process not given"))
    elif not mask.updates_every_coordinate():
        checks.append(AssumptionCheck("S2", V.FAILS, "some coordinate is not updated infinitely often"))
    elif clock is ClockMode.LOCAL or isinstance(mask, AllCoordinates):
        checks.append(AssumptionCheck("S2", V.HOLDS_ANALYTICALLY, "every local counter diverges and sum beta diverges"))
    elif schedule.is_nonincreasing():
        checks.append(AssumptionCheck(
            "S2", V.HOLDS_ANALYTICALLY,
            "nonincreasing divergent beta sampled along a recurrent update process",
        ))
    else:
        checks.append(AssumptionCheck("S2", V.INCONCLUSIVE, "global clock with non-monotone beta"))

    # (F1)-(F4)
    gamma = meas.contraction
    if meas.form is Form.FIXED_POINT and gamma is not None and gamma < 1:
        checks.append(AssumptionCheck(
            "F4", V.HOLDS_BY_CONSTRUCTION, f"gamma={gamma:g}, Delta={meas.window}",
        ))
        for name in ("F1", "F2", "F3"):
            checks.append(AssumptionCheck(name, V.IMPLIED, "implied by F4"))
    else:
        why = "zero-finding form" if meas.form is Form.ZERO_FINDING else "no contraction constant below 1 declared"
        for name in ("F4", "F1", "F2", "F3"):
            checks.append(AssumptionCheck(name, V.INCONCLUSIVE, why))
    return AssumptionReport(checks)
