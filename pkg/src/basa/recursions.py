"""Scalar recursion ``U_{t+1} = (1 - alpha_t) U_t + alpha_t zeta_{t+1}`` with biased noise."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import streams
from .core import Custom, Schedule, Verdict, product_rate, series_verdict

_CHUNK = streams.BLOCK


class BiasSign(str, enum.Enum):
    POSITIVE = "positive"
    ALTERNATING = "alternating"
    RANDOM_SIGN = "random_sign"


@dataclass(frozen=True)
class ScalarRecursionConfig:
    """Schedules are read at tick ``t + 1`` for iteration ``t``."""

    u0: float
    alpha: Schedule
    mu: Schedule
    sigma: Schedule
    bias_sign: BiasSign = BiasSign.POSITIVE
    horizon: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "bias_sign", BiasSign(self.bias_sign))
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not math.isfinite(self.u0):
            raise ValueError("U0 must be finite")
        if not (self.alpha.min_value() >= 0 and self.alpha.max_value() < 1):
            raise ValueError("alpha must lie in [0, 1)")
        if self.mu.min_value() < 0:
            raise ValueError("mu must be nonnegative")
        if self.sigma.min_value() < 0:
            raise ValueError("sigma must be nonnegative")


@dataclass
class ScalarTrace:
    t: np.ndarray
    u: np.ndarray
    running_max: np.ndarray
    seed: int

    @property
    def max_abs(self) -> float:
        return float(self.running_max[-1])

    @property
    def final(self) -> float:
        return float(self.u[-1])


def run_scalar_recursion(cfg: ScalarRecursionConfig, seed: int, stride: int = 1) -> ScalarTrace:
    """Simulate with ``zeta = b_t + sigma_t sqrt(1 + U_t^2) g``, ``|b_t| = mu_t``.

    The noise saturates both envelopes: the conditional mean has magnitude
    ``mu_t`` (sign set by ``cfg.bias_sign``) and the conditional variance is
    ``sigma_t^2 (1 + U_t^2)``.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    normals = streams.Draws(streams.stream(seed, streams.NOISE), "normal")
    signs = streams.Draws(streams.stream(seed, streams.BIAS_SIGN))
    policy = cfg.bias_sign
    T = cfg.horizon
    u = float(cfg.u0)
    ts, us = [0], [u]
    biggest = abs(u)
    peaks = [biggest]
    for start in range(0, T, _CHUNK):
        stop = min(start + _CHUNK, T)
        a = cfg.alpha.values(start + 1, stop + 1).tolist()
        m = cfg.mu.values(start + 1, stop + 1).tolist()
        s = cfg.sigma.values(start + 1, stop + 1).tolist()
        for k, t in enumerate(range(start, stop)):
            b = m[k]
            if policy is BiasSign.ALTERNATING:
                b = b if t % 2 == 0 else -b
            elif policy is BiasSign.RANDOM_SIGN:
                b = b if signs.next() < 0.5 else -b
            zeta = b + s[k] * math.sqrt(1.0 + u * u) * normals.next()
            ak = a[k]
            u = (1.0 - ak) * u + ak * zeta
            if abs(u) > biggest:
                biggest = abs(u)
            if (t + 1) % stride == 0 or t + 1 == T:
                ts.append(t + 1)
                us.append(u)
                peaks.append(biggest)
    return ScalarTrace(np.array(ts, dtype=np.int64), np.array(us), np.array(peaks), seed)


def verify_summability(cfg: ScalarRecursionConfig) -> dict[str, Verdict]:
    """Verdicts for ``sum alpha^2``, ``sum mu alpha``, ``sum sigma^2 alpha^2`` and ``sum alpha``.

    ``pass`` for the first three means the series converges; for
    ``sum_alpha_diverges`` it means the series diverges.  Custom tables are
    decided by their analytic tails.  ``hypotheses_bounded`` and
    ``hypotheses_zero_limit`` report whether the sufficient conditions for a
    bounded convergent sequence, respectively a zero limit, are met.
    """
    a, m, s = cfg.alpha.rate(), cfg.mu.rate(), cfg.sigma.rate()

    def conv(rate) -> Verdict:
        return Verdict.PASS if series_verdict(rate) else Verdict.FAIL

    out = {
        "sum_alpha_sq": conv(product_rate(a, a)),
        "sum_mu_alpha": conv(product_rate(m, a)),
        "sum_sigma_sq_alpha_sq": conv(product_rate(s, s, a, a)),
        "sum_alpha_diverges": Verdict.FAIL if series_verdict(a) else Verdict.PASS,
    }
    out["hypotheses_bounded"] = (
        Verdict.PASS
        if all(out[k] is Verdict.PASS for k in ("sum_alpha_sq", "sum_mu_alpha", "sum_sigma_sq_alpha_sq"))
        else Verdict.FAIL
    )
    out["hypotheses_zero_limit"] = (
        Verdict.PASS
        if out["hypotheses_bounded"] is Verdict.PASS and out["sum_alpha_diverges"] is Verdict.PASS
        else Verdict.FAIL
    )
    return out


def verdict_basis(cfg: ScalarRecursionConfig) -> str:
    """How the verdicts were reached: ``tail`` if any schedule is a custom table."""
    return "tail" if any(isinstance(x, Custom) for x in (cfg.alpha, cfg.mu, cfg.sigma)) else "analytic"
