"""TD(lambda) value estimation and classic/batch Q-learning on finite problems.

States and actions are 0-based.  Table coordinates of a Q-table are
flattened row-major, ``(i, k) -> i * m + k``.
"""

from __future__ import annotations

import csv
import enum
import math
from bisect import bisect_right
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import streams
from .core import ClockMode, Schedule, check_robbins_monro, validate_step_schedule
from .markov import StochasticMatrix, as_stochastic, is_irreducible
from .trace import RunTrace, TraceRecorder


class HypothesisError(ValueError):
    """A convergence-theorem hypothesis does not hold for the requested run."""


# ---------------------------------------------------------------------------
# Problems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MarkovRewardProcess:
    A: StochasticMatrix
    r: np.ndarray
    gamma: float

    def __post_init__(self):
        object.__setattr__(self, "A", as_stochastic(self.A))
        r = np.array(self.r, dtype=float)
        if r.shape != (self.A.n,):
            raise ValueError(f"reward vector has shape {r.shape}, expected ({self.A.n},)")
        if not np.all(np.isfinite(r)):
            raise ValueError("rewards must be finite")
        if not 0 < self.gamma < 1:
            raise ValueError("discount must lie in (0,1)")
        object.__setattr__(self, "r", r)

    @property
    def n(self) -> int:
        return self.A.n


@dataclass(frozen=True)
class Mdp:
    """``transitions[k]`` is the chain under action ``k``; ``rewards[i, k] = R(x_i, u_k)``.

    ``gamma = 0`` is accepted as the myopic degenerate case.
    """

    transitions: tuple
    rewards: np.ndarray
    gamma: float

    def __post_init__(self):
        mats = tuple(as_stochastic(a) for a in self.transitions)
        if not mats:
            raise ValueError("an MDP needs at least one action")
        n = mats[0].n
        for k, a in enumerate(mats):
            if a.n != n:
                raise ValueError(f"action {k} matrix is {a.n}x{a.n}, expected {n}x{n}")
        R = np.array(self.rewards, dtype=float)
        if R.shape != (n, len(mats)):
            raise ValueError(f"reward table has shape {R.shape}, expected ({n}, {len(mats)})")
        if not np.all(np.isfinite(R)):
            raise ValueError("rewards must be finite")
        if not 0 <= self.gamma < 1:
            raise ValueError("discount must lie in [0,1)")
        object.__setattr__(self, "transitions", mats)
        object.__setattr__(self, "rewards", R)

    @property
    def n(self) -> int:
        return self.transitions[0].n

    @property
    def m(self) -> int:
        return len(self.transitions)

    def stacked(self) -> np.ndarray:
        """Transition tensor of shape ``(m, n, n)``."""
        return np.stack([a.entries for a in self.transitions])


# ---------------------------------------------------------------------------
# Exact oracles
# ---------------------------------------------------------------------------


def exact_value(mrp: MarkovRewardProcess) -> np.ndarray:
    """Solve ``(I - gamma A) v = r``."""
    n = mrp.n
    return np.linalg.solve(np.eye(n) - mrp.gamma * mrp.A.entries, mrp.r)


def bellman_q_operator(mdp: Mdp, Q) -> np.ndarray:
    """``G(Q)[i, k] = R[i, k] + gamma * sum_j A^k[i, j] * max_l Q[j, l]``."""
    Q = np.asarray(Q, dtype=float)
    if Q.shape != (mdp.n, mdp.m):
        raise ValueError(f"Q has shape {Q.shape}, expected ({mdp.n}, {mdp.m})")
    V = Q.max(axis=1)
    return mdp.rewards + mdp.gamma * (mdp.stacked() @ V).T


def exact_q_star(mdp: Mdp, tol: float = 1e-10) -> np.ndarray:
    """Value iteration from ``Q = 0`` until ``||Q - Q*||_max < tol`` is guaranteed."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    g = mdp.gamma
    Q = np.zeros((mdp.n, mdp.m))
    if g == 0:
        return bellman_q_operator(mdp, Q)
    stop = tol * (1 - g) / g
    while True:
        nxt = bellman_q_operator(mdp, Q)
        if np.max(np.abs(nxt - Q)) < stop:
            return nxt
        Q = nxt


def write_table_csv(path, table) -> Path:
    """Write a value vector or Q table as CSV, one row per state."""
    path = Path(path)
    T = np.asarray(table, dtype=float)
    if T.ndim == 1:
        T = T[:, None]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["state"] + [f"col_{k}" for k in range(T.shape[1])])
        for i, row in enumerate(T):
            w.writerow([str(i)] + [repr(float(x)) for x in row])
    return path


def greedy_policy(Q) -> np.ndarray:
    """Per-state argmax; ties go to the lowest action index."""
    return np.argmax(np.asarray(Q, dtype=float), axis=1)


# ---------------------------------------------------------------------------
# TD(lambda)
# ---------------------------------------------------------------------------


@dataclass
class EligibilityState:
    """Dense decayed visit trace ``w``; only ``w[N_t]`` ever scales an update."""

    w: np.ndarray
    lam: float
    gamma: float

    def __post_init__(self):
        if not 0 <= self.lam < 1:
            raise ValueError("lambda must lie in [0, 1)")

    @classmethod
    def new(cls, n: int, lam: float, gamma: float) -> "EligibilityState":
        return cls(np.zeros(n), lam, gamma)

    @property
    def decay(self) -> float:
        return self.gamma * self.lam

    def visit(self, i: int) -> float:
        """Decay every entry, bump entry ``i`` and return its new value."""
        self.w *= self.decay
        self.w[i] += 1.0
        return float(self.w[i])


def td_lambda_step(v, elig: EligibilityState, transition: tuple[int, int], reward: float, alpha: float):
    """One TD(lambda) update of ``v`` at the departed state; returns ``(v', elig', delta)``.

    Neither input is modified.
    """
    if not 0 <= alpha < 1:
        raise ValueError("alpha must lie in [0, 1)")
    i, j = transition
    v_new = np.array(v, dtype=float)
    e = EligibilityState(elig.w.copy(), elig.lam, elig.gamma)
    delta = reward + e.gamma * v_new[j] - v_new[i]
    z = e.visit(i)
    v_new[i] += delta * alpha * z
    return v_new, e, delta


def _beta_table(schedule: Schedule, horizon: int) -> list[float]:
    return schedule.values(1, horizon + 1).tolist()


def _require_schedule(schedule: Schedule, clock: ClockMode) -> None:
    validate_step_schedule(schedule)
    rm = check_robbins_monro(schedule)
    if not rm.passes():
        raise HypothesisError(
            f"step schedule fails the Robbins-Monro conditions "
            f"(square_summable={rm.square_summable.value}, divergent={rm.divergent.value})"
        )
    if clock is ClockMode.GLOBAL and not schedule.is_nonincreasing():
        raise HypothesisError("global clock requires a nonincreasing step schedule")


def run_td_lambda(
    mrp: MarkovRewardProcess,
    lam: float,
    schedule: Schedule,
    clock: ClockMode | str,
    horizon: int,
    seed: int,
    *,
    stride: int = 1,
    start: int = 0,
    v0=None,
    c1: float = 1.0,
) -> RunTrace:
    """Simulate one path of the chain and apply TD(lambda) along it.

    The departed state ``N_t`` is the updated coordinate.  Its step is
    ``beta(t + 1)`` under the global clock and ``beta(nu)`` under the local
    clock, where ``nu`` counts visits to ``N_t`` including this one; the
    applied step is that value times the trace ``z_t``.
    """
    clock = ClockMode(clock)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if not is_irreducible(mrp.A):
        raise HypothesisError("TD(lambda) convergence needs an irreducible chain")
    _require_schedule(schedule, clock)
    elig0 = EligibilityState.new(mrp.n, lam, mrp.gamma)
    n = mrp.n
    vstar = exact_value(mrp).tolist()
    cum = mrp.A.cumulative_rows()
    r = mrp.r.tolist()
    g = mrp.gamma
    gl = elig0.decay
    beta = _beta_table(schedule, horizon)
    local = clock is ClockMode.LOCAL
    draws = streams.Draws(streams.stream(seed, streams.CHAIN))
    if not 0 <= start < n:
        raise ValueError(f"start state {start} outside [0, {n})")

    v = [0.0] * n if v0 is None else [float(x) for x in v0]
    w = [0.0] * n
    counts = [0] * n
    psums = [0.0] * n
    running = max(abs(x) for x in v)
    zmin, zmax = math.inf, -math.inf
    rec = TraceRecorder(n, horizon, stride)

    def sup_err():
        return max(abs(v[k] - vstar[k]) for k in range(n))

    rec.record(0, sup_err(), max(running, c1), psums, counts)
    s = start
    nxt = rec.next_tick()
    for t in range(horizon):
        j = bisect_right(cum[s], draws.next())
        if gl:
            for k in range(n):
                w[k] *= gl
            w[s] += 1.0
            z = w[s]
        else:
            z = 1.0
        if z < zmin:
            zmin = z
        if z > zmax:
            zmax = z
        counts[s] += 1
        a = beta[counts[s] - 1] if local else beta[t]
        vs = v[s]
        step = a * z
        vs = vs + (r[s] + g * v[j] - vs) * step
        v[s] = vs
        psums[s] += step
        if abs(vs) > running:
            running = abs(vs)
        s = j
        if t + 1 == nxt:
            rec.record(t + 1, sup_err(), max(running, c1), psums, counts)
            nxt = rec.next_tick()
    return rec.finish(
        {
            "algorithm": "td_lambda",
            "lambda": lam,
            "clock": clock.value,
            "horizon": horizon,
            "seed": seed,
            "final_sup_err": sup_err(),
            "max_lambda": max(running, c1),
            "trace_min": zmin,
            "trace_max": zmax,
            "trace_bound": 1.0 / (1.0 - gl),
            "final_v": v,
            "v_star": vstar,
        }
    )


# ---------------------------------------------------------------------------
# Q-learning
# ---------------------------------------------------------------------------


class Exploration(str, enum.Enum):
    UNIFORM = "uniform"
    EPSILON_GREEDY = "epsilon_greedy"


@dataclass(frozen=True)
class ExplorationPolicy:
    kind: Exploration = Exploration.UNIFORM
    epsilon: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "kind", Exploration(self.kind))
        if not 0 <= self.epsilon <= 1:
            raise ValueError("epsilon must lie in [0, 1]")


def _init_q(mdp: Mdp, q0) -> list[list[float]]:
    if q0 is None:
        return [[0.0] * mdp.m for _ in range(mdp.n)]
    Q = np.array(q0, dtype=float)
    if Q.shape != (mdp.n, mdp.m) or not np.all(np.isfinite(Q)):
        raise ValueError(f"initial Q must be finite with shape ({mdp.n}, {mdp.m})")
    return Q.tolist()


def _q_err(Q, qstar) -> float:
    return max(abs(a - b) for row, srow in zip(Q, qstar) for a, b in zip(row, srow))


def _argmax(row) -> int:
    best, arg = row[0], 0
    for k in range(1, len(row)):
        if row[k] > best:
            best, arg = row[k], k
    return arg


def run_q_learning_classic(
    mdp: Mdp,
    schedule: Schedule,
    exploration: ExplorationPolicy | None = None,
    horizon: int = 1000,
    seed: int = 0,
    *,
    stride: int = 1,
    start: int = 0,
    q0=None,
    q_star=None,
    c1: float = 1.0,
) -> RunTrace:
    """Single-trajectory Q-learning with the global-clock step ``beta(t + 1)``.

    Visit counts are recorded per state-action pair so that the
    infinitely-often conditions can be audited after the fact.
    """
    exploration = exploration or ExplorationPolicy()
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    validate_step_schedule(schedule)
    rm = check_robbins_monro(schedule)
    if not rm.passes():
        raise HypothesisError("step schedule fails the Robbins-Monro conditions")
    n, m, g = mdp.n, mdp.m, mdp.gamma
    if not 0 <= start < n:
        raise ValueError(f"start state {start} outside [0, {n})")
    qstar = (exact_q_star(mdp, 1e-12) if q_star is None else np.asarray(q_star)).tolist()
    cums = [a.cumulative_rows() for a in mdp.transitions]
    R = mdp.rewards.tolist()
    beta = _beta_table(schedule, horizon)
    chain = streams.Draws(streams.stream(seed, streams.CHAIN))
    explore = streams.Draws(streams.stream(seed, streams.EXPLORATION))
    greedy = exploration.kind is Exploration.EPSILON_GREEDY
    eps = exploration.epsilon

    Q = _init_q(mdp, q0)
    counts = [0] * (n * m)
    psums = [0.0] * (n * m)
    running = max(abs(x) for row in Q for x in row)
    rec = TraceRecorder(n * m, horizon, stride)
    rec.record(0, _q_err(Q, qstar), max(running, c1), psums, counts)
    nxt = rec.next_tick()
    i = start
    for t in range(horizon):
        u = explore.next()
        if greedy:
            u2 = explore.next()
            k = min(int(u2 * m), m - 1) if u < eps else _argmax(Q[i])
        else:
            k = min(int(u * m), m - 1)
        j = bisect_right(cums[k][i], chain.next())
        a = beta[t]
        row = Q[i]
        row[k] += a * (R[i][k] + g * max(Q[j]) - row[k])
        c = i * m + k
        counts[c] += 1
        psums[c] += a
        if abs(row[k]) > running:
            running = abs(row[k])
        i = j
        if t + 1 == nxt:
            rec.record(t + 1, _q_err(Q, qstar), max(running, c1), psums, counts)
            nxt = rec.next_tick()
    return rec.finish(
        {
            "algorithm": "q_classic",
            "clock": ClockMode.GLOBAL.value,
            "exploration": exploration.kind.value,
            "horizon": horizon,
            "seed": seed,
            "final_sup_err": _q_err(Q, qstar),
            "max_lambda": max(running, c1),
            "unvisited_pairs": [c for c in range(n * m) if counts[c] == 0],
            "final_q": Q,
            "q_star": qstar,
        }
    )


def require_irreducible_actions(mdp: Mdp) -> None:
    for k, a in enumerate(mdp.transitions):
        if not is_irreducible(a):
            raise HypothesisError(f"action {k} has a reducible transition matrix")


def run_q_learning_batch(
    mdp: Mdp,
    schedule: Schedule,
    clock: ClockMode | str,
    horizon: int,
    seed: int,
    *,
    stride: int = 1,
    starts=None,
    q0=None,
    q_star=None,
    c1: float = 1.0,
) -> RunTrace:
    """Batch Q-learning: ``m`` chains, chain ``k`` always plays action ``k``.

    Each iteration updates exactly the entries ``(X^k_t, k)``, all from the
    same ``Q_t``.  Under the local clock the counter of entry ``(i, k)``
    counts visits of chain ``k`` to state ``i``, including the current one.
    """
    clock = ClockMode(clock)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    require_irreducible_actions(mdp)
    _require_schedule(schedule, clock)
    n, m, g = mdp.n, mdp.m, mdp.gamma
    X = [0] * m if starts is None else [int(x) for x in starts]
    if len(X) != m or any(not 0 <= x < n for x in X):
        raise ValueError(f"need one start state in [0, {n}) per action")
    qstar = (exact_q_star(mdp, 1e-12) if q_star is None else np.asarray(q_star)).tolist()
    cums = [a.cumulative_rows() for a in mdp.transitions]
    R = mdp.rewards.tolist()
    beta = _beta_table(schedule, horizon)
    local = clock is ClockMode.LOCAL
    chain = streams.Draws(streams.stream(seed, streams.CHAIN))

    Q = _init_q(mdp, q0)
    counts = [0] * (n * m)
    psums = [0.0] * (n * m)
    running = max(abs(x) for row in Q for x in row)
    rec = TraceRecorder(n * m, horizon, stride)
    rec.record(0, _q_err(Q, qstar), max(running, c1), psums, counts)
    nxt = rec.next_tick()
    pending = [(0, 0.0)] * m
    for t in range(horizon):
        # every target reads Q_t; writes are applied after all m chains moved
        for k in range(m):
            i = X[k]
            j = bisect_right(cums[k][i], chain.next())
            c = i * m + k
            counts[c] += 1
            a = beta[counts[c] - 1] if local else beta[t]
            q = Q[i][k]
            pending[k] = (i, q + a * (R[i][k] + g * max(Q[j]) - q))
            psums[c] += a
            X[k] = j
        for k in range(m):
            i, val = pending[k]
            Q[i][k] = val
            if abs(val) > running:
                running = abs(val)
        if t + 1 == nxt:
            rec.record(t + 1, _q_err(Q, qstar), max(running, c1), psums, counts)
            nxt = rec.next_tick()
    return rec.finish(
        {
            "algorithm": "q_batch",
            "clock": clock.value,
            "horizon": horizon,
            "seed": seed,
            "final_sup_err": _q_err(Q, qstar),
            "max_lambda": max(running, c1),
            "final_q": Q,
            "q_star": qstar,
        }
    )
