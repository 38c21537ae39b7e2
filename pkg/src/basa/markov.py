"""Finite Markov chains: validation, irreducibility, stationary laws, paths."""

from __future__ import annotations

import csv
import warnings
from bisect import bisect_right
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components

from .core import Schedule
from .streams import CHAIN, Draws, stream

ROW_SUM_TOL = 1e-9


class StochasticMatrix:
    """Row-stochastic matrix ``a[i, j] = Pr{next = j | current = i}``."""

    __slots__ = ("entries", "_cum")

    def __init__(self, entries):
        a = np.array(entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError(f"transition matrix must be square and nonempty, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("transition matrix has non-finite entries")
        if np.any(a < 0) or np.any(a > 1):
            raise ValueError("transition matrix entries must lie in [0, 1]")
        bad = np.flatnonzero(np.abs(a.sum(axis=1) - 1.0) > ROW_SUM_TOL)
        if bad.size:
            raise ValueError(f"rows {bad.tolist()} do not sum to 1")
        a.setflags(write=False)
        self.entries = a
        self._cum = None

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def cumulative_rows(self) -> list[list[float]]:
        """Row CDFs for inverse-transform sampling; the last entry is pinned to 1."""
        if self._cum is None:
            cum = []
            for row in self.entries:
                c = np.cumsum(row).tolist()
                last = max(j for j in range(len(row)) if row[j] > 0)
                for j in range(last, len(row)):
                    c[j] = 1.0
                cum.append(c)
            self._cum = cum
        return self._cum

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def __repr__(self):
        return f"StochasticMatrix({self.entries.tolist()!r})"


def as_stochastic(A) -> StochasticMatrix:
    return A if isinstance(A, StochasticMatrix) else StochasticMatrix(A)


def is_irreducible(A) -> bool:
    """True iff the digraph of strictly positive entries is strongly connected."""
    P = as_stochastic(A)
    ncomp, _ = connected_components(P.entries > 0, directed=True, connection="strong")
    return ncomp == 1


def stationary_distribution(A) -> np.ndarray:
    """Unique stationary law of an irreducible chain.

    Solves ``[A^T - I; 1^T] nu = [0; 1]`` in the least-squares sense; the
    stacked system has full column rank exactly when the chain has a single
    recurrent class.
    """
    P = as_stochastic(A)
    if not is_irreducible(P):
        raise ValueError("stationary_distribution requires an irreducible chain")
    n = P.n
    M = np.vstack([P.entries.T - np.eye(n), np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    nu, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    nu = np.clip(nu, 0.0, None)
    return nu / nu.sum()


@dataclass(frozen=True)
class SamplePath:
    states: np.ndarray
    seed: int

    @property
    def length(self) -> int:
        return len(self.states)

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(["t", "state"])
            w.writerows([t, int(s)] for t, s in enumerate(self.states))
        return path


class ChainSampler:
    """Steps an index process using a private uniform stream."""

    def __init__(self, A, start: int, draws: Draws):
        self.P = as_stochastic(A)
        if not 0 <= start < self.P.n:
            raise ValueError(f"start state {start} outside [0, {self.P.n})")
        self.state = start
        self._cum = self.P.cumulative_rows()
        self._draws = draws

    def step(self) -> int:
        self.state = bisect_right(self._cum[self.state], self._draws.next())
        return self.state


def sample_path(A, start: int, length: int, seed: int) -> SamplePath:
    """Seeded path ``N_0 = start, N_1, ..., N_{length-1}``."""
    if length < 1:
        raise ValueError("length must be >= 1")
    sampler = ChainSampler(A, start, Draws(stream(seed, CHAIN)))
    states = np.empty(length, dtype=np.int64)
    states[0] = start
    for t in range(1, length):
        states[t] = sampler.step()
    return SamplePath(states, seed)


def occupation_frequency(path: SamplePath, i: int) -> float:
    """Fraction of the path spent in state ``i``."""
    if path.length == 0:
        raise ValueError("empty path")
    return float(np.count_nonzero(path.states == i)) / path.length


def occupation_frequencies(path: SamplePath, n: int) -> np.ndarray:
    return np.bincount(path.states, minlength=n) / path.length


def weighted_visit_sum(path: SamplePath, i: int, s: Schedule, T: int | None = None) -> float:
    """``sum_{t < T} beta_t I{N_t = i}`` with ``beta_t`` on the global tick ``t + 1``."""
    T = path.length if T is None else T
    if T > path.length:
        raise ValueError(f"T={T} exceeds path length {path.length}")
    if not s.is_nonincreasing():
        warnings.warn("weighted_visit_sum: schedule is not nonincreasing", stacklevel=2)
    beta = s.values(1, T + 1)
    return float(beta[path.states[:T] == i].sum())
