"""Named, independent random streams derived from one root seed.

Each stream is a Philox counter-based generator keyed by ``(root_seed,
crc32(name))``, so adding a stream, or changing how many draws another stream
makes, never perturbs the values a given stream produces.  Draws are taken in
fixed-size blocks, which keeps every run a prefix of any longer run with the
same seed.
"""

from __future__ import annotations

import zlib

import numpy as np

MASK = "mask"
NOISE = "noise"
CHAIN = "chain"
EXPLORATION = "exploration"
BIAS_SIGN = "bias_sign"

BLOCK = 1 << 14


def stream(root_seed: int, name: str) -> np.random.Generator:
    if root_seed < 0:
        raise ValueError("seeds must be nonnegative")
    key = zlib.crc32(name.encode("utf-8"))
    ss = np.random.SeedSequence(entropy=int(root_seed), spawn_key=(key,))
    return np.random.Generator(np.random.Philox(ss))


class Draws:
    """Buffered scalar draws from a generator, refilled ``BLOCK`` at a time."""

    __slots__ = ("_gen", "_kind", "_buf", "_pos")

    def __init__(self, gen: np.random.Generator, kind: str = "uniform"):
        if kind not in ("uniform", "normal"):
            raise ValueError(kind)
        self._gen = gen
        self._kind = kind
        self._buf: list[float] = []
        self._pos = 0

    def _refill(self) -> None:
        if self._kind == "uniform":
            self._buf = self._gen.random(BLOCK).tolist()
        else:
            self._buf = self._gen.standard_normal(BLOCK).tolist()
        self._pos = 0

    def next(self) -> float:
        if self._pos >= len(self._buf):
            self._refill()
        x = self._buf[self._pos]
        self._pos += 1
        return x

    def take(self, k: int) -> np.ndarray:
        return np.array([self.next() for _ in range(k)])
