"""Deterministic, splittable randomness.

Every stochastic stage of the pipeline (SMOTE deltas, weight init, fold
shuffles, synthetic data) draws from its own labeled child stream, so a
single root seed fixes every output byte and no stage's draws can perturb
another's.  Child derivation hashes the parent key with the label, which
makes children independent of how many draws the parent has consumed.
"""

import hashlib

import numpy as np

from .errors import EmptyRangeError


class RngStream:
    """Counter-based random stream (Philox) with pure labeled children."""

    def __init__(self, seed):
        if isinstance(seed, RngStream):
            self._key = seed._key
        elif isinstance(seed, bytes):
            self._key = seed
        else:
            self._key = hashlib.sha256(
                b"cbcnn-rng:" + str(int(seed)).encode()
            ).digest()
        self._gen = None

    @property
    def key_hex(self):
        return self._key.hex()

    def child(self, label):
        """Derive an independent stream from this stream's key and a label.

        Pure in the key: derivation ignores how many values the parent has
        drawn, so `s.child("x")` is the same stream no matter when it is
        taken.
        """
        return RngStream(hashlib.sha256(self._key + b"/" + label.encode()).digest())

    def _generator(self):
        if self._gen is None:
            key = np.frombuffer(self._key[:16], dtype=np.uint64)
            self._gen = np.random.Generator(np.random.Philox(key=key))
        return self._gen

    def uniform(self, lo=0.0, hi=1.0):
        """One draw from [lo, hi)."""
        lo = float(lo)
        hi = float(hi)
        if not lo < hi:
            raise EmptyRangeError(f"empty range [{lo}, {hi})")
        return lo + (hi - lo) * self._generator().random()

    def random(self, size=None):
        """float64 draws from [0, 1)."""
        return self._generator().random(size)

    def uniform_array(self, lo, hi, size):
        """Array of draws from [lo, hi)."""
        if not lo < hi:
            raise EmptyRangeError(f"empty range [{lo}, {hi})")
        return lo + (hi - lo) * self._generator().random(size)

    def normal(self, size=None):
        return self._generator().standard_normal(size)

    def integers(self, low, high, size=None):
        """Integer draws from [low, high)."""
        return self._generator().integers(low, high, size=size)

    def permutation(self, n):
        return self._generator().permutation(n)


def ensure_rng(rng):
    """Accept an RngStream, an int seed, or None (seed 0)."""
    if isinstance(rng, RngStream):
        return rng
    if rng is None:
        return RngStream(0)
    return RngStream(rng)
