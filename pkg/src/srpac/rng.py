"""Counter-based random streams keyed by (base seed, trial, target, frame).

Every random quantity is a pure function of its coordinates, so results do
not depend on generation order or on how work is split across threads.

Hash definition (reproducible in any language with wrapping uint64 arithmetic)::

    splitmix64(x):
        x = x + 0x9E3779B97F4A7C15
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9
        x = (x ^ (x >> 27)) * 0x94D049BB133111EB
        return x ^ (x >> 31)

    key(w_1, ..., w_n):  h = 0; for w in words: h = splitmix64(h ^ w)

    uniform(key) = (key >> 11) * 2**-53          # in [0, 1)

Negative words are taken modulo 2**64. Stream tags below are fixed words
mixed in after the coordinates.
"""

from __future__ import annotations

import numpy as np

MASK = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

STREAM_POSITION = 0x504F53   # "POS"
STREAM_NOISE = 0x4E4F49      # "NOI"
STREAM_SCENE = 0x53434E      # "SCN"


def splitmix64(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.uint64) + _GOLDEN
    x = (x ^ (x >> np.uint64(30))) * _M1
    x = (x ^ (x >> np.uint64(27))) * _M2
    return x ^ (x >> np.uint64(31))


def _word(w) -> np.ndarray:
    if isinstance(w, (int, np.integer)):
        return np.atleast_1d(np.uint64(int(w) & MASK))
    w = np.asarray(w)
    if w.dtype.kind == "i":
        return w.astype(np.int64).view(np.uint64)
    return w.astype(np.uint64)


def key(*words) -> np.ndarray:
    """Hash broadcastable integer words into uint64 keys."""
    with np.errstate(over="ignore"):
        h = np.zeros((), dtype=np.uint64)
        for w in words:
            h = splitmix64(h ^ _word(w))
    return h


def scalar_key(*words) -> int:
    return int(np.ravel(key(*words))[0])


def uniform(*words) -> np.ndarray:
    """Uniform [0, 1) variates, one per broadcast position of ``words``."""
    return (key(*words) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def generator(*words) -> np.random.Generator:
    """A Philox generator keyed by the hash of ``words`` (for bulk draws)."""
    return np.random.Generator(np.random.Philox(key=scalar_key(*words)))
