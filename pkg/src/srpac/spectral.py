"""Frequency grids, LR/HR aliasing algebra and the DFT convention.

Frequencies are integer pairs indexed per array axis (axis 0 first). The LR
domain is ``(-N/2 : N/2-1)^2`` and the HR domain ``(-rN/2 : rN/2-1)^2``, both
half-open so that every HR frequency has exactly one LR representative.

DFT convention (project-wide): unnormalized forward transform, ``1/M^2``
normalized inverse. This is numpy's default, so ``np.fft`` is used directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np


class DomainError(ValueError):
    """Input outside the domain of an operation."""


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class FrequencyGrid:
    """LR side ``N`` and super-resolution factor ``r``.

    ``N`` must be a power of two; the planning minimum of 32 is enforced by
    :meth:`validated`, while tiny grids are allowed for oracle tests.
    """

    N: int
    r: int

    def __post_init__(self):
        if self.r < 2 or int(self.r) != self.r:
            raise DomainError(f"r must be an integer >= 2, got {self.r}")
        if not _is_pow2(self.N):
            raise DomainError(f"N must be a power of two, got {self.N}")
        if self.N % 2:
            raise DomainError("N must be even")

    @classmethod
    def validated(cls, N: int, r: int) -> "FrequencyGrid":
        if N < 32:
            raise DomainError(f"N must be >= 32, got {N}")
        return cls(N, r)

    @property
    def M(self) -> int:
        """HR side length ``rN``."""
        return self.r * self.N

    def lr_freqs(self) -> np.ndarray:
        """LR frequencies along one axis in FFT storage order."""
        return np.fft.fftfreq(self.N, 1.0 / self.N).astype(np.int64)

    def hr_freqs(self) -> np.ndarray:
        """HR frequencies along one axis in FFT storage order."""
        return np.fft.fftfreq(self.M, 1.0 / self.M).astype(np.int64)

    def in_lr(self, k) -> bool:
        h = self.N // 2
        return all(-h <= int(c) < h for c in k)

    def in_hr(self, kp) -> bool:
        h = self.M // 2
        return all(-h <= int(c) < h for c in kp)

    def iter_hr(self) -> Iterator[tuple[int, int]]:
        h = self.M // 2
        for a in range(-h, h):
            for b in range(-h, h):
                yield (a, b)

    def excluded_mask(self) -> np.ndarray:
        """Boolean HR map (FFT order) of frequencies with a ``-rN/2`` component.

        The phase identity behind the G coefficients does not hold there, so
        these rows/columns are left out of every error map and bound.
        """
        edge = self.hr_freqs() == -(self.M // 2)
        return edge[:, None] | edge[None, :]

    def hf_mask(self) -> np.ndarray:
        """HR frequencies outside the central LR square (the super-resolved band)."""
        f = self.hr_freqs()
        inner = (f >= -(self.N // 2)) & (f < self.N // 2)
        return ~(inner[:, None] & inner[None, :])


def alias_decompose(kp, grid: FrequencyGrid) -> tuple[tuple[int, int], tuple[int, int]]:
    """Split an HR frequency into its LR representative and alias index.

    >>> alias_decompose((31, -17), FrequencyGrid(32, 2))
    ((-1, 15), (1, -1))
    """
    if not grid.in_hr(kp):
        raise DomainError(f"{kp} is outside D_HR for N={grid.N}, r={grid.r}")
    N, h = grid.N, grid.N // 2
    k = tuple(int((c + h) % N - h) for c in kp)
    gamma = tuple((int(c) - kc) // N for c, kc in zip(kp, k))
    return k, gamma


def alias_set(k, grid: FrequencyGrid) -> list[tuple[int, int]]:
    """All ``alpha`` with ``k + alpha*N`` inside the half-open HR domain.

    Returns ``r**2`` pairs, axis-0 index varying slowest.
    """
    if not grid.in_lr(k):
        raise DomainError(f"{k} is outside D_LR for N={grid.N}")
    per_axis = []
    for c in k:
        c = int(c)
        per_axis.append([a for a in range(-grid.r, grid.r + 1)
                         if -(grid.M // 2) <= c + a * grid.N < grid.M // 2])
    return [(a0, a1) for a0 in per_axis[0] for a1 in per_axis[1]]


def normalized_frequency(kp, grid: FrequencyGrid) -> np.ndarray:
    """``q = 2*pi*k'/(rN)``; lies in ``[-pi, pi)`` per component."""
    return 2.0 * np.pi * np.asarray(kp, dtype=float) / grid.M


def alias_index_maps(grid: FrequencyGrid) -> np.ndarray:
    """Per-axis alias frequencies for every HR frequency.

    Returns an int array of shape ``(r, M)``: entry ``[b, i]`` is the HR
    frequency of the ``b``-th alias of ``hr_freqs()[i]``; ``b = 0`` is the
    frequency itself (the gamma term). The 2-D alias set of ``k'`` is the
    Cartesian product of the two axis lists.
    """
    f = grid.hr_freqs()
    h = grid.M // 2
    b = np.arange(grid.r)[:, None]
    return (f[None, :] + b * grid.N + h) % grid.M - h


def hr_index(freq: np.ndarray, M: int) -> np.ndarray:
    """FFT storage index of signed frequencies."""
    return np.asarray(freq) % M


def trig_sums(delta, r: int) -> tuple[float, float, float, float]:
    """Closed-form sums of cos, sin, cos^2, sin^2 of ``2*pi/r * delta.d`` over ``d in (0:r-1)^2``."""
    if r < 2:
        raise DomainError("r must be >= 2")
    dm = [int(c) % r for c in delta]
    r2 = float(r * r)
    zero = all(c == 0 for c in dm)
    s_cos = r2 if zero else 0.0
    # cos(2*theta) sums to r^2 exactly when 2*delta == 0 (mod r) per axis
    half = all((2 * c) % r == 0 for c in dm)
    s_cos2 = r2 if half else r2 / 2
    s_sin2 = 0.0 if half else r2 / 2
    return s_cos, 0.0, s_cos2, s_sin2


def check_side(n: int) -> int:
    """HR sides are ``r * 2**j`` with ``r <= 8``: odd part must be 1, 3, 5 or 7."""
    n = int(n)
    odd = n
    while odd % 2 == 0 and odd > 0:
        odd //= 2
    if n < 2 or odd not in (1, 3, 5, 7):
        raise DomainError(f"unsupported image side {n}")
    return n


def _check_square(a: np.ndarray):
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DomainError(f"expected a square 2-D array, got shape {a.shape}")
    check_side(a.shape[0])


def dft_forward(image: np.ndarray) -> np.ndarray:
    """Unnormalized 2-D DFT."""
    image = np.asarray(image)
    _check_square(image)
    return np.fft.fft2(image)


def dft_inverse(spectrum: np.ndarray) -> np.ndarray:
    """Inverse of :func:`dft_forward` (carries the ``1/M^2`` factor)."""
    spectrum = np.asarray(spectrum)
    _check_square(spectrum)
    return np.fft.ifft2(spectrum)


def shift_phase_1d(freqs: np.ndarray, disp: np.ndarray, M: int) -> np.ndarray:
    """Per-axis transfer factor of a periodic translation by ``disp`` HR pixels.

    ``freqs`` has shape ``(K,)`` and ``disp`` shape ``(F,)``; returns ``(F, K)``.
    Off the Nyquist bin this is ``exp(-i q disp)``. The ``-M/2`` bin pairs with
    itself under Hermitian symmetry, so a real translated image carries
    ``cos(pi disp)`` there instead.
    """
    freqs = np.asarray(freqs)
    disp = np.atleast_1d(np.asarray(disp, dtype=float))
    q = 2.0 * np.pi * freqs / M
    out = np.exp(-1j * disp[:, None] * q[None, :])
    nyq = freqs == -(M // 2)
    if nyq.any():
        out[:, nyq] = np.cos(np.pi * disp)[:, None]
    return out
