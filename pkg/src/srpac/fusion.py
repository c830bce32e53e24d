"""Interlace-average fusion and the per-frequency error decomposition.

With ``X`` the fused image and ``Z`` the blurred scene, every HR frequency
``k'`` satisfies

    X~(k') = sum_b Z~(kappa_b(k')) G_b(k')

where ``kappa_b`` runs over the ``r*r`` alias frequencies of ``k'`` (``b = 0``
is ``k'`` itself) and

    G_b(k') = 1/(r^2 n_d) sum_{d,j} exp(-2i pi b.d / r) exp(-i q_b . b_dj)

off the Nyquist bins. ``G_0`` is the approximation gain ``G_gamma`` and the
remaining terms form the aliasing term ``B``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .acquisition import AcquisitionStack, targets
from .bounds import ZERO_THRESHOLD
from .images import write_heatmap
from .scenes import HrScene
from .spectral import DomainError, FrequencyGrid, alias_decompose, alias_index_maps, shift_phase_1d


class StackError(ValueError):
    """Incomplete or inconsistent acquisition stack."""


@dataclass(frozen=True, eq=False)
class FusedImage:
    pixels: np.ndarray
    spectrum: np.ndarray
    r: int
    n_d: int
    provenance: dict = field(default_factory=dict)

    @property
    def side(self) -> int:
        return self.pixels.shape[0]


def interlace(frames: np.ndarray, r: int) -> np.ndarray:
    """Average frames per target and place them on their HR phase.

    ``frames`` has shape ``(r*r, n_d, N, N)`` in target order; the frames of
    target ``d`` fill the HR sites ``r*m - d`` (mod ``rN``).
    """
    if frames.ndim != 4 or frames.shape[0] != r * r:
        raise StackError(f"expected (r*r, n_d, N, N) frames, got {frames.shape}")
    N = frames.shape[-1]
    M = r * N
    x = np.empty((M, M))
    means = frames.mean(axis=1)
    m = r * np.arange(N)
    for i in range(r * r):
        d0, d1 = divmod(i, r)
        x[np.ix_((m - d0) % M, (m - d1) % M)] = means[i]
    return x


def fuse(stack: AcquisitionStack) -> FusedImage:
    """Fast fusion: back-translate by the targeted (not realized) displacement and average."""
    if stack.frames.shape[:2] != (stack.r * stack.r, stack.n_d):
        raise StackError(f"stack needs {stack.r ** 2} x {stack.n_d} frames, "
                         f"got {stack.frames.shape[:2]}")
    if not np.all(np.isfinite(stack.frames)):
        raise StackError("stack contains non-finite pixels")
    x = interlace(stack.frames, stack.r)
    prov = {"r": stack.r, "n_d": stack.n_d, "trial": stack.trial,
            "seed": stack.positioning.seed, "scene": stack.scene_name}
    return FusedImage(x, np.fft.fft2(x), stack.r, stack.n_d, prov)


def _axis_factors(targets_c: np.ndarray, realized_c: np.ndarray, r: int, M: int) -> np.ndarray:
    """Per-axis factors ``A[b, k', f]`` whose products over axes sum to ``G_b``."""
    f = np.fft.fftfreq(M, 1.0 / M).astype(np.int64)
    grid = FrequencyGrid(M // r, r)
    kappa = alias_index_maps(grid)                                    # (r, M)
    back = np.exp(2j * np.pi * np.outer(f, targets_c) / M)            # (M, F)
    return np.stack([shift_phase_1d(kappa[b], realized_c, M).T * back for b in range(r)])


def g_maps(stack: AcquisitionStack, offsets=None) -> np.ndarray:
    """``G_b(k')`` on the whole HR grid.

    Returns an array ``(r, r, M, M)`` indexed by the alias offset ``b`` (so
    ``[0, 0]`` is ``G_gamma``); ``offsets`` restricts the computation to a list
    of ``(b0, b1)`` pairs, the others are left at zero.
    """
    return gain_maps(stack.realized, stack.r, stack.r * stack.N, offsets)


def gain_maps(realized: np.ndarray, r: int, M: int, offsets=None) -> np.ndarray:
    """:func:`g_maps` from raw realized displacements ``(r*r, n_d, 2)``."""
    n_d = realized.shape[1]
    tg = np.repeat(targets(r), n_d, axis=0).astype(float)
    real = realized.reshape(-1, 2)
    F = len(real)
    out = np.zeros((r, r, M, M), dtype=complex)
    todo = offsets if offsets is not None else [(i, j) for i in range(r) for j in range(r)]
    step = max(1, (1 << 21) // (r * M))             # frames per chunk
    for s in range(0, F, step):
        sl = slice(s, s + step)
        a0 = _axis_factors(tg[sl, 0], real[sl, 0], r, M)
        a1 = _axis_factors(tg[sl, 1], real[sl, 1], r, M)
        for b0, b1 in todo:
            out[b0, b1] += a0[b0] @ a1[b1].T
    return out / F


def g_coefficient(alpha, kp, stack: AcquisitionStack) -> complex:
    """``G_alpha(k')`` by direct summation over the recorded position errors.

    ``alpha`` is the alias index of the contributing frequency ``k + alpha*N``
    where ``k`` is the LR representative of ``k'``.
    """
    r, N = stack.r, stack.N
    grid = FrequencyGrid(N, r)
    M = grid.M
    if any(int(c) == -(M // 2) for c in kp):
        raise DomainError(f"{tuple(kp)} has a -rN/2 component and is excluded")
    k, gamma = alias_decompose(kp, grid)
    kappa = np.array([k[0] + alpha[0] * N, k[1] + alpha[1] * N])
    if not grid.in_hr(kappa):
        raise DomainError(f"alias {tuple(alpha)} of {tuple(kp)} lies outside D_HR")
    d = np.repeat(stack.targets, stack.n_d, axis=0)
    b = stack.errors.reshape(-1, 2)
    q = 2 * np.pi * kappa / M
    delta = np.array(alpha) - np.array(gamma)
    terms = np.exp(-2j * np.pi * (d @ delta) / r) * np.exp(-1j * (b @ q))
    return complex(terms.mean())


def aliased_spectra(z_spectrum: np.ndarray, r: int) -> np.ndarray:
    """``Z~(kappa_b(k'))`` for every offset ``b``: shape ``(r, r, M, M)``."""
    M = z_spectrum.shape[0]
    idx = alias_index_maps(FrequencyGrid(M // r, r)) % M
    return z_spectrum[idx[:, None, :, None], idx[None, :, None, :]]


def alias_term_direct(z_spectrum: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``B = sum_{b != 0} Z~(kappa_b) G_b`` (reference path for the subtraction in :func:`decompose`)."""
    r = g.shape[0]
    zs = aliased_spectra(z_spectrum, r)
    terms = zs * g
    return terms.sum(axis=(0, 1)) - terms[0, 0]


@dataclass(frozen=True, eq=False)
class ErrorDecomposition:
    """Per-frequency maps in FFT order.

    ``excluded`` flags rows/columns with a ``-rN/2`` component, ``undefined``
    flags frequencies where ``|Z~|`` is below the zero threshold. Relative
    maps are NaN on either mask.
    """

    g_gamma: np.ndarray
    b_alias: np.ndarray
    z_spectrum: np.ndarray
    x_spectrum: np.ndarray
    excluded: np.ndarray
    undefined: np.ndarray

    @property
    def valid(self) -> np.ndarray:
        return ~(self.excluded | self.undefined)

    def _relative(self, num: np.ndarray) -> np.ndarray:
        out = np.full(num.shape, np.nan)
        v = self.valid
        out[v] = np.abs(num[v]) / np.abs(self.z_spectrum[v])
        return out

    @property
    def rel_error(self) -> np.ndarray:
        return self._relative(self.x_spectrum - self.z_spectrum)

    @property
    def rel_alias(self) -> np.ndarray:
        return self._relative(self.b_alias)

    @property
    def approx_error(self) -> np.ndarray:
        out = np.abs(self.g_gamma - 1.0)
        out[self.excluded] = np.nan
        return out

    def max_rel_error(self) -> float:
        e = self.rel_error
        return float(np.nanmax(e)) if np.any(self.valid) else 0.0

    def to_csv(self, path) -> Path:
        path = Path(path)
        M = self.g_gamma.shape[0]
        f = np.fft.fftfreq(M, 1.0 / M).astype(int)
        ge, ba, re = self.approx_error, self.rel_alias, self.rel_error
        order = np.argsort(f)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k0", "k1", "abs_g_gamma_minus_1", "abs_b_over_z", "rel_error"])
            for i in order:
                for j in order:
                    if self.excluded[i, j]:
                        continue
                    w.writerow([f[i], f[j], _fmt(ge[i, j]), _fmt(ba[i, j]), _fmt(re[i, j])])
        return path

    def heatmaps(self, directory, prefix="") -> list[Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = []
        for name, m in (("approx_error", self.approx_error), ("alias_error", self.rel_alias),
                        ("rel_error", self.rel_error)):
            paths += write_heatmap(d / f"{prefix}{name}", m)
        return paths


def _fmt(v: float) -> str:
    return "nan" if not np.isfinite(v) else repr(float(v))


def decompose(fused: FusedImage, z, stack: AcquisitionStack,
              g_gamma: Optional[np.ndarray] = None) -> ErrorDecomposition:
    """Split the fused spectrum into ``Z~ G_gamma`` and the aliasing remainder ``B``.

    ``z`` is the blurred ground truth (an :class:`HrScene` or its spectrum).
    """
    zs = z.spectrum if isinstance(z, HrScene) else np.asarray(z)
    if zs.shape != fused.spectrum.shape:
        raise DomainError(f"scene size {zs.shape} != fused size {fused.spectrum.shape}")
    if stack.r != fused.r or stack.r * stack.N != fused.side:
        raise DomainError("stack does not match the fused image")
    if g_gamma is None:
        g_gamma = g_maps(stack, offsets=[(0, 0)])[0, 0]
    grid = FrequencyGrid(stack.N, stack.r)
    excluded = grid.excluded_mask()
    mag = np.abs(zs)
    undefined = mag < ZERO_THRESHOLD * mag.max() if mag.max() > 0 else np.ones(mag.shape, bool)
    b = fused.spectrum - zs * g_gamma
    return ErrorDecomposition(g_gamma, b, zs, fused.spectrum, excluded, undefined)


def hf_snr(fused, z, band: str = "hf") -> float:
    """``10 log10(|Z~|^2 / |X~ - Z~|^2)`` over the band; ``+inf`` when the error is zero.

    ``band`` is ``"hf"`` (outside the central LR square) or ``"full"``.
    """
    xs = fused.spectrum if isinstance(fused, FusedImage) else np.asarray(fused)
    zs = z.spectrum if isinstance(z, HrScene) else np.asarray(z)
    if xs.shape != zs.shape:
        raise DomainError(f"size mismatch {xs.shape} vs {zs.shape}")
    r = fused.r if isinstance(fused, FusedImage) else None
    if band == "full":
        sel = np.ones(xs.shape, bool)
    elif band == "hf":
        if r is None:
            raise DomainError("hf band needs r; pass a FusedImage")
        sel = FrequencyGrid(xs.shape[0] // r, r).hf_mask()
    else:
        raise DomainError(f"band must be 'hf' or 'full', got {band!r}")
    err = float(np.sum(np.abs(xs[sel] - zs[sel]) ** 2))
    sig = float(np.sum(np.abs(zs[sel]) ** 2))
    if err == 0.0:
        return float("inf")
    return 10.0 * np.log10(sig / err)
