"""Ground-truth HR scenes and PSF models."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .images import ImageInputError, read_gray8, write_gray8
from .spectral import DomainError, check_side


@dataclass(frozen=True, eq=False)
class HrScene:
    """A real HR image with its cached unnormalized DFT."""

    pixels: np.ndarray
    spectrum: np.ndarray
    eta: Optional[float] = None
    name: str = "scene"

    @classmethod
    def from_pixels(cls, pixels, eta=None, name="scene") -> "HrScene":
        px = np.asarray(pixels, dtype=float)
        if px.ndim != 2 or px.shape[0] != px.shape[1]:
            raise DomainError(f"scene must be square, got {px.shape}")
        check_side(px.shape[0])
        px = px.copy()
        px.setflags(write=False)
        spec = np.fft.fft2(px)
        spec.setflags(write=False)
        return cls(px, spec, eta, name)

    @classmethod
    def from_spectrum(cls, spectrum, eta=None, name="scene") -> "HrScene":
        spec = np.array(spectrum, dtype=complex)
        check_side(spec.shape[0])
        px = np.fft.ifft2(spec).real
        px.setflags(write=False)
        spec.setflags(write=False)
        return cls(px, spec, eta, name)

    @property
    def side(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True, eq=False)
class Psf:
    """Point spread function, stored as its transfer function on the HR grid."""

    kind: str
    width: float = 0.0
    side: int = 0
    transfer: np.ndarray = field(default=None, repr=False)

    @classmethod
    def dirac(cls, side: int) -> "Psf":
        return cls("dirac", 0.0, side, np.ones((side, side), dtype=complex))

    @classmethod
    def gaussian(cls, side: int, width: float) -> "Psf":
        """Gaussian blur of standard deviation ``width`` HR pixels.

        The transfer function is the continuous one, ``exp(-width^2 |q|^2 / 2)``,
        sampled on the HR frequency grid. Sampling the kernel in space instead
        would alias its spectrum and leave ``H~`` far too flat near Nyquist for
        widths below one pixel.
        """
        if width <= 0:
            raise DomainError("gaussian width must be positive")
        q = 2 * np.pi * np.fft.fftfreq(side)
        h1 = np.exp(-(width**2) * q**2 / 2)
        return cls("gaussian", float(width), side, np.outer(h1, h1).astype(complex))

    @classmethod
    def parse(cls, spec: str, side: int) -> "Psf":
        """``"dirac"`` or ``"gaussian:<width>"``."""
        if spec in ("dirac", "none", ""):
            return cls.dirac(side)
        kind, _, w = spec.partition(":")
        if kind != "gaussian" or not w:
            raise DomainError(f"unknown PSF spec {spec!r}")
        return cls.gaussian(side, float(w))

    def kernel(self) -> np.ndarray:
        """Spatial kernel (origin at [0, 0])."""
        return np.fft.ifft2(self.transfer).real

    def describe(self) -> str:
        return "dirac" if self.kind == "dirac" else f"gaussian:{self.width:g}"


def power_law_amplitude(side: int, eta: float) -> np.ndarray:
    """``|k'|_2^-(1+eta)`` on the HR grid (FFT order); DC takes the ``|k'|=1`` value."""
    f = np.fft.fftfreq(side, 1.0 / side)
    rad = np.hypot(f[:, None], f[None, :])
    rad[0, 0] = 1.0
    return rad ** (-(1.0 + eta))


def synth_power_law(side: int, eta: float = 0.0, seed: int = 0, name=None) -> HrScene:
    """Random-phase scene whose amplitude spectrum is exactly a power law.

    Phases are taken from the DFT of real white noise, which makes them uniform
    and Hermitian-paired; self-conjugate bins (DC, Nyquist) come out real.
    """
    check_side(side)
    if abs(eta) > 0.5:
        raise DomainError(f"|eta| must be <= 0.5, got {eta}")
    rng = np.random.Generator(np.random.Philox(key=int(seed) & (2**64 - 1)))
    noise = np.fft.fft2(rng.standard_normal((side, side)))
    mag = np.abs(noise)
    mag[mag == 0] = 1.0
    spec = power_law_amplitude(side, eta) * (noise / mag)
    return HrScene.from_spectrum(spec, eta=eta, name=name or f"powerlaw(eta={eta:g},seed={seed})")


def load_scene(path, name=None) -> HrScene:
    """Load an 8-bit grayscale PGM/PNG as a scene with values in [0, 255]."""
    arr = read_gray8(path)
    if arr.shape[0] != arr.shape[1]:
        raise ImageInputError(f"{path}: image must be square, got {arr.shape}")
    try:
        check_side(arr.shape[0])
    except DomainError as exc:
        raise ImageInputError(f"{path}: {exc}") from exc
    return HrScene.from_pixels(arr.astype(float), name=name or str(path))


def save_scene(scene: HrScene, path) -> None:
    write_gray8(path, scene.pixels)


def apply_blur(scene: HrScene, psf: Psf) -> HrScene:
    """``Z = H Y_HR``; a Dirac PSF returns the scene itself."""
    if psf.transfer.shape != scene.spectrum.shape:
        raise DomainError(f"PSF size {psf.transfer.shape} != scene size {scene.spectrum.shape}")
    if psf.kind == "dirac":
        return scene
    return HrScene.from_spectrum(scene.spectrum * psf.transfer, eta=scene.eta,
                                 name=f"{scene.name}*{psf.describe()}")


def radial_average(power: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean of an FFT-ordered map over integer-radius annuli (radius >= 1)."""
    side = power.shape[0]
    f = np.fft.fftfreq(side, 1.0 / side)
    rad = np.rint(np.hypot(f[:, None], f[None, :])).astype(int)
    rmax = side // 2
    sums = np.bincount(rad.ravel(), weights=power.ravel(), minlength=rmax + 1)
    counts = np.bincount(rad.ravel(), minlength=rmax + 1)
    radii = np.arange(1, rmax)
    return radii.astype(float), sums[1:rmax] / counts[1:rmax]
