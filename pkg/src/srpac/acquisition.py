"""Stage and camera simulation: noisy displacements, translation, blur, decimation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import ndtr, ndtri

from . import rng
from .images import read_gray8, to_display, write_gray8
from .scenes import HrScene, Psf, apply_blur
from .spectral import DomainError, shift_phase_1d

MANIFEST_VERSION = 1
LAWS = ("uniform", "truncated-gaussian")


@dataclass(frozen=True)
class PositioningModel:
    """Bounded stage error law.

    ``epsilon`` is the per-axis error bound in LR pixels (``eps_r = epsilon*r``
    in HR pixels). ``bias`` is the mean offset in HR pixels, either one pair
    for every target or a mapping ``{(d0, d1): (b0, b1)}``. The centred noise
    is scaled to the room left by the bias, so ``|b| <= eps_r`` holds by
    construction and the mean of ``b`` is exactly the bias.
    """

    epsilon: float
    law: str = "uniform"
    sigma: Optional[float] = None
    bias: object = (0.0, 0.0)
    seed: int = 0

    def __post_init__(self):
        if self.epsilon < 0:
            raise DomainError("epsilon must be >= 0")
        if self.law not in LAWS:
            raise DomainError(f"law must be one of {LAWS}, got {self.law!r}")
        if self.law == "truncated-gaussian" and not (self.sigma and self.sigma > 0):
            raise DomainError("truncated-gaussian law needs sigma > 0 (HR pixels)")

    def eps_r(self, r: int) -> float:
        return self.epsilon * r

    def bias_for(self, d) -> np.ndarray:
        b = self.bias
        if isinstance(b, dict):
            b = b.get(tuple(int(c) for c in d), (0.0, 0.0))
        return np.asarray(b, dtype=float)

    def bias_table(self, r: int) -> np.ndarray:
        """Bias per target, shape ``(r*r, 2)`` in target order."""
        tab = np.array([self.bias_for(d) for d in targets(r)])
        if np.any(np.abs(tab) > self.eps_r(r) + 1e-15):
            raise DomainError("bias components must not exceed eps_r")
        return tab

    def mean_bias_norm(self, r: int) -> float:
        return float(np.mean(np.hypot(*self.bias_table(r).T)))

    def centred_noise(self, u: np.ndarray, half_width: np.ndarray) -> np.ndarray:
        """Map uniforms in [0, 1) to centred noise on ``(-half_width, half_width)``."""
        if self.law == "uniform":
            return half_width * (2.0 * u - 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where(half_width > 0, half_width / self.sigma, 0.0)
            lo = ndtr(-a)
            z = ndtri(lo + u * (1.0 - 2.0 * lo))
        return np.where(half_width > 0, self.sigma * z, 0.0)

    def to_dict(self) -> dict:
        b = self.bias
        if isinstance(b, dict):
            b = {f"{k[0]},{k[1]}": list(map(float, v)) for k, v in b.items()}
        else:
            b = list(map(float, b))
        return {"epsilon": self.epsilon, "law": self.law, "sigma": self.sigma,
                "bias": b, "seed": self.seed, "units": {"epsilon": "LR pixels",
                                                        "bias": "HR pixels",
                                                        "sigma": "HR pixels"}}

    @classmethod
    def from_dict(cls, d: dict) -> "PositioningModel":
        b = d.get("bias", (0.0, 0.0))
        if isinstance(b, dict):
            b = {tuple(int(c) for c in k.split(",")): tuple(v) for k, v in b.items()}
        else:
            b = tuple(b)
        return cls(epsilon=d["epsilon"], law=d.get("law", "uniform"),
                   sigma=d.get("sigma"), bias=b, seed=d.get("seed", 0))


def targets(r: int) -> np.ndarray:
    """The ``r*r`` targeted HR displacements, axis-0 component varying slowest."""
    d = np.arange(r)
    return np.stack(np.meshgrid(d, d, indexing="ij"), axis=-1).reshape(-1, 2)


def position_errors(model: PositioningModel, r: int, n_d: int, trial: int = 0) -> np.ndarray:
    """All errors ``b_dj`` for one acquisition, shape ``(r*r, n_d, 2)`` (HR pixels).

    The value for ``(trial, d, j, axis)`` depends only on those coordinates and
    the model seed (see :mod:`srpac.rng`).
    """
    tg = targets(r)
    eps_r = model.eps_r(r)
    bias = model.bias_table(r)
    if eps_r == 0:
        return np.zeros((r * r, n_d, 2))
    u = rng.uniform(model.seed, trial, tg[:, None, None, 0], tg[:, None, None, 1],
                    np.arange(n_d)[None, :, None], np.arange(2)[None, None, :],
                    rng.STREAM_POSITION)
    half = eps_r - np.abs(bias)[:, None, :]
    b = bias[:, None, :] + model.centred_noise(u, half)
    return np.clip(b, -eps_r, eps_r)


def sample_displacement(d, model: PositioningModel, r: int, j: int = 0, trial: int = 0) -> np.ndarray:
    """Realized displacement ``d + b_dj`` of frame ``j`` at target ``d``."""
    d = np.asarray(d, dtype=int)
    if d.shape != (2,) or np.any(d < 0) or np.any(d >= r):
        raise DomainError(f"target {tuple(d)} outside (0:{r - 1})^2")
    eps_r = model.eps_r(r)
    if eps_r == 0:
        return d.astype(float)
    u = rng.uniform(model.seed, trial, int(d[0]), int(d[1]), j, np.arange(2),
                    rng.STREAM_POSITION)
    bias = model.bias_for(d)
    b = bias + model.centred_noise(u, eps_r - np.abs(bias))
    return d + np.clip(b, -eps_r, eps_r)


def acquire_frames(z_spectrum: np.ndarray, disps: np.ndarray, r: int) -> np.ndarray:
    """Decimated translated frames for a batch of displacements.

    ``z_spectrum`` is the (already blurred) HR spectrum, ``disps`` has shape
    ``(F, 2)`` in HR pixels. Returns ``(F, N, N)`` real frames. Decimation keeps
    HR samples ``(r*m0, r*m1)``; it is carried out in the Fourier domain by
    folding the translated spectrum onto the LR grid.
    """
    M = z_spectrum.shape[0]
    if M % r:
        raise DomainError(f"HR side {M} is not a multiple of r={r}")
    N = M // r
    disps = np.atleast_2d(np.asarray(disps, dtype=float))
    f = np.fft.fftfreq(M, 1.0 / M).astype(int)
    out = np.empty((len(disps), N, N))
    step = max(1, (1 << 22) // (M * M))             # bound the batch footprint
    for s in range(0, len(disps), step):
        p0 = shift_phase_1d(f, disps[s:s + step, 0], M)          # (F, M)
        p1 = shift_phase_1d(f, disps[s:s + step, 1], M)
        shifted = z_spectrum[None] * p0[:, :, None] * p1[:, None, :]
        folded = shifted.reshape(-1, r, N, r, N).sum(axis=(1, 3))
        out[s:s + step] = np.fft.ifft2(folded).real / (r * r)
    return out


def mean_frames(z_spectrum: np.ndarray, realized: np.ndarray, r: int) -> np.ndarray:
    """Per-target average of the frames, without forming each frame.

    ``realized`` has shape ``(r*r, n_d, 2)``. Averaging commutes with the
    linear acquisition, so the ``n_d`` translation factors are averaged in
    the Fourier domain first. Returns ``(r*r, N, N)``.
    """
    M = z_spectrum.shape[0]
    N = M // r
    n_d = realized.shape[1]
    f = np.fft.fftfreq(M, 1.0 / M).astype(int)
    out = np.empty((realized.shape[0], N, N))
    for i, disp in enumerate(realized):
        p0 = shift_phase_1d(f, disp[:, 0], M)
        p1 = shift_phase_1d(f, disp[:, 1], M)
        phase = p0.T @ p1 / n_d
        folded = (z_spectrum * phase).reshape(r, N, r, N).sum(axis=(0, 2))
        out[i] = np.fft.ifft2(folded).real / (r * r)
    return out


def acquire_frame(scene: HrScene, psf: Psf, d_e, r: int) -> np.ndarray:
    """One LR frame ``D H F^{d_e} Y_HR`` (N x N)."""
    if scene.side % r:
        raise DomainError(f"scene side {scene.side} is not a multiple of r={r}")
    z = apply_blur(scene, psf)
    return acquire_frames(z.spectrum, np.asarray(d_e, dtype=float)[None], r)[0]


@dataclass(frozen=True)
class LrFrame:
    pixels: np.ndarray
    target_d: tuple
    realized_d: tuple
    j: int


@dataclass(eq=False)
class AcquisitionStack:
    """``r*r*n_d`` frames grouped by target (d-major, j-minor)."""

    frames: np.ndarray            # (r*r, n_d, N, N)
    realized: np.ndarray          # (r*r, n_d, 2) realized displacements, HR px
    r: int
    n_d: int
    positioning: PositioningModel
    psf: Psf
    trial: int = 0
    noise_sigma: float = 0.0
    noise_seed: Optional[int] = None
    scene_name: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def targets(self) -> np.ndarray:
        return targets(self.r)

    @property
    def errors(self) -> np.ndarray:
        return self.realized - self.targets[:, None, :]

    @property
    def N(self) -> int:
        return self.frames.shape[-1]

    def __len__(self):
        return self.r * self.r * self.n_d

    def __iter__(self):
        tg = self.targets
        for i in range(self.r * self.r):
            for j in range(self.n_d):
                yield LrFrame(self.frames[i, j], tuple(int(c) for c in tg[i]),
                              tuple(float(c) for c in self.realized[i, j]), j)

    def manifest(self) -> dict:
        return {
            "version": MANIFEST_VERSION, "r": self.r, "n_d": self.n_d, "N": self.N,
            "trial": self.trial, "scene": self.scene_name, "psf": self.psf.describe(),
            "positioning": self.positioning.to_dict(),
            "noise": {"sigma": self.noise_sigma, "seed": self.noise_seed},
            "frames": [
                {"index": i * self.n_d + j, "target_d": [int(c) for c in self.targets[i]],
                 "j": j, "realized_d": [float(c) for c in self.realized[i, j]]}
                for i in range(self.r * self.r) for j in range(self.n_d)
            ],
        }


def acquire_stack(scene: HrScene, psf: Psf, r: int, n_d: int, model: PositioningModel,
                  trial: int = 0) -> AcquisitionStack:
    """Simulate ``n_d`` frames at each of the ``r*r`` targets.

    Every frame gets its own error draw (the stage is reset between frames);
    the draw is keyed by ``(model.seed, trial, d, j)``.
    """
    if n_d < 1:
        raise DomainError("n_d must be >= 1")
    if scene.side % r:
        raise DomainError(f"scene side {scene.side} is not a multiple of r={r}")
    z = apply_blur(scene, psf)
    b = position_errors(model, r, n_d, trial)
    realized = targets(r)[:, None, :] + b
    frames = acquire_frames(z.spectrum, realized.reshape(-1, 2), r)
    N = scene.side // r
    return AcquisitionStack(frames.reshape(r * r, n_d, N, N), realized, r, n_d, model, psf,
                            trial=trial, scene_name=scene.name)


def add_noise(stack: AcquisitionStack, sigma: float, seed: int) -> AcquisitionStack:
    """Add i.i.d. N(0, sigma^2) gray levels to every pixel of every frame."""
    if sigma < 0:
        raise DomainError("sigma must be >= 0")
    if sigma == 0:
        return stack
    noisy = stack.frames.copy()
    tg = stack.targets
    for i in range(stack.r * stack.r):
        for j in range(stack.n_d):
            g = rng.generator(seed, stack.trial, int(tg[i, 0]), int(tg[i, 1]), j, rng.STREAM_NOISE)
            noisy[i, j] += sigma * g.standard_normal(noisy.shape[-2:])
    return AcquisitionStack(noisy, stack.realized, stack.r, stack.n_d, stack.positioning,
                            stack.psf, stack.trial, sigma, seed, stack.scene_name,
                            dict(stack.extra))


def save_stack(stack: AcquisitionStack, directory) -> Path:
    """Write PGM previews, exact frames (``frames.npy``) and ``manifest.json``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    flat = stack.frames.reshape(-1, stack.N, stack.N)
    lo, hi = float(flat.min()), float(flat.max())
    np.save(out / "frames.npy", stack.frames)
    for i, fr in enumerate(flat):
        write_gray8(out / f"frame_{i:05d}.pgm", to_display(fr, lo, hi))
    man = stack.manifest()
    man["preview_scale"] = {"min": lo, "max": hi}
    man["frames_file"] = "frames.npy"
    (out / "manifest.json").write_text(json.dumps(man, indent=1))
    return out / "manifest.json"


def load_stack(directory) -> AcquisitionStack:
    """Read a stack written by :func:`save_stack`.

    Exact frames come from ``frames.npy``; if it is missing the 8-bit PGM
    previews are rescaled with the recorded range.
    """
    d = Path(directory)
    man = json.loads((d / "manifest.json").read_text())
    r, n_d, N = man["r"], man["n_d"], man["N"]
    realized = np.array([f["realized_d"] for f in man["frames"]], dtype=float).reshape(r * r, n_d, 2)
    npy = d / man.get("frames_file", "frames.npy")
    if npy.exists():
        frames = np.load(npy)
    else:
        lo, hi = man["preview_scale"]["min"], man["preview_scale"]["max"]
        frames = np.array([read_gray8(d / f"frame_{f['index']:05d}.pgm") for f in man["frames"]],
                          dtype=float).reshape(r * r, n_d, N, N)
        frames = lo + frames / 255.0 * (hi - lo)
    psf = Psf.parse(man["psf"], r * N)
    model = PositioningModel.from_dict(man["positioning"])
    return AcquisitionStack(frames, realized, r, n_d, model, psf, trial=man.get("trial", 0),
                            noise_sigma=man["noise"]["sigma"], noise_seed=man["noise"]["seed"],
                            scene_name=man.get("scene", ""))
