"""Grayscale image I/O (PGM/PNG) and heat-map rendering."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


class ImageInputError(ValueError):
    """Unreadable or unsupported image file."""


def read_gray8(path) -> np.ndarray:
    """Read an 8-bit grayscale PGM (P2/P5) or PNG as a uint8 array."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            arr = np.array(im)
    except (OSError, SyntaxError) as exc:
        raise ImageInputError(f"cannot read {path}: {exc}") from exc
    if mode != "L":
        raise ImageInputError(f"{path}: expected 8-bit grayscale, got mode {mode!r}")
    return arr


def write_gray8(path, pixels: np.ndarray) -> None:
    """Write uint8-compatible pixels; format follows the suffix (.pgm or .png)."""
    path = Path(path)
    arr = np.asarray(pixels)
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    fmt = {".pgm": "PPM", ".png": "PNG"}.get(path.suffix.lower())
    if fmt is None:
        raise ImageInputError(f"unsupported output suffix {path.suffix!r}")
    Image.fromarray(arr, mode="L").save(path, format=fmt)


def to_display(values: np.ndarray, vmin=None, vmax=None) -> np.ndarray:
    """Linearly map finite values to 0..255; non-finite entries become 0."""
    v = np.asarray(values, dtype=float)
    finite = np.isfinite(v)
    if not finite.any():
        return np.zeros(v.shape, np.uint8)
    lo = np.min(v[finite]) if vmin is None else vmin
    hi = np.max(v[finite]) if vmax is None else vmax
    span = hi - lo if hi > lo else 1.0
    out = np.where(finite, (v - lo) / span, 0.0)
    return np.clip(np.rint(255 * out), 0, 255).astype(np.uint8)


def centered(freq_map: np.ndarray) -> np.ndarray:
    """FFT-ordered map -> DC-centred view for display."""
    return np.fft.fftshift(freq_map)


def write_heatmap(stem, freq_map: np.ndarray, vmin=None, vmax=None, cmap="jet") -> list[Path]:
    """Write ``stem.pgm`` (exact 8-bit levels) and ``stem.png`` (coloured).

    ``freq_map`` is in FFT order and is centred before rendering.
    """
    from matplotlib import colormaps

    stem = Path(stem)
    gray = to_display(centered(freq_map), vmin, vmax)
    pgm = stem.parent / f"{stem.name}.pgm"
    write_gray8(pgm, gray)
    rgba = colormaps[cmap](gray / 255.0)
    png = stem.parent / f"{stem.name}.png"
    Image.fromarray((rgba[..., :3] * 255).astype(np.uint8), mode="RGB").save(png)
    return [pgm, png]
