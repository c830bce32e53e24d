"""Concentration bounds on the fusion error and the acquisition plans they imply.

Two error sources are bounded separately:

* the approximation coefficient ``G_gamma`` (content independent, sized by
  ``c1``), and
* the aliasing term ``B`` relative to ``Z~`` (content dependent, sized by
  ``c2`` and floored by ``p0``).

Not-reachable (NR) outcomes are ordinary return values (``None`` for counts,
``NaN`` in per-frequency maps), never exceptions.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .scenes import HrScene, Psf, power_law_amplitude
from .spectral import DomainError, FrequencyGrid, alias_index_maps

FORMULA_VERSION = "srpac-bounds/1"
SQRT2 = math.sqrt(2.0)
NR = "NR"
# relative zero threshold on |Z~| below which a frequency has no relative error
ZERO_THRESHOLD = 1e-9


def _check_prob(name, v, closed_low=False):
    lo_ok = v >= 0 if closed_low else v > 0
    if not (lo_ok and v < 1):
        raise DomainError(f"{name} must lie in (0, 1), got {v}")


def ceil_count(x: float) -> int:
    """Ceiling with the floor-at-one rule for frame counts."""
    if not math.isfinite(x):
        raise OverflowError("unbounded frame count")
    # guard against 156.0000000001-style round-off
    return max(1, math.ceil(x - 1e-9))


# ---------------------------------------------------------------------------
# approximation term

def p_best(eps: float, r: int) -> float:
    """Smallest approximation error that can be guaranteed: ``2 pi^2 eps^2 r^2``."""
    return 2.0 * math.pi**2 * eps**2 * r**2


def c1(eps: float, r: int, p1: float, bias_norm: float = 0.0, strict: bool = False) -> float:
    """Hoeffding coefficient of the approximation term at the worst frequency.

    ``strict`` keeps the cubic remainder that the usual form drops.
    Non-positive values mean the target ``p1`` is not reachable.
    """
    if eps <= 0:
        raise DomainError("c1 needs eps > 0")
    slack = p1 - SQRT2 * math.pi * bias_norm - p_best(eps, r)
    if strict:
        eps_r = eps * r
        slack -= SQRT2 * (2 * math.pi) ** 3 * eps_r**3 / 3.0
    return slack / (2.0 * SQRT2 * math.pi * eps)


def nd_from_c1(c: float, P1: float) -> Optional[int]:
    if c <= 0:
        return None
    return ceil_count(8.0 / c**2 * math.log(4.0 / (1.0 - P1)))


def nd_min_approx(eps: float, r: int, p1: float, P1: float, bias_norm: float = 0.0,
                  strict: bool = False) -> Optional[int]:
    """Frames per position guaranteeing ``|G_gamma - 1| <= p1`` w.p. ``P1``; None if NR."""
    _check_prob("P1", P1)
    if eps == 0:
        return 1 if bias_norm * SQRT2 * math.pi < p1 else None
    return nd_from_c1(c1(eps, r, p1, bias_norm, strict), P1)


# ---------------------------------------------------------------------------
# aliasing term

def f_alias(q_l1, eps_r: float):
    """Deterministic Taylor remainder ``|q|_1^2 e^2/2 + |q|_1^3 e^3/6``."""
    x = np.asarray(q_l1, dtype=float) * eps_r
    out = x**2 / 2.0 + x**3 / 6.0
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class AliasTables:
    """Per-frequency alias ratios ``|Z~_a / Z~_g|`` and ``|q_a|_1`` for ``a != g``.

    Arrays have shape ``(r*r - 1, M, M)`` in FFT order. ``valid`` marks
    frequencies that are neither excluded (``-rN/2`` component) nor masked
    (``|Z~_g|`` below the zero threshold).
    """

    grid: FrequencyGrid
    ratio: np.ndarray
    q_l1: np.ndarray
    valid: np.ndarray


def alias_tables(amplitude: np.ndarray, grid: FrequencyGrid) -> AliasTables:
    amp = np.abs(np.asarray(amplitude))
    M, r = grid.M, grid.r
    if amp.shape != (M, M):
        raise DomainError(f"amplitude shape {amp.shape} != ({M}, {M})")
    alias = alias_index_maps(grid)              # (r, M) signed HR freqs
    idx = alias % M
    q_l1_axis = np.abs(2 * np.pi * alias / M)    # (r, M)
    ratios, l1 = [], []
    with np.errstate(divide="ignore", invalid="ignore"):
        for b0 in range(r):
            for b1 in range(r):
                if b0 == 0 and b1 == 0:
                    continue
                za = amp[idx[b0][:, None], idx[b1][None, :]]
                ratios.append(za / amp)
                l1.append(q_l1_axis[b0][:, None] + q_l1_axis[b1][None, :])
    valid = ~grid.excluded_mask() & (amp >= ZERO_THRESHOLD * amp.max())
    ratio = np.array(ratios)
    ratio[:, ~valid] = np.nan
    return AliasTables(grid, ratio, np.array(l1), valid)


def p0_map(tables: AliasTables, eps: float) -> np.ndarray:
    """Per-frequency floor ``p0(k')`` of the guaranteeable aliasing error."""
    eps_r = eps * tables.grid.r
    return SQRT2 * np.sum(tables.ratio * f_alias(tables.q_l1, eps_r), axis=0)


def a_map(tables: AliasTables, eps: float) -> np.ndarray:
    """Per-frequency slope ``a(k')`` of the aliasing constraint in ``c``."""
    return SQRT2 * eps * np.sum(tables.ratio * tables.q_l1, axis=0)


def c2_map(tables: AliasTables, eps: float, p: float) -> np.ndarray:
    """``c2(k') = (p - p0(k')) / a(k')``; NaN where not reachable or masked, +inf when ``eps == 0``."""
    p0 = p0_map(tables, eps)
    a = a_map(tables, eps)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(a > 0, (p - p0) / a, np.inf)
    c = np.where(p > p0, c, np.nan)
    c[~tables.valid] = np.nan
    return c


def alias_log_term(r: int, P2: float) -> float:
    """``log(2/(1-P^(1/3)))`` for r = 2, ``log(4/(1-P^(1/(r^2-1))))`` otherwise."""
    _check_prob("P2", P2)
    if r == 2:
        return math.log(2.0 / (1.0 - P2 ** (1.0 / 3.0)))
    return math.log(4.0 / (1.0 - P2 ** (1.0 / (r * r - 1))))


def alias_target(r: int, p2: float) -> float:
    """The relative error fed to ``c2``: the r = 2 bound uses ``c2(sqrt(2) p)``."""
    return SQRT2 * p2 if r == 2 else p2


def nd_from_c2(c2: float, r: int, P2: float) -> Optional[int]:
    if c2 is None or not (c2 > 0):
        return None
    if math.isinf(c2):
        return 1
    return ceil_count(alias_log_term(r, P2) / c2**2)


def c2_global(c2: np.ndarray, valid: np.ndarray) -> float:
    """Infimum over valid frequencies; NaN if any valid frequency is NR."""
    vals = c2[valid]
    if vals.size == 0:
        raise DomainError("all frequencies are masked")
    if np.isnan(vals).any():
        return float("nan")
    return float(vals.min())


def p0_global(tables: AliasTables, eps: float) -> float:
    p0 = p0_map(tables, eps)[tables.valid]
    if p0.size == 0:
        raise DomainError("all frequencies are masked")
    return float(p0.max())


def nd_map_from_c2(c2: np.ndarray, r: int, P2: float) -> np.ndarray:
    """Per-frequency frame counts (float array; NaN = NR or masked)."""
    log_term = alias_log_term(r, P2)
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = log_term / c2**2
    out = np.where(np.isnan(c2), np.nan, np.maximum(1.0, np.ceil(raw - 1e-9)))
    return out


# ---------------------------------------------------------------------------
# power-law shortcut

@dataclass(frozen=True)
class PowerLawCoefficients:
    """Coefficients of the closed-form power-law approximations of ``p0`` and ``a``.

    ``a0`` leaves out the alias that lands next to DC (its ratio scales with
    ``N`` while its ``|q|_1`` shrinks, leaving an ``O(1)`` product that the
    highest-frequency sum would otherwise pick up); ``a0_with_dc`` keeps it.
    """

    r: int
    N: int
    eta: float
    F_rN: float
    b0: float
    a0: float
    a0_with_dc: float

    def p0_star(self, eps: float) -> float:
        r = self.r
        return self.b0 * SQRT2**self.eta * math.pi**2 * eps**2 * r**2 * (r * r - 1)

    def a_star(self, eps: float) -> float:
        return self.a0 * 2 ** (1 + self.eta / 2) * eps * (self.r**2 - 1)

    def c2_star(self, eps: float, p: float) -> float:
        return (p - self.p0_star(eps)) / self.a_star(eps)


@lru_cache(maxsize=None)
def power_law_coefficients(r: int, N: int, eta: float = 0.0) -> PowerLawCoefficients:
    if N < 32:
        raise DomainError(f"N must be >= 32, got {N}")
    v = 1.0 - 2.0 / (r * N)
    beta = np.array([(b0, b1) for b0 in range(r) for b1 in range(r) if (b0, b1) != (0, 0)],
                    dtype=float)
    u = v - 2.0 * beta / r
    l1 = np.abs(u).sum(axis=1)
    l2 = np.hypot(u[:, 0], u[:, 1])
    F = float(np.sum(l1**2 / l2 ** (1 + eta)))
    first = l1 / l2 ** (1 + eta)
    near_dc = l2 < 4.0 / (r * N)
    n_alias = r * r - 1
    return PowerLawCoefficients(
        r=r, N=N, eta=eta, F_rN=F, b0=F / n_alias,
        a0=float(first[~near_dc].sum()) / n_alias,
        a0_with_dc=float(first.sum()) / n_alias,
    )


def feasible_epsilon_max(r: int, p: float, eta: float = 0.0, N: int = 32) -> float:
    """Largest ``eps`` with ``p0*(eps, r) < p`` under the power-law shortcut."""
    if p <= 0:
        raise DomainError("p must be positive")
    co = power_law_coefficients(r, N, eta)
    return math.sqrt(p / (co.b0 * SQRT2**eta * math.pi**2 * r**2 * (r * r - 1)))


# ---------------------------------------------------------------------------
# plans

@dataclass
class BoundsConfig:
    """Inputs of a plan. ``epsilon`` in LR pixels, ``bias_norm`` in HR pixels."""

    r: int
    epsilon: float
    p1: float = 0.05
    P1: float = 0.95
    p2: float = 0.05
    P2: float = 0.95
    eta: float = 0.0
    bias_norm: float = 0.0
    psf: str = "dirac"
    N: int = 32
    seconds_per_frame: Optional[float] = None
    strict: bool = False
    scene: Optional[HrScene] = field(default=None, repr=False, compare=False)

    def validate(self) -> "BoundsConfig":
        if int(self.r) != self.r or self.r < 2:
            raise DomainError(f"r must be an integer >= 2, got {self.r}")
        if self.epsilon < 0:
            raise DomainError("epsilon must be >= 0")
        if self.epsilon >= 1.0 / (math.pi * self.r):
            raise DomainError(f"epsilon must be < 1/(pi r) = {1 / (math.pi * self.r):.4g}")
        for name in ("p1", "P1", "p2", "P2"):
            _check_prob(name, getattr(self, name))
        if self.bias_norm < 0 or self.bias_norm > self.epsilon * self.r * SQRT2:
            raise DomainError("bias_norm must lie in [0, sqrt(2) eps r]")
        if abs(self.eta) > 0.5:
            raise DomainError("|eta| must be <= 0.5")
        if self.seconds_per_frame is not None and self.seconds_per_frame < 0:
            raise DomainError("seconds_per_frame must be >= 0")
        return self

    @property
    def grid(self) -> FrequencyGrid:
        if self.scene is not None:
            side = self.scene.side
            if side % self.r:
                raise DomainError(f"scene side {side} is not a multiple of r={self.r}")
            return FrequencyGrid(side // self.r, self.r)
        return FrequencyGrid.validated(self.N, self.r)

    def amplitude(self) -> np.ndarray:
        """``|Z~|`` on the HR grid: measured scene spectrum or power law, times ``|H~|``."""
        grid = self.grid
        psf = Psf.parse(self.psf, grid.M)
        if self.scene is not None:
            base = np.abs(self.scene.spectrum)
        else:
            base = power_law_amplitude(grid.M, self.eta)
        return base * np.abs(psf.transfer)

    def echo(self) -> dict:
        d = asdict(self)
        d.pop("scene")
        d["spectrum"] = (f"measured:{self.scene.name}" if self.scene is not None
                         else f"power-law(eta={self.eta:g})")
        d["units"] = {"epsilon": "LR pixels", "bias_norm": "HR pixels",
                      "seconds_per_frame": "s"}
        return d


@dataclass
class BoundsReport:
    config: dict
    p_best: float
    c1: Optional[float]
    c2: Optional[float]
    p0: float
    nd_approx: Optional[int]
    nd_alias: Optional[int]
    nd_total: Optional[int]
    feasible: str
    guarantee: dict
    acquisition_seconds: Optional[float] = None
    caveats: list = field(default_factory=list)
    formula_version: str = FORMULA_VERSION

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("nd_approx", "nd_alias", "nd_total"):
            if d[k] is None:
                d[k] = NR
        for k in ("c1", "c2"):
            if d[k] is not None and not math.isfinite(d[k]):
                d[k] = None if math.isnan(d[k]) else "inf"
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), indent=2, **kw)

    def summary(self) -> str:
        fmt = lambda v: NR if v is None else str(v)  # noqa: E731
        lines = [
            f"r={self.config['r']} eps={self.config['epsilon']:g} LR px  "
            f"spectrum={self.config['spectrum']} psf={self.config['psf']}",
            f"p_best={self.p_best:.4g}  p0={self.p0:.4g}",
            f"n_d approx={fmt(self.nd_approx)}  alias={fmt(self.nd_alias)}  "
            f"total={fmt(self.nd_total)}  verdict={self.feasible}",
        ]
        g = self.guarantee
        if self.nd_total is not None:
            lines.append(f"guarantee: all relative errors <= {g['error']:.3g} "
                         f"w.p. >= {g['confidence']:.3g}")
        if self.acquisition_seconds is not None:
            lines.append(f"acquisition time >= {self.acquisition_seconds:.1f} s")
        return "\n".join(lines)


def alias_side(cfg: BoundsConfig, tables: Optional[AliasTables] = None):
    """Global (c2, p0, nd_alias) for a config."""
    if tables is None:
        tables = alias_tables(cfg.amplitude(), cfg.grid)
    p0 = p0_global(tables, cfg.epsilon)
    if cfg.epsilon == 0:
        return math.inf, 0.0, 1
    c2m = c2_map(tables, cfg.epsilon, alias_target(cfg.r, cfg.p2))
    c2 = c2_global(c2m, tables.valid)
    return c2, p0, nd_from_c2(c2, cfg.r, cfg.P2)


def plan(cfg: BoundsConfig) -> BoundsReport:
    """Both bounds, their composition and the implied acquisition time."""
    cfg.validate()
    eps, r = cfg.epsilon, cfg.r
    c1v = None if eps == 0 else c1(eps, r, cfg.p1, cfg.bias_norm, cfg.strict)
    nd_a = nd_min_approx(eps, r, cfg.p1, cfg.P1, cfg.bias_norm, cfg.strict)
    c2v, p0, nd_b = alias_side(cfg)
    if nd_a is None:
        verdict = "NR-approx"
    elif nd_b is None:
        verdict = "NR-alias"
    else:
        verdict = "ok"
    total = max(nd_a, nd_b) if verdict == "ok" else None
    secs = None
    if cfg.seconds_per_frame is not None and total is not None:
        secs = r * r * total * cfg.seconds_per_frame
    caveats = ["bias variation across target positions is assumed negligible "
               "in the aliasing bound"]
    if not cfg.strict:
        caveats.append("cubic remainder of the approximation bound neglected")
    if cfg.psf != "dirac":
        caveats.append("Gaussian PSF width is a standard deviation in HR pixels")
    return BoundsReport(
        config=cfg.echo(), p_best=p_best(eps, r), c1=c1v,
        c2=None if (c2v is None or (isinstance(c2v, float) and math.isnan(c2v))) else c2v,
        p0=p0, nd_approx=nd_a, nd_alias=nd_b, nd_total=total, feasible=verdict,
        guarantee={"error": cfg.p1 + cfg.p2, "confidence": cfg.P2 - (1 - cfg.P1)},
        acquisition_seconds=secs, caveats=caveats,
    )


def nd_map(cfg: BoundsConfig) -> np.ndarray:
    """Per-frequency minimal frame counts for the aliasing bound (NaN = NR/masked)."""
    cfg.validate()
    tables = alias_tables(cfg.amplitude(), cfg.grid)
    if cfg.epsilon == 0:
        out = np.ones(tables.valid.shape)
        out[~tables.valid] = np.nan
        return out
    c2m = c2_map(tables, cfg.epsilon, alias_target(cfg.r, cfg.p2))
    return nd_map_from_c2(c2m, cfg.r, cfg.P2)


def alias_exceedance_bound(c2: np.ndarray, r: int, nd: int) -> np.ndarray:
    """Upper bound on ``P(|B/Z~| > p)`` implied at ``nd`` frames (1 where NR)."""
    with np.errstate(invalid="ignore"):
        if r == 2:
            tail = np.clip(2.0 * np.exp(-c2**2 * nd), 0, 1)
            guaranteed = (1.0 - tail) ** 3
        else:
            tail = np.clip(4.0 * np.exp(-c2**2 * nd), 0, 1)
            guaranteed = (1.0 - tail) ** (r * r - 1)
    out = 1.0 - guaranteed
    return np.where(np.isnan(c2), 1.0, out)


# ---------------------------------------------------------------------------
# SNR law

SNR_SLOPE_DB_PER_DECADE = 10.0


def snr_lower_bound_slope() -> float:
    return SNR_SLOPE_DB_PER_DECADE


def snr_offset_fit(nds, snr_db) -> float:
    """Largest ``K`` with ``SNR(n_d) >= 10 log10 n_d + K`` on the given (mean) SNRs."""
    nds = np.asarray(nds, dtype=float)
    snr = np.asarray(snr_db, dtype=float)
    return float(np.min(snr - SNR_SLOPE_DB_PER_DECADE * np.log10(nds)))


# ---------------------------------------------------------------------------
# Table-1 style grids

TABLE_RS = tuple(range(2, 9))
TABLE_EPS = (0.01, 0.001, 0.0001)


def table1(psf: str = "dirac", p: float = 0.05, P: float = 0.95, eta: float = 0.0,
           N: int = 32, rs=TABLE_RS, epsilons=TABLE_EPS) -> list[dict]:
    rows = []
    for r in rs:
        grid = FrequencyGrid.validated(N, r)
        amp = power_law_amplitude(grid.M, eta) * np.abs(Psf.parse(psf, grid.M).transfer)
        tables = alias_tables(amp, grid)
        for eps in epsilons:
            cfg = BoundsConfig(r=r, epsilon=eps, p1=p, P1=P, p2=p, P2=P, eta=eta, psf=psf, N=N)
            nd_a = None
            if eps < 1.0 / (math.pi * r):
                nd_a = nd_min_approx(eps, r, p, P)
            c2v, p0, nd_b = alias_side(cfg, tables)
            rows.append({"r": r, "epsilon": eps, "psf": psf, "nd_approx": nd_a,
                         "nd_alias": nd_b, "p0": p0,
                         "c2": None if math.isnan(c2v) else c2v})
    return rows
