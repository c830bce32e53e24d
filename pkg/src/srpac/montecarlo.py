"""Seeded Monte-Carlo validation of the bounds and statistics of the G coefficients.

Trial ``t`` of an experiment draws its position errors from the keyed stream
``(seed, t, d0, d1, j)`` (see :mod:`srpac.rng`), so a trial's outcome does not
depend on which worker ran it. Per-trial outputs are gathered in trial order
before any reduction.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import integrate, ndimage, stats

from . import rng
from .acquisition import PositioningModel, mean_frames, position_errors, targets
from .bounds import (BoundsConfig, alias_exceedance_bound, alias_tables, alias_target, c2_map,
                     p0_map, plan, snr_offset_fit)
from .fusion import gain_maps, interlace
from .images import write_heatmap
from .scenes import HrScene, Psf, apply_blur, load_scene, synth_power_law
from .spectral import DomainError, FrequencyGrid, alias_index_maps, shift_phase_1d

QUANTITIES = ("alias", "approx", "total")


@dataclass(frozen=True)
class McExperiment:
    """A replayable Monte-Carlo run.

    ``scene`` is ``"powerlaw"`` (synthesized at side ``r*N`` from ``eta`` and
    ``scene_seed``) or the path of an 8-bit grayscale image.
    """

    scene: str = "powerlaw"
    eta: float = 0.0
    scene_seed: int = 0
    N: int = 32
    psf: str = "dirac"
    r: int = 2
    epsilon: float = 0.01
    bias: tuple = (0.0, 0.0)
    law: str = "uniform"
    sigma: Optional[float] = None
    n_d: int = 1
    trials: int = 100
    seed: int = 0
    thresholds: tuple = (0.1,)
    noise_sigma: float = 0.0
    keep_maps: bool = False

    def validate(self) -> "McExperiment":
        if self.trials < 1:
            raise DomainError("trials must be >= 1")
        if self.n_d < 1:
            raise DomainError("n_d must be >= 1")
        if int(self.r) != self.r or self.r < 2:
            raise DomainError(f"r must be an integer >= 2, got {self.r}")
        if any(p < 0 for p in self.thresholds):
            raise DomainError("thresholds must be >= 0")
        if self.noise_sigma < 0:
            raise DomainError("noise_sigma must be >= 0")
        self.positioning()
        return self

    def positioning(self) -> PositioningModel:
        return PositioningModel(self.epsilon, self.law, self.sigma, tuple(self.bias), self.seed)

    def build_scene(self) -> HrScene:
        if self.scene == "powerlaw":
            return synth_power_law(self.r * self.N, self.eta, self.scene_seed)
        return load_scene(self.scene)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bias"] = list(self.bias)
        d["thresholds"] = list(self.thresholds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "McExperiment":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise DomainError(f"unknown experiment fields: {sorted(unknown)}")
        d = dict(d)
        for k in ("bias", "thresholds"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass(eq=False)
class McResult:
    """Per-trial scalars, per-frequency exceedance counts and optional per-trial maps."""

    experiment: McExperiment
    valid: np.ndarray
    max_rel_error: np.ndarray
    max_alias: np.ndarray
    max_approx: np.ndarray
    hf_snr: np.ndarray
    counts: dict
    maps: Optional[dict] = None

    @property
    def trials(self) -> int:
        return len(self.hf_snr)

    def confidence(self, bound: float) -> tuple[float, float]:
        """Fraction of trials whose max relative error is <= ``bound``, with its binomial std error."""
        p = float(np.mean(self.max_rel_error <= bound))
        return p, binomial_stderr(p, self.trials)

    def aggregates(self) -> dict:
        snr = self.hf_snr[np.isfinite(self.hf_snr)]
        return {
            "experiment": self.experiment.to_dict(),
            "trials": self.trials,
            "max_rel_error": {"mean": float(np.mean(self.max_rel_error)),
                              "max": float(np.max(self.max_rel_error))},
            "hf_snr_db": {"mean": float(np.mean(snr)) if snr.size else None,
                          "std": float(np.std(snr)) if snr.size else None},
        }

    def fingerprint(self) -> str:
        """Hex digest of every array in the result (replay comparisons)."""
        import hashlib

        h = hashlib.sha256()
        for a in (self.max_rel_error, self.max_alias, self.max_approx, self.hf_snr):
            h.update(np.ascontiguousarray(a).tobytes())
        for q in sorted(self.counts):
            for p in sorted(self.counts[q]):
                h.update(self.counts[q][p].tobytes())
        return h.hexdigest()


def binomial_stderr(p: float, n: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / n)


def _trial(exp: McExperiment, z: HrScene, t: int, valid: np.ndarray, hf: np.ndarray):
    r, n_d = exp.r, exp.n_d
    M = z.side
    model = exp.positioning()
    b = position_errors(model, r, n_d, trial=t)
    realized = targets(r)[:, None, :] + b
    means = mean_frames(z.spectrum, realized, r)
    if exp.noise_sigma > 0:
        # the mean of n_d frames carries sigma / sqrt(n_d) white noise
        g = rng.generator(exp.seed, t, rng.STREAM_NOISE)
        means = means + exp.noise_sigma / math.sqrt(n_d) * g.standard_normal(means.shape)
    xs = np.fft.fft2(interlace(means[:, None], r))
    zs = z.spectrum
    diff = xs - zs
    err_hf = float(np.sum(np.abs(diff[hf]) ** 2))
    snr = math.inf if err_hf == 0 else 10 * math.log10(float(np.sum(np.abs(zs[hf]) ** 2)) / err_hf)

    gg = gain_maps(realized, r, M, offsets=[(0, 0)])[0, 0]
    az = np.abs(zs[valid])
    rel = np.abs(diff[valid]) / az
    alias = np.abs(xs[valid] - zs[valid] * gg[valid]) / az
    approx = np.abs(gg[valid] - 1.0)
    return rel, alias, approx, snr


def run(exp: McExperiment, threads: int = 1, scene: Optional[HrScene] = None) -> McResult:
    """Run all trials; results are identical for any ``threads``."""
    exp.validate()
    base = scene if scene is not None else exp.build_scene()
    if base.side % exp.r:
        raise DomainError(f"scene side {base.side} is not a multiple of r={exp.r}")
    z = apply_blur(base, Psf.parse(exp.psf, base.side))
    grid = FrequencyGrid(base.side // exp.r, exp.r)
    mag = np.abs(z.spectrum)
    valid = ~grid.excluded_mask() & (mag >= 1e-9 * mag.max())
    hf = grid.hf_mask()

    def work(t):
        return _trial(exp, z, t, valid, hf)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outs = list(pool.map(work, range(exp.trials)))
    else:
        outs = [work(t) for t in range(exp.trials)]

    counts = {q: {p: np.zeros(valid.shape, np.int64) for p in exp.thresholds} for q in QUANTITIES}
    maps = {q: np.full((exp.trials,) + valid.shape, np.nan, np.float32) for q in QUANTITIES} \
        if exp.keep_maps else None
    mx = {q: np.empty(exp.trials) for q in QUANTITIES}
    snr = np.empty(exp.trials)
    for t, (rel, alias, approx, s) in enumerate(outs):
        for q, v in zip(("total", "alias", "approx"), (rel, alias, approx)):
            mx[q][t] = v.max() if v.size else 0.0
            for p in exp.thresholds:
                counts[q][p][valid] += (v >= p) & (v > 0)
            if maps is not None:
                maps[q][t][valid] = v
        snr[t] = s
    return McResult(exp, valid, mx["total"], mx["alias"], mx["approx"], snr, counts, maps)


def exceedance_map(result: McResult, p: float, quantity: str = "alias") -> tuple[np.ndarray, np.ndarray]:
    """Empirical ``P(error >= p)`` per frequency (NaN off the valid set) and its std error.

    Zero errors never count as exceeding, so ``p = 0`` flags exactly the
    frequencies where some error occurred.
    """
    if quantity not in QUANTITIES:
        raise DomainError(f"quantity must be one of {QUANTITIES}")
    T = result.trials
    if p in result.counts[quantity]:
        c = result.counts[quantity][p].astype(float)
    elif result.maps is not None:
        m = result.maps[quantity]
        c = np.sum((m >= p) & (m > 0), axis=0).astype(float)
    else:
        raise DomainError(f"threshold {p} was not recorded; rerun with it in thresholds")
    prob = np.where(result.valid, c / T, np.nan)
    se = np.sqrt(prob * (1 - prob) / T)
    return prob, se


def save_map(stem, freq_map: np.ndarray, vmin=None, vmax=None) -> list[Path]:
    return write_heatmap(stem, freq_map, vmin, vmax)


# ---------------------------------------------------------------------------
# p2 lower bound (analytic p0 floor)

@dataclass(frozen=True, eq=False)
class P2Map:
    p0: np.ndarray
    not_guaranteeable: np.ndarray
    fraction: float
    threshold: float


def p2_lower_bound_map(scene: HrScene, epsilon: float, r: int, threshold: float = 0.1,
                       psf: str = "dirac") -> P2Map:
    """Per-frequency floor on the guaranteeable aliasing error, from the scene spectrum."""
    if scene.side % r:
        raise DomainError(f"scene side {scene.side} is not a multiple of r={r}")
    grid = FrequencyGrid(scene.side // r, r)
    amp = np.abs(scene.spectrum) * np.abs(Psf.parse(psf, grid.M).transfer)
    tables = alias_tables(amp, grid)
    p0 = p0_map(tables, epsilon)
    p0[~tables.valid] = np.nan
    bad = tables.valid & (p0 > threshold)
    return P2Map(p0, bad, float(bad.sum() / tables.valid.sum()), threshold)


# ---------------------------------------------------------------------------
# SNR sweep

@dataclass(frozen=True, eq=False)
class SnrSweep:
    nds: tuple
    snr: np.ndarray          # (len(nds), T) dB
    slope: float             # dB per decade of n_d
    intercept: float
    offset_K: float

    @property
    def mean(self) -> np.ndarray:
        return self.snr.mean(axis=1)

    def gain(self, hi: int = 32, lo: int = 1) -> float:
        i, j = self.nds.index(hi), self.nds.index(lo)
        return float(self.mean[i] - self.mean[j])

    def to_dict(self) -> dict:
        return {"nds": list(self.nds), "mean_db": self.mean.tolist(),
                "std_db": self.snr.std(axis=1).tolist(), "slope_db_per_decade": self.slope,
                "intercept_db": self.intercept, "K_db": self.offset_K}


def snr_sweep(exp: McExperiment, nds, threads: int = 1, scene: Optional[HrScene] = None) -> SnrSweep:
    """HF SNR over trials for each ``n_d``; slope fitted on the per-``n_d`` means."""
    nds = tuple(int(n) for n in nds)
    base = scene if scene is not None else exp.build_scene()
    rows = [run(replace(exp, n_d=n, thresholds=()), threads, base).hf_snr for n in nds]
    snr = np.array(rows)
    if not np.all(np.isfinite(snr)):
        raise DomainError("infinite SNR in sweep (zero positioning error?)")
    fit = stats.linregress(np.log10(nds), snr.mean(axis=1))
    return SnrSweep(nds, snr, float(fit.slope), float(fit.intercept),
                    snr_offset_fit(nds, snr.mean(axis=1)))


# ---------------------------------------------------------------------------
# spatial localization of unreliable frequencies

@dataclass(frozen=True, eq=False)
class UnreliableBand:
    mask: np.ndarray
    image: np.ndarray
    weight_db: float
    mode: str

    @property
    def n_points(self) -> int:
        return int(self.mask.sum())


def _hermitian_closure(mask: np.ndarray) -> np.ndarray:
    flipped = np.roll(mask[::-1, ::-1], 1, axis=(0, 1))
    return mask | flipped


def unreliable_spatial(scene: HrScene, epsilon: float, r: int, n_d: int, p: float = 0.1,
                       prob_threshold: float = 0.1, mode: str = "theory", psf: str = "dirac",
                       trials: int = 100, seed: int = 0, threads: int = 1) -> UnreliableBand:
    """Band of frequencies whose error exceeds ``p`` with probability >= ``prob_threshold``.

    ``theory`` uses the per-frequency Hoeffding tail at ``n_d``; ``mc`` uses the
    empirical aliasing exceedance. The band is inverse-transformed and its
    energy reported relative to the super-resolved (high-frequency) band of Z.
    """
    if mode not in ("theory", "mc"):
        raise DomainError("mode must be 'theory' or 'mc'")
    grid = FrequencyGrid(scene.side // r, r)
    z = apply_blur(scene, Psf.parse(psf, grid.M))
    if mode == "theory":
        tables = alias_tables(np.abs(z.spectrum), grid)
        if epsilon == 0:
            mask = np.zeros(tables.valid.shape, bool)
        else:
            c2 = c2_map(tables, epsilon, alias_target(r, p))
            tail = alias_exceedance_bound(c2, r, n_d)
            mask = tables.valid & (tail >= prob_threshold)
    else:
        exp = McExperiment(scene="<given>", r=r, N=grid.N, epsilon=epsilon, n_d=n_d,
                           trials=trials, seed=seed, thresholds=(p,))
        res = run(exp, threads, scene=z)
        prob, _ = exceedance_map(res, p, "alias")
        mask = np.nan_to_num(prob) >= prob_threshold
        mask &= res.valid
    mask = _hermitian_closure(mask)
    band = np.where(mask, z.spectrum, 0)
    image = np.fft.ifft2(band).real
    num = float(np.sum(np.abs(band) ** 2))
    den = float(np.sum(np.abs(z.spectrum[grid.hf_mask()]) ** 2))
    weight = -math.inf if num == 0 else 10 * math.log10(num / den)
    return UnreliableBand(mask, image, weight, mode)


def local_variance(pixels: np.ndarray, window: int = 9) -> np.ndarray:
    m = ndimage.uniform_filter(pixels, window, mode="wrap")
    m2 = ndimage.uniform_filter(pixels**2, window, mode="wrap")
    return np.maximum(m2 - m**2, 0.0)


def texture_overlap(band_image: np.ndarray, pixels: np.ndarray, window: int = 9) -> float:
    """Share of the band's top-quartile energy pixels that fall in the top-quartile local-variance pixels."""
    energy = ndimage.uniform_filter(band_image**2, window, mode="wrap")
    var = local_variance(np.asarray(pixels, float), window)
    e_top = energy >= np.quantile(energy, 0.75)
    v_top = var >= np.quantile(var, 0.75)
    return float(np.sum(e_top & v_top) / max(1, np.sum(e_top)))


# ---------------------------------------------------------------------------
# statistics of the G coefficients

def characteristic(q: np.ndarray, model: PositioningModel, r: int, d=(0, 0)) -> np.ndarray:
    """``E[exp(-i q.b)]`` for the error law at target ``d``; ``q`` has shape ``(..., 2)``."""
    q = np.asarray(q, dtype=float)
    bias = model.bias_for(d)
    half = model.eps_r(r) - np.abs(bias)
    out = np.exp(-1j * q @ bias)
    for ax in range(2):
        qa = q[..., ax]
        h = half[ax]
        if h == 0:
            continue
        if model.law == "uniform":
            out = out * np.sinc(qa * h / np.pi)
        else:
            s = model.sigma
            mass = stats.norm.cdf(h / s) - stats.norm.cdf(-h / s)
            vals = [integrate.quad(lambda x, w=w: math.cos(w * x) * stats.norm.pdf(x / s) / s,
                                   -h, h)[0] / mass for w in np.ravel(qa)]
            out = out * np.reshape(vals, np.shape(qa))
    return out


def g_at(realized: np.ndarray, r: int, M: int, kps: np.ndarray) -> np.ndarray:
    """``G_b(k')`` for a list of HR frequencies; returns ``(len(kps), r, r)``."""
    n_d = realized.shape[1]
    tg = np.repeat(targets(r), n_d, axis=0).astype(float)
    real = realized.reshape(-1, 2)
    N = M // r
    h = M // 2
    out = np.empty((len(kps), r, r), dtype=complex)
    for i, kp in enumerate(kps):
        back = np.exp(2j * np.pi * (tg @ np.asarray(kp, float)) / M)
        for b0 in range(r):
            k0 = (kp[0] + b0 * N + h) % M - h
            f0 = shift_phase_1d(np.array([k0]), real[:, 0], M)[:, 0]
            for b1 in range(r):
                k1 = (kp[1] + b1 * N + h) % M - h
                f1 = shift_phase_1d(np.array([k1]), real[:, 1], M)[:, 0]
                out[i, b0, b1] = np.mean(back * f0 * f1)
    return out


@dataclass(frozen=True, eq=False)
class GStatistics:
    """Empirical and predicted moments of ``G_b`` at sampled frequencies.

    Arrays are indexed ``[k', b]`` with ``b`` flattened over the ``r*r`` offsets
    (``b = 0`` is gamma). Standard errors are those of the sample means.
    """

    kps: np.ndarray
    mean: np.ndarray
    mean_se: np.ndarray
    mean_target: np.ndarray
    second: np.ndarray
    second_se: np.ndarray
    second_target: np.ndarray
    cross: np.ndarray          # (k', b1, b2) E[G_b1 conj(G_b2)], b1 != b2 entries meaningful
    cross_se: np.ndarray
    trials: int

    def z_scores(self) -> dict:
        with np.errstate(divide="ignore", invalid="ignore"):
            zm = np.abs(self.mean - self.mean_target) / self.mean_se
            zs = np.abs(self.second - self.second_target) / self.second_se
            off = np.triu(np.ones(self.cross.shape[1:], dtype=bool), 1)
            zc = (np.abs(self.cross) / self.cross_se)[:, off]
        return {"mean": np.nan_to_num(zm), "second": np.nan_to_num(zs),
                "cross": np.nan_to_num(zc)}


def sample_frequencies(grid: FrequencyGrid, count: int, seed: int = 0) -> np.ndarray:
    """Random non-excluded HR frequencies none of whose aliases sits on the Nyquist bin."""
    M, h = grid.M, grid.M // 2
    alias = alias_index_maps(grid)
    clean = ~np.any(alias == -h, axis=0)
    f = grid.hr_freqs()
    ok = f[clean & (f != -h)]
    g = rng.generator(seed, rng.STREAM_SCENE)
    picks = g.choice(len(ok), size=(count, 2))
    return ok[picks]


def g_alpha_statistics(exp: McExperiment, kps: np.ndarray) -> GStatistics:
    """Moments of ``G_b`` over ``exp.trials`` independent acquisitions.

    Targets: ``E[G_b] = delta_b0 chi(q)``, ``E|G_b|^2 = (1 - |chi(q_b)|^2)/(r^2 n_d)``
    for ``b != 0`` (plus ``|chi|^2`` for ``b = 0``), and zero cross-moments.
    Valid for a target-independent bias.
    """
    exp.validate()
    if isinstance(exp.bias, dict):
        raise DomainError("moment targets assume one bias for every target")
    r, n_d, T = exp.r, exp.n_d, exp.trials
    M = r * exp.N
    kps = np.asarray(kps)
    model = exp.positioning()
    samples = np.empty((T, len(kps), r * r), dtype=complex)
    for t in range(T):
        realized = targets(r)[:, None, :] + position_errors(model, r, n_d, trial=t)
        samples[t] = g_at(realized, r, M, kps).reshape(len(kps), -1)

    h = M // 2
    q = np.empty((len(kps), r * r, 2))
    for i, kp in enumerate(kps):
        for b0 in range(r):
            for b1 in range(r):
                kappa = ((kp[0] + b0 * exp.N + h) % M - h, (kp[1] + b1 * exp.N + h) % M - h)
                q[i, b0 * r + b1] = 2 * np.pi * np.array(kappa) / M
    chi = characteristic(q, model, r)
    F = r * r * n_d
    mean_target = np.zeros((len(kps), r * r), dtype=complex)
    mean_target[:, 0] = chi[:, 0]
    second_target = (1 - np.abs(chi) ** 2) / F
    second_target[:, 0] += np.abs(chi[:, 0]) ** 2

    mean = samples.mean(axis=0)
    mean_se = np.sqrt(np.mean(np.abs(samples - mean) ** 2, axis=0) / T)
    sq = np.abs(samples) ** 2
    second = sq.mean(axis=0)
    second_se = sq.std(axis=0) / math.sqrt(T)
    prod = samples[:, :, :, None] * np.conj(samples[:, :, None, :])
    cross = prod.mean(axis=0)
    cross_se = np.sqrt(np.mean(np.abs(prod - cross) ** 2, axis=0) / T)
    return GStatistics(kps, mean, mean_se, mean_target, second, second_se, second_target,
                       cross, cross_se, T)


# ---------------------------------------------------------------------------
# master bound validity

@dataclass(frozen=True)
class ValidityCell:
    r: int
    epsilon: float
    p: float
    P: float
    n_d: Optional[int]
    verdict: str
    stated: float
    empirical: Optional[float]
    stderr: Optional[float]
    passed: Optional[bool]

    def to_dict(self) -> dict:
        return asdict(self)


def check_validity(r: int, epsilon: float, p: float, P: float, trials: int = 200, seed: int = 0,
                   eta: float = 0.0, N: int = 32, scene_seed: int = 0, nd_scale: float = 1.0,
                   threads: int = 1) -> ValidityCell:
    """Run MC at the planned ``n_d`` (optionally scaled) on a power-law scene.

    The stated confidence is ``P - (1 - P)`` for the error ``2 p`` (both budgets
    set to ``p``, ``P``). A cell passes when the empirical confidence is at
    least the stated value minus three binomial standard errors.
    """
    cfg = BoundsConfig(r=r, epsilon=epsilon, p1=p, P1=P, p2=p, P2=P, eta=eta, N=N)
    rep = plan(cfg)
    stated = rep.guarantee["confidence"]
    if rep.nd_total is None:
        return ValidityCell(r, epsilon, p, P, None, rep.feasible, stated, None, None, None)
    nd = max(1, int(round(rep.nd_total * nd_scale)))
    exp = McExperiment(scene="powerlaw", eta=eta, scene_seed=scene_seed, N=N, r=r,
                       epsilon=epsilon, n_d=nd, trials=trials, seed=seed, thresholds=())
    res = run(exp, threads)
    emp, se = res.confidence(rep.guarantee["error"])
    sigma = binomial_stderr(stated, trials)
    return ValidityCell(r, epsilon, p, P, nd, rep.feasible, stated, emp, se,
                        bool(emp >= stated - 3 * sigma))


def save_result(result: McResult, directory) -> dict:
    """Aggregates as JSON, exceedance maps as CSV and PGM/PNG."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {}
    agg = result.aggregates()
    agg["fingerprint"] = result.fingerprint()
    (d / "aggregates.json").write_text(json.dumps(agg, indent=1))
    paths["aggregates"] = str(d / "aggregates.json")
    M = result.valid.shape[0]
    f = np.fft.fftfreq(M, 1.0 / M).astype(int)
    order = np.argsort(f)
    for p in result.experiment.thresholds:
        prob, se = exceedance_map(result, p, "alias")
        stem = d / f"exceedance_alias_p{p:g}"
        save_map(stem, prob, 0.0, 1.0)
        csv_path = d / f"{stem.name}.csv"
        with csv_path.open("w") as fh:
            fh.write("k0,k1,probability,stderr\n")
            for i in order:
                for j in order:
                    if result.valid[i, j]:
                        fh.write(f"{f[i]},{f[j]},{prob[i, j]!r},{se[i, j]!r}\n")
        paths[f"exceedance_p{p:g}"] = str(csv_path)
    return paths
