import math

import numpy as np
import pytest

from srpac.acquisition import PositioningModel
from srpac.montecarlo import (McExperiment, characteristic, check_validity, exceedance_map,
                              g_alpha_statistics, p2_lower_bound_map, run, sample_frequencies,
                              save_result, snr_sweep, texture_overlap, unreliable_spatial)
from srpac.scenes import HrScene, synth_power_law
from srpac.spectral import DomainError, FrequencyGrid


def test_eps_zero_all_errors_vanish():
    res = run(McExperiment(epsilon=0.0, trials=3, thresholds=(0.0, 0.1)))
    assert res.max_rel_error.max() < 1e-9
    prob, _ = exceedance_map(res, 0.1)
    assert np.nansum(prob) == 0


def test_determinism_and_thread_independence():
    exp = McExperiment(epsilon=0.02, n_d=3, trials=6, seed=5, thresholds=(0.05,))
    a, b, c = run(exp), run(exp), run(exp, threads=3)
    assert a.fingerprint() == b.fingerprint() == c.fingerprint()
    other = run(McExperiment(epsilon=0.02, n_d=3, trials=6, seed=6, thresholds=(0.05,)))
    assert other.fingerprint() != a.fingerprint()


def test_exceedance_p_zero_marks_every_error():
    res = run(McExperiment(epsilon=0.02, n_d=2, trials=4, thresholds=(0.0,)))
    prob, se = exceedance_map(res, 0.0, "total")
    assert np.nanmin(prob) == 1.0
    assert np.all((prob[res.valid] >= 0) & (prob[res.valid] <= 1))
    assert np.nanmax(se) <= 0.5 / math.sqrt(4) + 1e-12


def test_exceedance_requires_recorded_threshold():
    res = run(McExperiment(trials=2, thresholds=(0.1,)))
    with pytest.raises(DomainError):
        exceedance_map(res, 0.2)
    kept = run(McExperiment(trials=2, thresholds=(0.1,), keep_maps=True))
    a, _ = exceedance_map(kept, 0.1)
    b, _ = exceedance_map(kept, 0.2)
    assert np.all(np.nan_to_num(b) <= np.nan_to_num(a))


def test_validation():
    with pytest.raises(DomainError):
        McExperiment(trials=0).validate()
    with pytest.raises(DomainError):
        McExperiment.from_dict({"trials": 3, "bogus": 1})
    exp = McExperiment(r=3, epsilon=0.01, thresholds=(0.1, 0.2))
    assert McExperiment.from_dict(exp.to_dict()) == exp


def test_monotone_hf_error_in_nd():
    base = synth_power_law(64, 0.0, seed=1)
    errs = []
    for nd in (1, 2, 4, 8, 16, 32, 64):
        res = run(McExperiment(epsilon=0.05, n_d=nd, trials=100, thresholds=()), scene=base)
        errs.append(np.mean(10 ** (-res.hf_snr / 10)))
    inversions = sum(b > a for a, b in zip(errs, errs[1:]))
    assert inversions <= 1


def test_characteristic_uniform_is_sinc_product():
    m = PositioningModel(0.05)
    q = np.array([[1.0, 2.0]])
    eps_r = 0.1
    expect = math.sin(eps_r) / eps_r * math.sin(2 * eps_r) / (2 * eps_r)
    assert characteristic(q, m, 2)[0] == pytest.approx(expect)


def test_characteristic_truncated_gaussian_matches_samples():
    from srpac.acquisition import position_errors
    m = PositioningModel(0.1, law="truncated-gaussian", sigma=0.1, seed=2)
    b = position_errors(m, 2, 50_000).reshape(-1, 2)
    q = np.array([3.0, 0.0])
    emp = np.mean(np.exp(-1j * b @ q))
    assert abs(emp - characteristic(q, m, 2)) < 4 * math.sqrt(0.5 / len(b))


def test_g_statistics_small_run():
    exp = McExperiment(r=2, N=32, epsilon=0.1, n_d=4, trials=200, seed=3)
    kps = sample_frequencies(FrequencyGrid(32, 2), 3, seed=1)
    st = g_alpha_statistics(exp, kps)
    z = st.z_scores()
    assert st.mean.shape == (3, 4)
    assert z["mean"].max() < 5 and z["second"].max() < 5 and z["cross"].max() < 5


def test_sample_frequencies_avoid_nyquist_aliases():
    grid = FrequencyGrid(32, 3)
    kps = sample_frequencies(grid, 50)
    for kp in kps:
        for c in kp:
            for b in range(3):
                assert (c + b * 32 + 48) % 96 - 48 != -48


def test_p2_map_eps_zero_and_powerlaw_corners():
    s = synth_power_law(64, 0.0, seed=0)
    assert p2_lower_bound_map(s, 0.0, 2).fraction == 0.0
    probe = p2_lower_bound_map(s, 0.04, 2)
    pm = p2_lower_bound_map(s, 0.04, 2, threshold=0.95 * np.nanmax(probe.p0))
    f = np.abs(np.fft.fftfreq(64, 1 / 64))
    radius = np.maximum(f[:, None], f[None, :])
    assert pm.not_guaranteeable.any()
    # the worst frequencies sit on the outer border of the HR domain
    assert radius[pm.not_guaranteeable].min() >= 0.9 * 32


def test_unreliable_band_empty_and_hermitian():
    s = synth_power_law(64, 0.0, seed=0)
    empty = unreliable_spatial(s, 0.0, 2, 4)
    assert empty.weight_db == -math.inf and np.all(empty.image == 0)
    band = unreliable_spatial(s, 0.02, 2, 4, p=0.05)
    assert band.n_points > 0
    m = band.mask
    assert np.array_equal(m, np.roll(m[::-1, ::-1], 1, axis=(0, 1)))


def test_unreliable_band_mc_mode_runs():
    s = synth_power_law(64, 0.0, seed=0)
    band = unreliable_spatial(s, 0.02, 2, 4, p=0.05, mode="mc", trials=10)
    assert math.isfinite(band.weight_db)


def test_texture_overlap_detects_localized_texture():
    rng = np.random.default_rng(0)
    px = np.zeros((64, 64))
    px[:, :16] = rng.standard_normal((64, 16)) * 50
    assert texture_overlap(px, px) > 0.9


def test_snr_sweep_shape():
    sw = snr_sweep(McExperiment(epsilon=0.02, trials=4), [1, 4, 16])
    assert sw.snr.shape == (3, 4)
    assert 5 < sw.slope < 15
    assert sw.gain(16, 1) > 0


def test_check_validity_nr_and_pass():
    nr = check_validity(3, 0.01, 0.05, 0.95, trials=5)
    assert nr.passed is None and nr.n_d is None
    ok = check_validity(2, 0.005, 0.1, 0.9, trials=20)
    assert ok.passed and ok.empirical >= ok.stated


def test_save_result(tmp_path):
    res = run(McExperiment(epsilon=0.02, trials=3, thresholds=(0.05,)))
    paths = save_result(res, tmp_path)
    assert (tmp_path / "aggregates.json").exists()
    assert (tmp_path / "exceedance_alias_p0.05.png").exists()
    assert "exceedance_p0.05" in paths
