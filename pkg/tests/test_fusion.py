import numpy as np
import pytest

from srpac.acquisition import AcquisitionStack, PositioningModel, acquire_stack
from srpac.fusion import (StackError, aliased_spectra, alias_term_direct, decompose, fuse,
                          g_coefficient, g_maps, hf_snr)
from srpac.scenes import HrScene, Psf, apply_blur, synth_power_law
from srpac.spectral import DomainError, FrequencyGrid, alias_decompose, alias_set


def _setup(r=2, N=32, eps=0.05, nd=3, seed=0, psf="dirac"):
    s = synth_power_law(r * N, 0.0, seed=seed)
    p = Psf.parse(psf, r * N)
    st = acquire_stack(s, p, r, nd, PositioningModel(eps, seed=seed + 100))
    return s, apply_blur(s, p), st


def test_checkerboard_exact():
    M = 32
    img = np.indices((M, M)).sum(axis=0) % 2 * 1.0
    s = HrScene.from_pixels(img)
    st = acquire_stack(s, Psf.dirac(M), 2, 1, PositioningModel(0.0))
    assert np.allclose(fuse(st).pixels, img, atol=1e-12)


@pytest.mark.parametrize("r", [2, 3])
def test_exact_positions_recover_z(r):
    _, z, st = _setup(r=r, eps=0.0, psf="gaussian:0.5")
    f = fuse(st)
    assert np.abs(f.spectrum - z.spectrum).max() / np.abs(z.spectrum).max() < 1e-10


def test_incomplete_stack_rejected():
    _, _, st = _setup()
    broken = AcquisitionStack(st.frames[:3], st.realized[:3], 2, 3, st.positioning, st.psf)
    with pytest.raises(StackError):
        fuse(broken)


@pytest.mark.parametrize("r", [2, 3])
def test_g_path_equals_pixel_path(r):
    _, z, st = _setup(r=r, eps=0.1, nd=2, seed=4)
    f = fuse(st)
    g = g_maps(st)
    via_g = (aliased_spectra(z.spectrum, r) * g).sum(axis=(0, 1))
    assert np.abs(via_g - f.spectrum).max() <= 1e-9 * np.abs(f.spectrum).max()


def test_g_coefficient_direct_sum_matches_maps():
    r, N = 3, 32
    _, _, st = _setup(r=r, eps=0.08, nd=2, seed=1)
    g = g_maps(st)
    grid = FrequencyGrid(N, r)
    M = grid.M
    for kp in [(7, -3), (40, 12), (-20, -47)]:
        k, gamma = alias_decompose(kp, grid)
        for a in alias_set(k, grid):
            kappa = (k[0] + a[0] * N, k[1] + a[1] * N)
            if any(c == -(M // 2) for c in kappa):
                continue
            b = tuple(((kc - kpc) % M) // N for kc, kpc in zip(kappa, kp))
            assert g_coefficient(a, kp, st) == pytest.approx(g[b][kp[0] % M, kp[1] % M], abs=1e-12)


def test_g_coefficient_exact_positions():
    _, _, st = _setup(eps=0.0)
    grid = FrequencyGrid(32, 2)
    kp = (21, -5)
    k, gamma = alias_decompose(kp, grid)
    for a in alias_set(k, grid):
        expect = 1.0 if a == gamma else 0.0
        assert abs(g_coefficient(a, kp, st) - expect) < 1e-12


def test_g_coefficient_rejects_excluded():
    _, _, st = _setup()
    with pytest.raises(DomainError):
        g_coefficient((0, 0), (-32, 3), st)


def test_decomposition_identity_and_direct_alias_term():
    _, z, st = _setup(eps=0.1, nd=4, seed=2)
    f = fuse(st)
    dec = decompose(f, z, st)
    v = dec.valid
    recon = dec.z_spectrum * dec.g_gamma + dec.b_alias
    assert np.abs(recon - f.spectrum)[v].max() <= 1e-9 * np.abs(f.spectrum).max()
    direct = alias_term_direct(z.spectrum, g_maps(st))
    assert np.abs(direct - dec.b_alias)[v].max() <= 1e-9 * np.abs(z.spectrum).max()


def test_eps_zero_decomposition_trivial():
    _, z, st = _setup(eps=0.0)
    dec = decompose(fuse(st), z, st)
    assert np.abs(dec.g_gamma - 1).max() < 1e-12
    assert np.abs(dec.b_alias).max() < 1e-9 * np.abs(z.spectrum).max()


def test_single_cosine_alias_term_closed_form():
    # one cosine at kappa leaks into every alias frequency of kappa
    r, N = 2, 32
    M = r * N
    k0 = 21
    n = np.arange(M)
    img = np.cos(2 * np.pi * k0 * n / M)[:, None] * np.ones((1, M))
    s = HrScene.from_pixels(img)
    st = acquire_stack(s, Psf.dirac(M), r, 3, PositioningModel(0.1, seed=5))
    dec = decompose(fuse(st), s, st)
    # receiving frequency k' = k0 - N; its alias offset 1 along axis 0 is k0
    kp = k0 - N
    d = np.repeat(st.targets, st.n_d, axis=0)
    b = st.errors.reshape(-1, 2)
    q = 2 * np.pi * k0 / M
    g = np.mean(np.exp(-1j * np.pi * d[:, 0]) * np.exp(-1j * q * b[:, 0]))
    expect = s.spectrum[k0, 0] * g
    assert dec.b_alias[kp % M, 0] == pytest.approx(expect, abs=1e-9 * abs(expect))


def test_undefined_frequencies_masked():
    M = 64
    img = np.cos(2 * np.pi * 3 * np.arange(M) / M)[:, None] * np.ones((1, M))
    s = HrScene.from_pixels(img)
    st = acquire_stack(s, Psf.dirac(M), 2, 1, PositioningModel(0.05))
    dec = decompose(fuse(st), s, st)
    assert dec.valid.sum() == 2
    assert np.isnan(dec.rel_error[5, 5])


def test_size_mismatch():
    _, z, st = _setup()
    with pytest.raises(DomainError):
        decompose(fuse(st), np.zeros((32, 32)), st)


def test_hf_snr_definition():
    _, z, st = _setup(eps=0.0)
    f = fuse(st)
    assert hf_snr(f.spectrum, f.spectrum, "full") == float("inf")
    rng = np.random.default_rng(0)
    pert = rng.standard_normal(z.spectrum.shape)
    pert *= np.sqrt(1e-2 * np.sum(np.abs(z.spectrum) ** 2) / np.sum(pert**2))
    assert hf_snr(z.spectrum + pert, z.spectrum, "full") == pytest.approx(20.0, abs=1e-9)
    with pytest.raises(DomainError):
        hf_snr(f, z, "mid")


def test_csv_and_heatmaps(tmp_path):
    _, z, st = _setup(eps=0.05)
    dec = decompose(fuse(st), z, st)
    path = dec.to_csv(tmp_path / "d.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "k0,k1,abs_g_gamma_minus_1,abs_b_over_z,rel_error"
    assert len(lines) == 1 + 63 * 63
    assert len(dec.heatmaps(tmp_path / "maps")) == 6


def test_noise_variance_reduction_by_averaging():
    M = 64
    s = HrScene.from_pixels(np.full((M, M), 100.0))
    from srpac.acquisition import add_noise
    out = []
    for nd in (1, 16):
        st = add_noise(acquire_stack(s, Psf.dirac(M), 2, nd, PositioningModel(0.0)), 3.0, 7)
        out.append(np.var(fuse(st).pixels - 100.0))
    assert out[0] / out[1] == pytest.approx(16, rel=0.15)
