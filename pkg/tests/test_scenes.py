import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from srpac.images import ImageInputError, write_gray8
from srpac.scenes import (HrScene, Psf, apply_blur, load_scene, power_law_amplitude,
                          radial_average, save_scene, synth_power_law)
from srpac.spectral import DomainError


@pytest.mark.parametrize("eta", [-0.2, 0.0, 0.2])
def test_power_law_slope(eta):
    s = synth_power_law(256, eta, seed=3)
    rad, power = radial_average(np.abs(s.spectrum) ** 2)
    sel = (rad >= 4) & (rad <= 100)
    slope = np.polyfit(np.log(rad[sel]), np.log(power[sel]), 1)[0]
    assert slope == pytest.approx(-2 * (1 + eta), abs=0.05)


def test_power_law_amplitude_exact_and_dc_rule():
    s = synth_power_law(64, 0.0, seed=1)
    amp = power_law_amplitude(64, 0.0)
    assert np.allclose(np.abs(s.spectrum), amp, rtol=1e-10)
    assert amp[0, 0] == amp[0, 1] == 1.0


def test_scene_is_real_and_hermitian():
    s = synth_power_law(64, 0.1, seed=5)
    back = np.fft.ifft2(s.spectrum)
    assert np.abs(back.imag).max() < 1e-9 * np.ptp(s.pixels)


def test_seed_determinism():
    a = synth_power_law(32, 0.0, seed=9)
    b = synth_power_law(32, 0.0, seed=9)
    c = synth_power_law(32, 0.0, seed=10)
    assert np.array_equal(a.pixels, b.pixels)
    assert not np.array_equal(a.pixels, c.pixels)


def test_eta_range():
    with pytest.raises(DomainError):
        synth_power_law(32, 0.7)


def test_scene_arrays_read_only():
    s = synth_power_law(32, 0.0)
    with pytest.raises(ValueError):
        s.pixels[0, 0] = 1


def test_dirac_is_identity():
    s = synth_power_law(32, 0.0)
    assert apply_blur(s, Psf.dirac(32)) is s


def test_gaussian_kernel_against_direct_convolution():
    side, w = 32, 0.5
    psf = Psf.gaussian(side, w)
    k = psf.kernel()
    assert k.sum() == pytest.approx(1.0, abs=1e-9)
    # the continuous Gaussian blurs a band-limited impulse; compare with a
    # direct circular convolution of a random image against the same kernel
    img = np.random.default_rng(0).standard_normal((side, side))
    blurred = apply_blur(HrScene.from_pixels(img), psf).pixels
    direct = np.zeros_like(img)
    for dy in range(side):
        for dx in range(side):
            direct += k[dy, dx] * np.roll(img, (dy, dx), axis=(0, 1))
    assert np.allclose(blurred, direct, atol=1e-10)


def test_gaussian_transfer_is_continuous_form():
    psf = Psf.gaussian(64, 0.5)
    q = 2 * np.pi * 10 / 64
    assert psf.transfer[10, 0].real == pytest.approx(np.exp(-0.25 * q * q / 2))
    assert np.all(psf.transfer.real > 0)


def test_wide_gaussian_collapses_to_dc():
    s = synth_power_law(32, 0.0, seed=2)
    z = apply_blur(s, Psf.gaussian(32, 20.0))
    e = np.abs(z.spectrum) ** 2
    assert e[0, 0] / e.sum() > 0.999


@settings(max_examples=20, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_blur_is_linear(a, b):
    x = synth_power_law(32, 0.0, seed=1)
    y = synth_power_law(32, 0.0, seed=2)
    psf = Psf.gaussian(32, 0.7)
    lhs = apply_blur(HrScene.from_pixels(a * x.pixels + b * y.pixels), psf).pixels
    rhs = a * apply_blur(x, psf).pixels + b * apply_blur(y, psf).pixels
    assert np.allclose(lhs, rhs, atol=1e-12 * (1 + abs(a) + abs(b)) * 100)


def test_psf_parse():
    assert Psf.parse("dirac", 16).kind == "dirac"
    assert Psf.parse("gaussian:0.5", 16).width == 0.5
    for bad in ("box:1", "gaussian:", "gaussian:-1"):
        with pytest.raises(DomainError):
            Psf.parse(bad, 16)


def test_size_mismatch():
    with pytest.raises(DomainError):
        apply_blur(synth_power_law(32, 0.0), Psf.dirac(64))


def test_load_and_save(tmp_path, data_dir):
    s = load_scene(data_dir / "camera_256.pgm")
    assert s.side == 256 and s.pixels.max() <= 255
    save_scene(s, tmp_path / "c.png")
    assert np.array_equal(load_scene(tmp_path / "c.png").pixels, s.pixels)
    write_gray8(tmp_path / "rect.pgm", np.zeros((32, 64)))
    with pytest.raises(ImageInputError):
        load_scene(tmp_path / "rect.pgm")
    write_gray8(tmp_path / "odd.pgm", np.zeros((36, 36)))
    with pytest.raises(ImageInputError):
        load_scene(tmp_path / "odd.pgm")
