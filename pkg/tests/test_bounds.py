import itertools
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from srpac.bounds import (BoundsConfig, alias_exceedance_bound, alias_log_term, alias_tables,
                          c1, c2_map, nd_from_c2, nd_map, nd_min_approx, p0_map, p_best, plan,
                          power_law_coefficients, table1)
from srpac.scenes import power_law_amplitude
from srpac.spectral import DomainError, FrequencyGrid, alias_decompose, alias_set


def c1_oracle(eps, r, p):
    return (p - 2 * math.pi**2 * eps**2 * r**2) / (2 * math.sqrt(2) * math.pi * eps)


def test_c1_against_closed_form():
    assert c1(0.01, 2, 0.05) == pytest.approx(c1_oracle(0.01, 2, 0.05), rel=1e-14)
    assert c1(0.01, 2, 0.05, strict=True) < c1(0.01, 2, 0.05)
    assert c1(0.01, 2, 0.05, bias_norm=0.001) < c1(0.01, 2, 0.05)


def test_nd_formula_by_hand():
    c = c1_oracle(0.01, 2, 0.1)
    assert nd_min_approx(0.01, 2, 0.1, 0.9) == math.ceil(8 / c**2 * math.log(4 / 0.1))


def test_eps_zero_needs_one_frame():
    assert nd_min_approx(0.0, 3, 0.05, 0.95) == 1
    rep = plan(BoundsConfig(r=2, epsilon=0.0))
    assert rep.nd_total == 1 and rep.feasible == "ok"


def test_unreachable_is_not_an_error():
    assert nd_min_approx(0.01, 6, 0.05, 0.95) is None
    assert p_best(0.01, 6) > 0.05


@settings(max_examples=40)
@given(eps=st.floats(1e-4, 0.01), r=st.integers(2, 5), p=st.floats(0.02, 0.2),
       P=st.floats(0.5, 0.99))
def test_nd_monotone_in_eps_and_p(eps, r, p, P):
    a = nd_min_approx(eps, r, p, P)
    b = nd_min_approx(eps * 1.5, r, p, P)
    c = nd_min_approx(eps, r, p * 1.5, P)
    assume(a is not None)
    assert b is None or b >= a
    assert c is not None and c <= a


def test_log_terms():
    assert alias_log_term(2, 0.95) == pytest.approx(math.log(2 / (1 - 0.95 ** (1 / 3))))
    assert alias_log_term(4, 0.9) == pytest.approx(math.log(4 / (1 - 0.9 ** (1 / 15))))


def test_p0_map_against_per_frequency_loop():
    grid = FrequencyGrid(32, 3)
    amp = power_law_amplitude(grid.M, 0.1)
    tables = alias_tables(amp, grid)
    eps = 0.002
    er = eps * 3
    pm = p0_map(tables, eps)
    M = grid.M
    for kp in [(5, 7), (-40, 33), (47, -1), (0, 20)]:
        k, gamma = alias_decompose(kp, grid)
        zg = amp[kp[0] % M, kp[1] % M]
        total = 0.0
        for a in alias_set(k, grid):
            if a == gamma:
                continue
            ka = (k[0] + a[0] * 32, k[1] + a[1] * 32)
            ql1 = 2 * math.pi * (abs(ka[0]) + abs(ka[1])) / M
            f = (ql1 * er) ** 2 / 2 + (ql1 * er) ** 3 / 6
            total += amp[ka[0] % M, ka[1] % M] / zg * f
        assert pm[kp[0] % M, kp[1] % M] == pytest.approx(math.sqrt(2) * total, rel=1e-12)


def test_c2_map_masks_nyquist_and_nr():
    grid = FrequencyGrid(32, 2)
    tables = alias_tables(power_law_amplitude(64, 0.0), grid)
    c = c2_map(tables, 0.01, 0.05)
    assert np.all(np.isnan(c[grid.excluded_mask()]))
    assert np.nanmin(c) > 0


def test_exceedance_bound_consistent_with_nd():
    for r, P in ((2, 0.95), (3, 0.9)):
        c2 = np.array([0.7])
        nd = nd_from_c2(0.7, r, P)
        assert alias_exceedance_bound(c2, r, nd)[0] <= 1 - P + 1e-12
        assert alias_exceedance_bound(c2, r, max(1, nd - 1))[0] > 1 - P - 1e-12
    assert alias_exceedance_bound(np.array([np.nan]), 2, 10)[0] == 1.0


def test_power_law_sum_by_hand_r3():
    # F for r = 3 with v = 1 - 2/(rN), summed term by term
    N = 128
    v = 1 - 2 / (3 * N)
    total = 0.0
    for b in itertools.product(range(3), repeat=2):
        if b == (0, 0):
            continue
        u = (v - 2 * b[0] / 3, v - 2 * b[1] / 3)
        total += (abs(u[0]) + abs(u[1])) ** 2 / math.hypot(*u)
    assert power_law_coefficients(3, N).b0 == pytest.approx(total / 8, rel=1e-12)


def test_config_validation():
    with pytest.raises(DomainError):
        BoundsConfig(r=2, epsilon=0.2).validate()
    with pytest.raises(DomainError):
        BoundsConfig(r=2, epsilon=0.01, P2=1.0).validate()
    with pytest.raises(DomainError):
        BoundsConfig(r=2, epsilon=0.01, bias_norm=1.0).validate()


def test_report_json_and_time():
    rep = plan(BoundsConfig(r=2, epsilon=0.01, seconds_per_frame=0.1))
    d = rep.to_dict()
    assert d["nd_total"] == 157
    assert rep.acquisition_seconds == pytest.approx(4 * 157 * 0.1)
    assert d["config"]["units"]["epsilon"] == "LR pixels"
    nr = plan(BoundsConfig(r=3, epsilon=0.01)).to_dict()
    assert nr["nd_alias"] == "NR" and nr["feasible"] == "NR-alias"


def test_nd_map_shape_and_mask():
    m = nd_map(BoundsConfig(r=2, epsilon=0.005))
    grid = FrequencyGrid(32, 2)
    assert m.shape == (64, 64)
    assert np.all(np.isnan(m[grid.excluded_mask()]))
    assert np.nanmax(m) == plan(BoundsConfig(r=2, epsilon=0.005)).nd_alias


def test_table1_eps_limit_column():
    rows = table1(rs=(2, 8), epsilons=(0.0001,))
    assert [r["nd_approx"] for r in rows] == [1, 1]
