import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dcebhm.kinetics import (AifParams, KineticParams, TimeGrid, aif_concentration,
                             convolution_term, ctc_model, ctc_model_numeric, log_likelihood,
                             scaled_convolution)

AIF = AifParams()
mp.mp.dps = 40


def exact_convolution(kep, t, aif=AIF):
    """High-precision closed form, with the exact k = m limit."""
    if t <= 0:
        return 0.0
    k, t = mp.mpf(kep), mp.mpf(t)
    total = mp.mpf(0)
    for a, m in zip(aif.amplitudes, aif.rates):
        m = mp.mpf(m)
        if k == m:
            total += a * t * mp.exp(-m * t)
        else:
            total += a * (mp.exp(-m * t) - mp.exp(-k * t)) / (k - m)
    return float(aif.dose * total)


def quad_convolution(kep, t, aif=AIF):
    f = lambda s: aif.dose * (aif.a1 * mp.exp(-aif.m1 * s) + aif.a2 * mp.exp(-aif.m2 * s)) \
        * mp.exp(-kep * (t - s))
    return float(mp.quad(f, [0, t]))


def test_aif_values():
    assert aif_concentration(0.0) == pytest.approx(0.1 * (24.0 + 6.2))
    assert aif_concentration(-1.0) == 0.0
    t = 2.0
    assert aif_concentration(t) == pytest.approx(0.1 * (24 * np.exp(-6.0) + 6.2 * np.exp(-0.032)))


def test_closed_form_matches_mpmath_quadrature():
    for kep, t in [(0.5, 1.0), (2.9, 3.3), (0.01, 7.0), (10.0, 0.2)]:
        assert convolution_term(kep, t) == pytest.approx(quad_convolution(kep, t), rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.sampled_from([3.0, 0.016]), st.floats(-12, -1), st.sampled_from([-1.0, 1.0]),
       st.floats(0.01, 8.0))
def test_continuity_near_singularity(m, log_gap, sign, t):
    kep = m + sign * 10 ** log_gap
    if kep <= 0:
        return
    got = float(convolution_term(kep, t))
    assert got == pytest.approx(exact_convolution(kep, t), rel=1e-9)


def test_exact_singularity_is_limit():
    for m in AIF.rates:
        got = float(convolution_term(m, 2.5))
        assert got == pytest.approx(exact_convolution(m, 2.5), rel=1e-13)


def test_pre_injection_frames_are_zero():
    grid = TimeGrid.regular(10, n_pre=3)
    c = ctc_model(KineticParams(0.3, 0.8, 0.1), grid)
    assert np.all(c[:3] == 0.0)
    assert np.all(c[3:] > 0)


def test_zero_ktrans_leaves_plasma_term():
    grid = TimeGrid.regular(20)
    c = ctc_model(KineticParams(0.0, 0.8, 0.2), grid)
    np.testing.assert_allclose(c, 0.2 * aif_concentration(grid.times))


def test_quadrature_converges_second_order():
    p = KineticParams(0.25, 0.7, 0.05)
    grid = TimeGrid(np.array([0.5, 2.0, 6.0]))
    exact = ctc_model(p, grid)
    errs = [np.max(np.abs(ctc_model_numeric(p, grid, dt=dt) - exact)) for dt in (0.02, 0.01, 0.005)]
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios > 3.5) & (ratios < 4.5))


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 2.0), st.floats(0.02, 5.0), st.floats(0.0, 0.3))
def test_model_linear_in_ktrans_and_vp(ktrans, kep, vp):
    grid = TimeGrid.regular(15)
    base = ctc_model(KineticParams(ktrans, kep, vp), grid)
    scaled = ctc_model(KineticParams(2 * ktrans, kep, 0.0), grid) + ctc_model(KineticParams(0.0, kep, 2 * vp), grid)
    np.testing.assert_allclose(scaled, 2 * base, rtol=1e-12, atol=1e-15)
    assert np.all(base >= 0)


def test_vectorized_kep_broadcasts():
    t = TimeGrid.regular(8).times
    kep = np.array([[0.3], [3.0], [0.016 + 1e-9]])
    out = convolution_term(kep, t)
    for r in range(3):
        np.testing.assert_allclose(out[r], convolution_term(kep[r, 0], t), rtol=1e-14)


def test_parameter_validation():
    with pytest.raises(ValueError):
        KineticParams(-0.1, 0.5, 0.1)
    with pytest.raises(ValueError):
        KineticParams(0.1, 0.0, 0.1)
    with pytest.raises(ValueError):
        KineticParams(0.1, 0.5, 1.5)
    with pytest.raises(ValueError):
        TimeGrid(np.array([0.0, 0.0, 1.0]))
    with pytest.raises(ValueError):
        AifParams(dose=0.0)


def test_regular_grid_units():
    g = TimeGrid.regular(3, step_s=11.9, n_pre=1)
    np.testing.assert_allclose(g.times, np.array([-11.9, 0.0, 11.9]) / 60)
    assert len(g) == 3


def test_log_likelihood():
    y = np.array([1.0, 2.0])
    assert log_likelihood(y, y, 0.5) == pytest.approx(-np.log(2 * np.pi * 0.5))
    with pytest.raises(ValueError):
        log_likelihood(y, np.ones(3), 1.0)
    with pytest.raises(ValueError):
        log_likelihood(y, y, 0.0)


def test_scaled_convolution_fast_path():
    t = np.maximum(TimeGrid.regular(30, n_pre=2).times, 0.0)
    decay = (np.exp(-AIF.m1 * t), np.exp(-AIF.m2 * t))
    kep = np.array([[0.05], [0.7], [2.5], [3.0 + 1e-6]])   # last row takes the fallback
    scale = np.array([[0.1], [0.3], [1.2], [0.4]])
    got = scaled_convolution(scale, kep, t, AIF, decay)
    ref = scale * convolution_term(kep, t)
    np.testing.assert_allclose(got, ref, rtol=1e-11)
    assert np.all(got[:, :3] == 0.0)
    got = scaled_convolution(scale[:3], kep[:3], t, AIF, decay)
    assert np.all(got[:, :3] == 0.0)
