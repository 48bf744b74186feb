import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from doublewell import dynamics as dyn
from doublewell.analysis import (AnalysisError, Fit, estimate_sigma_f, fit_constant, fit_linear,
                                 fit_lorentzian, fit_quadratic, fit_reciprocal, lorentzian,
                                 ratio_for_fraction, required_voltage_stability, robustness,
                                 scan_resonance)
from doublewell.core import CONSTANTS
from doublewell.montecarlo import VoltageNoise
from doublewell.potential_solver import DoubleWellSpec


def test_simple_fits_exact():
    x = np.array([1.0, 2.0, 3.0, 5.0])
    assert fit_linear(x, 2 * x + 1).coeffs == pytest.approx((2, 1))
    assert fit_linear(x, 2 * x + 1).residual < 1e-12
    assert fit_quadratic(x, 3 * x**2, pure=True).coeffs[0] == pytest.approx(3)
    assert fit_quadratic(x, x**2 - x).residual < 1e-12
    r = fit_reciprocal(x, 7 / x)
    assert r.coeffs[0] == pytest.approx(7) and r(7.0) == pytest.approx(1.0)
    c = fit_constant([1.0, 3.0])
    assert c.coeffs == (2.0,) and c.residual == pytest.approx(0.5)


def test_lorentzian_self_test():
    x = np.linspace(-120, 140, 19)
    y = lorentzian(x, 0.97, 8.0, 21.6)
    fit = fit_lorentzian(x, y)
    assert fit.converged
    assert fit.amplitude == pytest.approx(0.97, rel=1e-6)
    assert fit.center == pytest.approx(8.0, rel=1e-6)
    assert fit.gamma == pytest.approx(21.6, rel=1e-6)


def test_lorentzian_noisy_and_bad_data(rng):
    x = np.linspace(-100, 100, 21)
    y = lorentzian(x, 1.0, 0.0, 20.0) + rng.normal(0, 0.01, x.size)
    assert fit_lorentzian(x, y).gamma == pytest.approx(20.0, rel=0.1)
    bad = fit_lorentzian(x, np.zeros_like(x))
    assert not bad.converged


@given(st.floats(0.01, 0.99))
@settings(max_examples=50, deadline=None)
def test_robustness_round_trip(p):
    ratio = ratio_for_fraction(p)
    _, back = robustness(2 * ratio, 1.0)
    assert back == pytest.approx(p, rel=1e-12)


def test_robustness_exact_points():
    assert robustness(2.0, 1.0) == (1.0, 0.5)
    r, p = robustness(4.0, 1.0)
    assert r == 2.0 and p == pytest.approx(0.8, rel=1e-15)
    assert ratio_for_fraction(0.5) == 1.0
    assert ratio_for_fraction(0.8) == pytest.approx(2.0, rel=1e-15)
    with pytest.raises(ValueError):
        robustness(1.0, 0.0)
    with pytest.raises(ValueError):
        ratio_for_fraction(1.0)


def test_exchange_symmetry(proton, be):
    w = 2 * math.pi * 450e3
    assert dyn.exchange_time(proton, be, w, w * 1.001, 0.6e-3) == \
        pytest.approx(dyn.exchange_time(be, proton, w * 1.001, w, 0.6e-3), rel=1e-15)


def test_voltage_stability_unit_point(proton, be):
    f = 500e3
    gamma = dyn.resonance_width(proton, be, 2 * math.pi * f, 2 * math.pi * f, 0.7e-3)
    emax = Fit("linear", (1e-7, 0.0), 0.0)             # 0.05 K at 500 kHz
    sig = Fit("reciprocal", (0.5 * gamma * f,), 0.0)   # sigma_f = gamma / 2 there
    rep = required_voltage_stability(proton, be, 0.7e-3, 0.05, emax, sig, p=0.5)
    assert rep.f_Emax == pytest.approx(f)
    assert rep.robustness == pytest.approx(1.0)
    assert rep.required_Vpp == pytest.approx(1e-6, rel=1e-12)
    assert rep.required_Vpp_95 == pytest.approx(0.5e-6, rel=1e-12)


def test_voltage_stability_names_failing_stage(proton, be):
    sig = Fit("reciprocal", (1.0,), 0.0)
    with pytest.raises(AnalysisError, match="harmonic-boundary"):
        required_voltage_stability(proton, be, 0.7e-3, 0.05, None, sig)
    with pytest.raises(AnalysisError, match="frequency-fluctuation"):
        required_voltage_stability(proton, be, 0.7e-3, 0.05, Fit("linear", (1e-7, 0.0), 0), None)
    with pytest.raises(AnalysisError, match="zero slope"):
        required_voltage_stability(proton, be, 0.7e-3, 0.05, Fit("linear", (0.0, 1.0), 0), sig)


def test_sigma_f_linear_in_noise(proton, be, basis):
    spec = DoubleWellSpec.from_frequencies(proton, be, 500e3, 0.7e-3, compensate=True)
    a = estimate_sigma_f(spec, VoltageNoise(250e-9), 100, basis, seed=3)
    b = estimate_sigma_f(spec, VoltageNoise(500e-9), 100, basis, seed=3)
    assert a.n_flagged == 0 and a.differences.size == 100
    assert b.sigma_f / a.sigma_f == pytest.approx(2.0, rel=1e-4)
    zero = estimate_sigma_f(spec, VoltageNoise(0.0), 10, basis)
    assert zero.sigma_f < 1e-6


def test_scan_resonance_small(proton, be):
    gamma = dyn.resonance_width(proton, be, 2 * math.pi * 500e3, 2 * math.pi * 500e3, 0.6e-3)
    det = np.linspace(-6, 6, 9) * gamma
    curve = scan_resonance(proton, be, 500e3, 0.6e-3, 0.1 * CONSTANTS.kB, det)
    assert curve.fit.converged
    assert curve.hwhm == pytest.approx(curve.gamma_predicted, rel=0.10)
    assert curve.transfer_fractions[4] > 0.999
    assert curve.symmetry_error() < 0.05
    with pytest.warns(UserWarning, match="5 gamma"):
        scan_resonance(proton, be, 500e3, 0.6e-3, 1e-24, [0.0, gamma])
    with pytest.raises(ValueError):
        scan_resonance(proton, be, 500e3, 0.6e-3, 1e-24, det, well="bogus")
