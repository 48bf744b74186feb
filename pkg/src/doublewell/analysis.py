"""Resonance scans, frequency-fluctuation propagation and robustness math."""
from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from . import dynamics as dyn
from . import protocols as proto
from .core import CONSTANTS, ParticleSpecies
from .montecarlo import VoltageNoise
from .potential_solver import DoubleWellSpec, characterize, solve_double_well


class AnalysisError(RuntimeError):
    """A pipeline stage is missing its input or produced nothing usable."""


# -- small fits ----------------------------------------------------------------

@dataclass(frozen=True)
class Fit:
    """Least-squares fit; ``residual`` is the RMS residual relative to the mean |y|."""
    kind: str
    coeffs: tuple
    residual: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        c = self.coeffs
        if self.kind == "constant":
            return np.full_like(x, c[0])
        if self.kind == "reciprocal":
            return c[0] / x
        return np.polyval(c, x)


def _relative_residual(y, model) -> float:
    y = np.asarray(y, dtype=float)
    scale = np.mean(np.abs(y))
    return float(np.sqrt(np.mean((y - model) ** 2)) / scale) if scale > 0 else 0.0


def fit_linear(x, y) -> Fit:
    c = np.polyfit(np.asarray(x, float), np.asarray(y, float), 1)
    return Fit("linear", tuple(c), _relative_residual(y, np.polyval(c, x)))


def fit_quadratic(x, y, pure: bool = False) -> Fit:
    """Second-order polynomial; with ``pure`` only ``a x^2``."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if pure:
        a = float(np.sum(y * x**2) / np.sum(x**4))
        c = (a, 0.0, 0.0)
    else:
        c = tuple(np.polyfit(x, y, 2))
    return Fit("quadratic", c, _relative_residual(y, np.polyval(c, x)))


def fit_reciprocal(x, y) -> Fit:
    """``y = c / x`` by ordinary least squares."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    c = float(np.sum(y / x) / np.sum(1.0 / x**2))
    return Fit("reciprocal", (c,), _relative_residual(y, c / x))


def fit_constant(y) -> Fit:
    y = np.asarray(y, float)
    c = float(np.mean(y))
    return Fit("constant", (c,), _relative_residual(y, np.full_like(y, c)))


# -- Lorentzian -------------------------------------------------------------------

def lorentzian(x, amplitude, center, gamma):
    """``A gamma^2 / ((x - center)^2 + gamma^2)``; ``gamma`` is the HWHM."""
    return amplitude * gamma**2 / ((x - center) ** 2 + gamma**2)


@dataclass(frozen=True)
class LorentzianFit:
    amplitude: float
    center: float
    gamma: float
    residual: float
    converged: bool
    message: str = ""

    def __call__(self, x):
        return lorentzian(np.asarray(x, float), self.amplitude, self.center, self.gamma)


def _linearized_lorentzian(x, y):
    # y (a x^2 + b x + c) = 1, weighted so that small y do not dominate
    A = np.column_stack([y * x**2, y * x, y])
    (a, b, c), *_ = np.linalg.lstsq(A, np.ones_like(y), rcond=None)
    if not a > 0:
        raise ValueError("data are not peaked")
    x0 = -b / (2 * a)
    g2 = c / a - x0**2
    if not g2 > 0:
        raise ValueError("non-positive width in linearized fit")
    return 1.0 / (a * g2), x0, math.sqrt(g2)


def fit_lorentzian(x, y) -> LorentzianFit:
    """Lorentzian fit: linearized closed form, refined by nonlinear least squares.

    Never raises on bad data; ``converged`` is False and the best available
    estimate (possibly NaN) is returned instead.
    """
    x, y = np.asarray(x, float), np.asarray(y, float)
    try:
        p0 = _linearized_lorentzian(x, y)
    except (ValueError, np.linalg.LinAlgError) as exc:
        k = int(np.argmax(y))
        p0 = (float(y[k]), float(x[k]), float(np.ptp(x)) / 4 or 1.0)
        seed_msg = f"linearized seed failed: {exc}"
    else:
        seed_msg = ""
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            p, _ = curve_fit(lorentzian, x, y, p0=p0, maxfev=10000)
        amp, x0, g = float(p[0]), float(p[1]), abs(float(p[2]))
        ok = bool(np.all(np.isfinite(p)) and x.min() <= x0 <= x.max())
        msg = seed_msg if ok else "center outside scan range"
    except Exception as exc:          # noqa: BLE001 - any failure just flags the fit
        amp, x0, g = (float(v) for v in p0)
        ok, msg = False, f"{seed_msg} {exc}".strip()
    res = _relative_residual(y, lorentzian(x, amp, x0, g)) if np.isfinite(g) else float("nan")
    return LorentzianFit(amp, x0, g, res, ok, msg)


# -- resonance scan ------------------------------------------------------------------

@dataclass
class ResonanceCurve:
    f: float
    s0: float
    detunings: np.ndarray            # Hz
    transfer_fractions: np.ndarray
    fit: LorentzianFit
    tau_ex: float                    # at zero detuning
    statuses: list = field(default_factory=list)

    @property
    def gamma_predicted(self) -> float:
        return 1.0 / (2.0 * self.tau_ex)

    @property
    def hwhm(self) -> float:
        return self.fit.gamma

    def symmetry_error(self) -> float:
        """Largest mismatch between the curve and its mirror about the fitted center."""
        x = self.detunings
        y = self.transfer_fractions
        mirrored = np.interp(2 * self.fit.center - x, x, y, left=np.nan, right=np.nan)
        return float(np.nanmax(np.abs(mirrored - y)))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["detuning_Hz", "transfer_fraction", "lorentzian_fit", "status"])
            fitted = self.fit(self.detunings)
            for d, t, m, s in zip(self.detunings, self.transfer_fractions, fitted, self.statuses):
                w.writerow([repr(float(d)), repr(float(t)), repr(float(m)), s])


def scan_resonance(species_a: ParticleSpecies, species_b: ParticleSpecies, f: float, s0: float,
                   E_init: float, detunings, *, well: str = "synthetic", basis=None,
                   delta_s0: float = 0.0, window: float = 1.0,
                   config: dyn.IntegratorConfig = dyn.IntegratorConfig(order=4),
                   threads: int = 1, zero_point: bool = True, backend=None) -> ResonanceCurve:
    """Transfer fraction versus cooling-ion detuning, with a Lorentzian fit.

    For each ``df`` the ion well sits at ``f + df`` plus the Coulomb
    compensation. The transfer fraction is ``1 - min E_a / E_a(0)`` over
    ``window`` times that detuning's own exchange time. ``well`` is
    ``"synthetic"`` (exact parabolas) or ``"solved"`` (electrode potential).
    """
    detunings = np.asarray(detunings, dtype=float)
    if well not in ("synthetic", "solved"):
        raise ValueError("well must be 'synthetic' or 'solved'")
    tau0 = dyn.exchange_time(species_a, species_b, 2 * math.pi * f, 2 * math.pi * f, s0)
    gamma = 1.0 / (2 * tau0)
    if detunings.min() > -5 * gamma or detunings.max() < 5 * gamma:
        warnings.warn(f"detuning grid does not span +-5 gamma (gamma = {gamma:.3g} Hz)",
                      stacklevel=2)

    def one(df):
        if well == "synthetic":
            w = proto.synthetic_well(species_a, species_b, f, s0, f_b=f + df)
        else:
            spec = DoubleWellSpec.from_frequencies(species_a, species_b, f, s0, f_b=f + df,
                                                   delta_s0=delta_s0, compensate=True)
            w = proto.prepare_well(spec, basis)
        r = proto.run_harmonic_coupling(well=w, E_init=E_init, duration=window * w.tau_ex,
                                        zero_point=zero_point, config=config, backend=backend)
        frac = min(max(r.transfer_fraction, 0.0), 1.0) if r.status == "ok" else float("nan")
        return frac, r.status

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(one, detunings))
    else:
        out = [one(d) for d in detunings]
    y = np.array([o[0] for o in out])
    good = np.isfinite(y)
    fit = fit_lorentzian(detunings[good], y[good])
    return ResonanceCurve(f, s0, detunings, y, fit, tau0, [o[1] for o in out])


# -- frequency fluctuations --------------------------------------------------------

@dataclass
class SigmaFEstimate:
    f: float
    s0: float
    sigma_V: float
    sigma_f: float                   # Hz
    differences: np.ndarray          # f_b - f_a per accepted sample, Hz
    n_flagged: int


def _relocate(basis, V, z0, sp: ParticleSpecies, iterations=6, max_shift=20e-6):
    """Vectorized Newton search of the minimum of ``q Phi`` per voltage row."""
    z = np.full(V.shape[0], z0)
    for _ in range(iterations):
        d1 = np.einsum("ij,ji->i", V, basis.evaluate_all(z, 1))
        d2 = np.einsum("ij,ji->i", V, basis.evaluate_all(z, 2))
        z = z - d1 / d2
    d2 = np.einsum("ij,ji->i", V, basis.evaluate_all(z, 2))
    k = sp.charge * d2
    ok = (k > 0) & (np.abs(z - z0) < max_shift) & np.isfinite(z)
    f = np.sqrt(np.where(ok, k, np.nan) / sp.mass) / (2 * math.pi)
    return f, ok


def estimate_sigma_f(spec: DoubleWellSpec, noise: VoltageNoise = VoltageNoise(),
                     n_samples: int = 1000, basis=None, seed: int = 0) -> SigmaFEstimate:
    """Spread of the ion-minus-particle curvature frequency under voltage noise.

    Each sample perturbs all electrodes, relocates both minima and compares
    the local curvature frequencies. ``sigma_f`` is the sample standard
    deviation (the Gaussian maximum-likelihood width). Samples whose minimum
    is lost are excluded and counted.
    """
    basis = proto._default_basis(basis)
    vs, pot = solve_double_well(spec, basis)
    ch = characterize(pot, spec)
    rng = np.random.default_rng(seed)
    V = vs.voltages + noise.draw(rng, n_samples * len(vs)).reshape(n_samples, len(vs))
    fa, oka = _relocate(basis, V, ch.a.z_min, spec.species_a)
    fb, okb = _relocate(basis, V, ch.b.z_min, spec.species_b)
    ok = oka & okb
    diff = (fb - fa)[ok]
    if diff.size < 2:
        raise AnalysisError("fewer than two noise samples kept both minima")
    return SigmaFEstimate(spec.f_a, spec.s0, noise.sigma_V, float(np.std(diff, ddof=1)), diff,
                          int(np.sum(~ok)))


@dataclass
class FrequencyFluctuation:
    frequencies: np.ndarray
    sigma_f: np.ndarray
    fit: Fit                         # reciprocal, coefficient in Hz^2
    estimates: list = field(default_factory=list, repr=False)

    @property
    def coefficient(self) -> float:
        return self.fit.coeffs[0]


def sigma_f_scan(species_a, species_b, frequencies, s0, noise: VoltageNoise = VoltageNoise(),
                 n_samples: int = 1000, basis=None, seed: int = 0,
                 delta_s0: float = 0.0) -> FrequencyFluctuation:
    """``sigma_f`` over a frequency scan at fixed ``s0`` with a ``c / f`` fit."""
    est = []
    for f in frequencies:
        spec = DoubleWellSpec.from_frequencies(species_a, species_b, f, s0, delta_s0=delta_s0,
                                               compensate=True)
        est.append(estimate_sigma_f(spec, noise, n_samples, basis, seed))
    freqs = np.asarray(frequencies, float)
    sig = np.array([e.sigma_f for e in est])
    return FrequencyFluctuation(freqs, sig, fit_reciprocal(freqs, sig), est)


# -- robustness ----------------------------------------------------------------------

def robustness(gamma: float, sigma_f: float):
    """``(ratio, p)`` with ratio ``gamma / (2 sigma_f)`` and ``p = 1 / (1 + ratio^-2)``.

    ``p`` is the energy fraction transferable with 95.4% confidence.
    """
    if not sigma_f > 0:
        raise ValueError("sigma_f must be positive")
    ratio = gamma / (2.0 * sigma_f)
    return ratio, 1.0 / (1.0 + (2.0 * sigma_f / gamma) ** 2)


def ratio_for_fraction(p: float) -> float:
    """Inverse of the robustness relation: ``1 / sqrt(1/p - 1)``."""
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    return 1.0 / math.sqrt(1.0 / p - 1.0)


def robustness_vs_frequency(species_a, species_b, fluct: FrequencyFluctuation, s0: float):
    """Robustness ratio per scanned frequency and its constant fit."""
    ratios = []
    for f, sig in zip(fluct.frequencies, fluct.sigma_f):
        g = dyn.resonance_width(species_a, species_b, 2 * math.pi * f, 2 * math.pi * f, s0)
        ratios.append(robustness(g, sig)[0])
    ratios = np.array(ratios)
    return ratios, fit_constant(ratios)


@dataclass(frozen=True)
class RobustnessReport:
    s0: float
    f_Emax: float
    E_max_K: float
    gamma: float
    sigma_f: float                   # at the reference noise level and f_Emax
    robustness: float
    p_at_95: float
    sigma_f_allowed: float           # for the target fraction
    required_Vpp: float              # 68.3% confidence, V
    required_Vpp_95: float           # 95.4% confidence, V


def required_voltage_stability(species_a, species_b, s0: float, E_max_K: float,
                               emax_fit: Fit | None, sigma_fit: Fit | None, p: float = 0.8,
                               sigma_V: float = 250e-9) -> RobustnessReport:
    """Peak-to-peak supply stability that keeps a fraction ``p`` transferable.

    ``f_Emax`` inverts the linear ``E_max(f)`` fit, ``sigma_f`` at the
    reference noise comes from the reciprocal fit at ``f_Emax`` and
    ``V_pp = 4 sigma_V sigma_allowed / sigma_ref``. The factor 4 converts a
    standard deviation to peak-to-peak and 95.4% to 68.3% confidence.
    """
    if emax_fit is None:
        raise AnalysisError("harmonic-boundary stage: no linear E_max(f) fit")
    if sigma_fit is None:
        raise AnalysisError("frequency-fluctuation stage: no reciprocal sigma_f(f) fit")
    slope, intercept = emax_fit.coeffs
    if slope == 0:
        raise AnalysisError("harmonic-boundary stage: E_max(f) fit has zero slope")
    f_emax = (E_max_K - intercept) / slope
    if not f_emax > 0:
        raise AnalysisError("harmonic-boundary stage: E_max maps to a non-positive frequency")
    sigma_ref = float(sigma_fit(f_emax))
    gamma = dyn.resonance_width(species_a, species_b, 2 * math.pi * f_emax,
                                2 * math.pi * f_emax, s0)
    ratio, p95 = robustness(gamma, sigma_ref)
    allowed = gamma / (2.0 * ratio_for_fraction(p))
    vpp = 4.0 * sigma_V * allowed / sigma_ref
    return RobustnessReport(s0, f_emax, E_max_K, gamma, sigma_ref, ratio, p95, allowed, vpp,
                            0.5 * vpp)


@dataclass
class StabilityStudy:
    """Harmonic boundaries, depths, ``sigma_f`` and ``V_pp`` per separation."""
    frequencies: np.ndarray
    s0_values: tuple
    E_max_K: dict                    # s0 -> array over frequencies
    depth_K: dict
    emax_fits: dict
    depth_fits: dict
    fluctuations: dict
    robustness_fits: dict
    reports: dict

    def rows(self):
        for s0 in self.s0_values:
            for i, f in enumerate(self.frequencies):
                fl = self.fluctuations[s0]
                yield (s0, f, self.E_max_K[s0][i], self.depth_K[s0][i], fl.sigma_f[i])


def stability_study(species_a, species_b, s0_values=(0.6e-3, 0.7e-3, 0.8e-3),
                    frequencies=(300e3, 350e3, 400e3, 450e3, 500e3), basis=None,
                    noise: VoltageNoise = VoltageNoise(), n_samples: int = 1000, seed: int = 0,
                    p: float = 0.8, config: dyn.IntegratorConfig = dyn.IntegratorConfig(order=4),
                    backend=None) -> StabilityStudy:
    """The full voltage-stability pipeline over a grid of separations and frequencies.

    ``E_max`` for each separation is the largest harmonic boundary found on
    the frequency grid.
    """
    basis = proto._default_basis(basis)
    freqs = np.asarray(frequencies, float)
    emax, depth, efits, dfits, fluct, rfits, reports = {}, {}, {}, {}, {}, {}, {}
    for s0 in s0_values:
        e, d = [], []
        for f in freqs:
            spec = DoubleWellSpec.from_frequencies(species_a, species_b, f, s0, compensate=True)
            hb = proto.harmonic_boundary(spec, basis, config=config, backend=backend)
            e.append(hb.energy_K)
            d.append(hb.depth_K)
        emax[s0], depth[s0] = np.array(e), np.array(d)
        efits[s0] = fit_linear(freqs, emax[s0])
        dfits[s0] = fit_quadratic(freqs, depth[s0])
        fluct[s0] = sigma_f_scan(species_a, species_b, freqs, s0, noise, n_samples, basis, seed)
        rfits[s0] = robustness_vs_frequency(species_a, species_b, fluct[s0], s0)[1]
        reports[s0] = required_voltage_stability(species_a, species_b, s0,
                                                 float(emax[s0].max()), efits[s0],
                                                 fluct[s0].fit, p, noise.sigma_V)
    return StabilityStudy(freqs, tuple(s0_values), emax, depth, efits, dfits, fluct, rfits,
                          reports)


def energy_kelvin(E: float) -> float:
    return E / CONSTANTS.kB
