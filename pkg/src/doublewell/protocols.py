"""Cooling experiments: static harmonic coupling, frequency sweeps and the staged plan."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import dynamics as dyn
from .core import CONSTANTS, ParticleSpecies, SpeciesLabel, species
from .electrode_model import ElectrodeBasis, build_analytic_basis
from .potential_solver import (DoubleWellSpec, VoltageLimitWarning, VoltageSet,
                               characterize, compose, solve_double_well)
from .tables import BasisTables, PotentialTable

HARMONIC_THRESHOLD_K = 1e-3
TABLE_MARGIN = 50e-6
REGION_MARGIN = 0.02


class ProtocolError(RuntimeError):
    pass


class SweepError(ProtocolError):
    def __init__(self, message, waypoint=None):
        super().__init__(message)
        self.waypoint = waypoint


def _default_basis(basis):
    return build_analytic_basis() if basis is None else basis


def _widen(region, frac=REGION_MARGIN):
    lo, hi = region
    pad = frac * (hi - lo)
    return lo - pad, hi + pad


# -- prepared static wells ----------------------------------------------------

@dataclass
class PreparedWell:
    """A solved, characterized and tabulated static double well."""
    spec: DoubleWellSpec
    potential: object                     # callable Phi(z, order) used for analytics
    trajectory: dyn.TrajectoryPotential
    z_min_a: float
    z_min_b: float
    f_a: float                            # local curvature frequencies, Hz
    f_b: float
    depth_a: float                        # K
    region_a: tuple
    region_b: tuple
    voltages: VoltageSet | None = None
    characterization: object = field(default=None, repr=False)

    @property
    def tau_ex(self) -> float:
        s = self.spec
        return dyn.exchange_time(s.species_a, s.species_b, 2 * math.pi * self.f_a,
                                 2 * math.pi * self.f_b, abs(self.z_min_b - self.z_min_a))

    @property
    def bounds(self):
        return _widen(self.region_a), _widen(self.region_b)


def prepare_well(spec: DoubleWellSpec, basis: ElectrodeBasis | None = None,
                 spacing: float = 5e-6) -> PreparedWell:
    """Solve, characterize and tabulate ``spec`` for trajectory runs."""
    basis = _default_basis(basis)
    vs, pot = solve_double_well(spec, basis)
    ch = characterize(pot, spec)
    lo = max(min(ch.a.trapping_region[0], ch.b.trapping_region[0]) - TABLE_MARGIN, basis.z_min)
    hi = min(max(ch.a.trapping_region[1], ch.b.trapping_region[1]) + TABLE_MARGIN, basis.z_max)
    table = PotentialTable.from_potential(pot, lo, hi, spacing)
    traj = dyn.TrajectoryPotential.static(table, ch.a.z_min, ch.b.z_min)
    return PreparedWell(spec, pot, traj, ch.a.z_min, ch.b.z_min, ch.a.f_local, ch.b.f_local,
                        ch.a.depth, ch.a.trapping_region, ch.b.trapping_region, vs, ch)


def synthetic_well(species_a: ParticleSpecies, species_b: ParticleSpecies, f_a: float, s0: float,
                   f_b: float | None = None, compensate: bool = True,
                   depth_K: float = 10.0) -> PreparedWell:
    """Exactly harmonic wells, one per particle, at ``-s0/2`` and ``+s0/2``.

    Each particle sees only its own parabola (plus the mutual Coulomb force).
    The trapping region ends where the parabola reaches ``depth_K``.
    """
    if f_b is None:
        f_b = f_a
    if compensate:
        f_b = f_b + dyn.coulomb_detuning(species_a, species_b, 2 * math.pi * f_a, s0) / (2 * math.pi)
    za, zb = -0.5 * s0, 0.5 * s0
    spec = DoubleWellSpec(species_a, species_b, s0, 2 * math.pi * f_a, 2 * math.pi * f_b)
    tables, regions = [], []
    for sp, f, z0 in ((species_a, f_a, za), (species_b, f_b, zb)):
        curv = sp.mass * (2 * math.pi * f) ** 2 / sp.charge       # volts per m^2, signed
        half = math.sqrt(2 * depth_K * CONSTANTS.kB / (sp.mass * (2 * math.pi * f) ** 2))
        regions.append((z0 - half, z0 + half))
        width = 1.5 * half
        tables.append(PotentialTable.harmonic(curv, z0, z0 - width, z0 + width))
    traj = dyn.TrajectoryPotential(tables[0], tables[1], None, za, zb)

    def potential_a(z, order=0):
        return traj.evaluate_a(z, 0.0, order)

    return PreparedWell(spec, potential_a, traj, za, zb, f_a, f_b, depth_K,
                        regions[0], regions[1])


# -- harmonic coupling --------------------------------------------------------

@dataclass(frozen=True)
class HarmonicCouplingRun:
    spec: DoubleWellSpec          # Coulomb compensation already applied
    E_init: float                 # J
    duration: float | None = None  # s; default 1.1 tau_ex
    phase_a: float = 0.0
    phase_b: float = 0.0
    zero_point: bool = True


@dataclass
class CouplingResult:
    E_init: float
    E_fin: float                  # minimum particle-a energy over the run, J
    t_min: float
    transfer_fraction: float
    status: str
    tau_ex: float
    trace: np.ndarray | None = field(default=None, repr=False)

    @property
    def E_fin_K(self) -> float:
        return self.E_fin / CONSTANTS.kB


def run_harmonic_coupling(run: HarmonicCouplingRun | None = None, basis=None, *,
                          well: PreparedWell | None = None, E_init: float | None = None,
                          duration: float | None = None, phase_a: float = 0.0,
                          phase_b: float = 0.0, zero_point: bool = True,
                          config: dyn.IntegratorConfig = dyn.IntegratorConfig(order=4),
                          record_every: int = 0, backend=None) -> CouplingResult:
    """Static-potential energy exchange; ``E_fin`` is the minimum of ``E_a(t)``.

    Either pass a :class:`HarmonicCouplingRun` or a prepared ``well`` plus
    keyword settings. The cooling ion starts in its classical ground state.
    """
    if run is not None:
        E_init, duration = run.E_init, run.duration
        phase_a, phase_b, zero_point = run.phase_a, run.phase_b, run.zero_point
        if well is None:
            well = prepare_well(run.spec, basis)
    if well is None or E_init is None:
        raise ValueError("need a run description or a prepared well and E_init")
    sa, sb = well.spec.species_a, well.spec.species_b
    tau = well.tau_ex
    if duration is None:
        duration = 1.1 * tau
    if E_init >= well.depth_a * CONSTANTS.kB:
        return CouplingResult(E_init, E_init, 0.0, 0.0, "untrapped", tau)
    za, va = dyn.phase_space_point(well.potential, sa, E_init, well.z_min_a,
                                   well.region_a, phase_a)
    zb, vb = dyn.ground_state_point(sb, 2 * math.pi * well.f_b, well.z_min_b, phase_b,
                                    zero_point)
    res = dyn.run(well.trajectory, sa, sb, [za, va, zb, vb, 0.0], duration, config,
                  f_max=max(well.f_a, well.f_b), record_every=record_every,
                  bounds=well.bounds, backend=backend)
    if res.status != "ok":
        return CouplingResult(E_init, float("nan"), float("nan"), float("nan"), res.status, tau,
                              res.records)
    e_fin = max(res.min_energy_a, 0.0)
    frac = 1.0 - e_fin / E_init if E_init > 0 else 0.0
    return CouplingResult(E_init, e_fin, res.t_min_energy_a, frac, "ok", tau, res.records)


@dataclass
class HarmonicBoundary:
    energy_K: float
    depth_K: float
    threshold_K: float
    evaluations: list          # (E_init_K, E_fin_K)


def harmonic_boundary(spec, basis=None, threshold_K: float = HARMONIC_THRESHOLD_K,
                      resolution: float = 0.01,
                      config: dyn.IntegratorConfig = dyn.IntegratorConfig(order=4),
                      backend=None) -> HarmonicBoundary:
    """Largest initial energy that one exchange still cools below ``threshold_K``.

    ``spec`` is a :class:`DoubleWellSpec` (solved here) or a :class:`PreparedWell`.
    Bisection in log-energy between the threshold and the well depth, to a
    relative resolution ``resolution``.
    """
    well = spec if isinstance(spec, PreparedWell) else prepare_well(spec, basis)
    evaluations = []

    def cooled(e_K):
        r = run_harmonic_coupling(well=well, E_init=e_K * CONSTANTS.kB, config=config,
                                  backend=backend)
        evaluations.append((e_K, r.E_fin_K))
        return r.status == "ok" and r.E_fin_K < threshold_K

    depth = well.depth_a
    lo = 2.0 * threshold_K
    if not cooled(lo):
        raise ProtocolError(
            f"exchange leaves {evaluations[-1][1]:.3g} K at E_init = {lo:.3g} K; "
            "the wells are not resonant")
    hi = depth * (1 - 1e-3)
    if cooled(hi):
        return HarmonicBoundary(depth, depth, threshold_K, evaluations)
    while hi / lo > 1 + resolution:
        mid = math.sqrt(lo * hi)
        if cooled(mid):
            lo = mid
        else:
            hi = mid
    return HarmonicBoundary(lo, depth, threshold_K, evaluations)


# -- frequency sweep ----------------------------------------------------------

SWEEP_PROFILES = ("capture", "linear")


def default_sweep_spec(label, f_particle: float = 500e3, s0: float = 0.7e-3,
                       delta_s0: float | None = None) -> DoubleWellSpec:
    """Sweep geometry for ``label``; the cooling ion's frequency is set per waypoint.

    With the analytic basis a centred proton well hardens at low energy, which
    an upward sweep cannot follow; a 50 um offset towards the proton side makes
    its frequency fall monotonically with energy.
    """
    sp = species(label) if not isinstance(label, ParticleSpecies) else label
    if delta_s0 is None:
        delta_s0 = -50e-6 if sp.label == SpeciesLabel.PROTON else 0.0
    return DoubleWellSpec.from_frequencies(sp, species("beryllium9_ion"), f_particle, s0,
                                           f_b=f_particle, delta_s0=delta_s0)


@dataclass(frozen=True)
class SweepSchedule:
    """Cooling-ion frequency waypoints and their voltage sets.

    ``f_nominal`` are the requested ion frequencies; ``f_be`` the solver
    targets (nominal plus the Coulomb compensation when enabled). Between
    waypoints the voltages are interpolated linearly.
    """
    spec: DoubleWellSpec
    times: np.ndarray
    f_nominal: np.ndarray
    f_be: np.ndarray
    voltages: np.ndarray                  # (n_waypoints, n_electrodes)
    profile: str = "capture"
    alpha: float = float("nan")
    energies_K: np.ndarray | None = None  # resonant particle energy per waypoint (capture)
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or len(t) != len(self.voltages) or len(t) != len(self.f_be):
            raise ValueError("times, frequencies and voltages must align")
        if len(t) > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("waypoint times must be strictly increasing")
        if t[0] != 0.0:
            raise ValueError("schedules start at t = 0")
        df = np.diff(self.f_nominal)
        if len(df) and not (np.all(df > 0) or np.all(df < 0)):
            raise ValueError("waypoint frequencies must be strictly monotone")

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    @property
    def n_waypoints(self) -> int:
        return len(self.times)

    def frequency_at(self, t):
        """Nominal ion frequency at time ``t`` (linear between waypoints)."""
        return np.interp(t, self.times, self.f_nominal)

    def with_voltage_offsets(self, offsets) -> "SweepSchedule":
        return replace(self, voltages=self.voltages + np.asarray(offsets)[None, :], _cache={})

    def prepare(self, basis: ElectrodeBasis | None = None):
        """Tables and trapping limits for trajectory runs; cached per basis."""
        basis = _default_basis(basis)
        key = id(basis)
        if key not in self._cache:
            self._cache[key] = PreparedSweep(self, basis)
        return self._cache[key]

    # -- file I/O
    def to_csv(self, path, columns: str = "frequency"):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            if columns == "frequency":
                w.writerow(["time_s", "f_Be_Hz"])
                for t, f in zip(self.times, self.f_nominal):
                    w.writerow([repr(float(t)), repr(float(f))])
            elif columns == "voltage":
                n = self.voltages.shape[1]
                w.writerow(["time_s"] + [f"V_{i + 1}" for i in range(n)])
                for t, v in zip(self.times, self.voltages):
                    w.writerow([repr(float(t))] + [repr(float(x)) for x in v])
            else:
                raise ValueError("columns must be 'frequency' or 'voltage'")


class PreparedSweep:
    """Per-waypoint tables and the well characterization at the start of the sweep."""

    def __init__(self, schedule: SweepSchedule, basis: ElectrodeBasis, spacing: float = 5e-6):
        spec = schedule.spec
        self.schedule = schedule
        self.basis = basis
        start = spec.with_(omega_b=2 * math.pi * schedule.f_be[0])
        pot0 = compose(schedule.voltages[0], basis)
        ch = characterize(pot0, start)
        self.characterization = ch
        self.region_a = ch.a.trapping_region
        self.region_b = ch.b.trapping_region
        self.depth_a = ch.a.depth
        self.potential0 = pot0
        lo = max(min(self.region_a[0], self.region_b[0]) - TABLE_MARGIN, basis.z_min)
        hi = min(max(self.region_a[1], self.region_b[1]) + TABLE_MARGIN, basis.z_max)
        self.tables = BasisTables(basis, lo, hi, spacing)
        wp = [self.tables.combine(v) for v in schedule.voltages]
        times = schedule.times if schedule.n_waypoints > 1 else None
        self.trajectory = dyn.TrajectoryPotential(wp, None, times, ch.a.z_min, ch.b.z_min)
        self.f_max = max(spec.f_a, float(np.max(schedule.f_be)))

    @property
    def bounds(self):
        return _widen(self.region_a), _widen(self.region_b)

    def with_noise(self, offsets):
        """Trajectory potential with static per-electrode voltage offsets."""
        offsets = np.asarray(offsets, dtype=float)
        if not np.any(offsets):
            return self.trajectory
        return self.trajectory.with_offset(self.tables.combine(offsets))


def resonance_curve(spec: DoubleWellSpec, basis=None, energies_K=None, f_be: float | None = None):
    """Anharmonic particle frequency ``f_a(E)`` (Hz) in the sweep's final well."""
    basis = _default_basis(basis)
    if f_be is not None:
        spec = spec.with_(omega_b=2 * math.pi * f_be)
    vs, pot = solve_double_well(spec, basis)
    ch = characterize(pot, spec)
    if energies_K is None:
        energies_K = np.linspace(0.02, 0.97 * ch.a.depth, 60)
    energies_K = np.asarray(energies_K, dtype=float)
    f = np.array([dyn.axial_frequency_at_energy(pot, spec.species_a, e * CONSTANTS.kB,
                                                ch.a.z_min, ch.a.trapping_region)
                  for e in energies_K])
    return energies_K, f, ch.a.depth


def build_sweep(spec: DoubleWellSpec, f_start: float = 470e3, f_end: float = 500e3,
                total_duration: float | None = 180e-3, n_waypoints: int = 41,
                basis: ElectrodeBasis | None = None, profile: str = "capture",
                alpha: float = 1.0, capture_energy_K: float = 2.5,
                e_top_K: float = 10.0, e_floor_K: float = 0.02,
                lead_fraction: float = 0.02, compensate: bool = True) -> SweepSchedule:
    """Waypoint schedule for sweeping the cooling-ion well from ``f_start`` to ``f_end``.

    Profiles
    --------
    ``"capture"``
        Rate-limited by how fast the ion can take energy from the particle:
        ``|df/dt| <= alpha * |df_a/dE| * E_cap / tau_ex`` along the resonance
        curve ``f_a(E)`` for ``E`` from ``e_top_K`` down to ``e_floor_K``. The
        bound integrates to a schedule linear in the resonant energy. Short
        lead-in/out ramps cover frequencies outside that band.
    ``"linear"``
        Constant rate ``|df/dt| = alpha * gamma**2``.

    When ``total_duration`` is given, ``alpha`` is rescaled to meet it.
    Either sweep direction is accepted; the particle's resonance curve has to
    run the same way.
    """
    if profile not in SWEEP_PROFILES:
        raise ValueError(f"profile must be one of {SWEEP_PROFILES}")
    if f_start <= 0 or f_end <= 0 or f_start == f_end:
        raise ValueError("need distinct positive start and end frequencies")
    if total_duration is not None and total_duration < 0:
        raise ValueError("duration must be non-negative")
    basis = _default_basis(basis)
    sa, sb = spec.species_a, spec.species_b
    omega = spec.omega_a
    shift = dyn.coulomb_detuning(sa, sb, omega, spec.s0) / (2 * math.pi) if compensate else 0.0
    tau = dyn.exchange_time(sa, sb, omega, omega, spec.s0)
    gamma = 1.0 / (2.0 * tau)
    up = f_end > f_start
    energies = None

    if total_duration == 0:
        f_nom = np.array([f_start])
        times = np.array([0.0])
    elif n_waypoints == 2 or profile == "linear":
        n = max(n_waypoints, 2)
        f_nom = np.linspace(f_start, f_end, n)
        if total_duration is None:
            total_duration = abs(f_end - f_start) / (alpha * gamma**2)
        alpha = abs(f_end - f_start) / (total_duration * gamma**2)
        times = np.linspace(0.0, total_duration, n)
    else:
        if n_waypoints < 4:
            raise ValueError("the capture profile needs at least 4 waypoints")
        e_grid, f_curve, depth = resonance_curve(spec, basis,
                                                 np.linspace(e_floor_K, min(e_top_K, 0.97 * _depth(spec, basis)), 80),
                                                 f_be=f_end + shift)
        slope = np.diff(f_curve)
        if not (np.all(slope < 0) if up else np.all(slope > 0)):
            raise SweepError("the particle frequency is not monotone in energy in the "
                             "sweep direction; the ion cannot stay resonant")
        inside = (f_curve - f_start) * (f_curve - f_end) < 0
        if not np.any(inside):
            raise SweepError("no resonant energy inside the sweep range")
        e_band = e_grid[inside]
        e_hi, e_lo = e_band.max(), e_band.min()
        band_time = (e_hi - e_lo) * tau / (alpha * capture_energy_K)
        if total_duration is None:
            total_duration = band_time / (1 - 2 * lead_fraction)
        band = total_duration * (1 - 2 * lead_fraction)
        alpha = (e_hi - e_lo) * tau / (capture_energy_K * band)
        n_band = n_waypoints - 2
        e_way = np.linspace(e_hi, e_lo, n_band)
        f_way = np.interp(e_way, e_grid, f_curve)
        lead = lead_fraction * total_duration
        times = np.concatenate([[0.0], lead + np.linspace(0.0, band, n_band),
                                [total_duration]])
        f_nom = np.concatenate([[f_start], f_way, [f_end]])
        energies = np.concatenate([[np.nan], e_way, [0.0]])

    f_be = f_nom + shift
    volts = []
    for k, f in enumerate(f_be):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", VoltageLimitWarning)
            try:
                vs, _ = solve_double_well(spec.with_(omega_b=2 * math.pi * f), basis)
            except Exception as exc:
                raise SweepError(f"waypoint {k} ({f:.1f} Hz): {exc}", k) from exc
        for w in caught:
            warnings.warn(f"waypoint {k}: {w.message}", VoltageLimitWarning, stacklevel=2)
        volts.append(vs.voltages)
    return SweepSchedule(spec, times, f_nom, f_be, np.array(volts), profile, alpha, energies)


def _depth(spec, basis):
    return characterize(solve_double_well(spec, basis)[1], spec).a.depth


def load_schedule(path, spec: DoubleWellSpec, basis=None, compensate: bool = True) -> SweepSchedule:
    """Read a ``time_s,f_Be_Hz`` or ``time_s,V_1..V_n`` schedule file."""
    basis = _default_basis(basis)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty schedule file")
    header = [h.strip() for h in rows[0]]
    data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
    if header[0] != "time_s":
        raise ValueError(f"{path}: first column must be time_s")
    times = data[:, 0]
    shift = (dyn.coulomb_detuning(spec.species_a, spec.species_b, spec.omega_a, spec.s0)
             / (2 * math.pi)) if compensate else 0.0
    if header[1:] == ["f_Be_Hz"]:
        f_nom = data[:, 1]
        volts = np.array([solve_double_well(spec.with_(omega_b=2 * math.pi * (f + shift)),
                                            basis)[0].voltages for f in f_nom])
        return SweepSchedule(spec, times, f_nom, f_nom + shift, volts, "file")
    expected = [f"V_{i + 1}" for i in range(basis.n_electrodes)]
    if header[1:] != expected:
        raise ValueError(f"{path}: columns must be time_s,f_Be_Hz or time_s,{','.join(expected)}")
    volts = data[:, 1:]
    # nominal frequency is not stored; recover the ion's curvature frequency per waypoint
    f_b = []
    for v in volts:
        pot = compose(v, basis)
        ch = characterize(pot, spec)
        f_b.append(ch.b.f_local)
    f_b = np.array(f_b)
    return SweepSchedule(spec, times, f_b - shift, f_b, volts, "file")


@dataclass
class SweepResult:
    E_init: float
    E_fin: float                  # particle-a energy at the last time step, J
    status: str
    E_after: list = field(default_factory=list)   # E_a after each sweep, J
    E_b_fin: float = float("nan")
    trace: np.ndarray | None = field(default=None, repr=False)

    @property
    def E_fin_K(self) -> float:
        return self.E_fin / CONSTANTS.kB


def run_sweep(schedule: SweepSchedule, E_init: float, noise=None, *, basis=None,
              rng: np.random.Generator | None = None, n_sweeps: int = 1,
              config: dyn.IntegratorConfig = dyn.IntegratorConfig(order=4),
              record_every: int = 0, backend=None) -> SweepResult:
    """Integrate ``n_sweeps`` passes of ``schedule`` starting from ``E_init`` (J).

    ``noise`` is either an array of per-electrode voltage offsets or an object
    with ``draw(rng, n_electrodes)``; one draw holds for the whole run. The
    particle starts at a random oscillation phase and the ion is put back in
    its ground state, at a random phase, before every pass.
    """
    prep = schedule.prepare(basis)
    sa, sb = schedule.spec.species_a, schedule.spec.species_b
    if rng is None:
        rng = np.random.default_rng(0)
    n_el = schedule.voltages.shape[1]
    if noise is None:
        offsets = np.zeros(n_el)
    elif hasattr(noise, "draw"):
        offsets = noise.draw(rng, n_el)
    else:
        offsets = np.asarray(noise, dtype=float)
    phase_a = rng.random()
    if E_init >= prep.depth_a * CONSTANTS.kB:
        return SweepResult(E_init, float("nan"), "untrapped")
    traj = prep.with_noise(offsets)
    pot0 = _TablePotential(traj, 0.0)
    za, va = dyn.phase_space_point(pot0, sa, E_init, traj.z_min_a[0], prep.region_a, phase_a)
    if schedule.duration == 0 or n_sweeps == 0:
        e = dyn.energy_accounting((za, va, traj.z_min_b[0], 0.0, 0.0), traj, sa, sb)
        return SweepResult(E_init, e[0], "ok", [e[0]] * n_sweeps)
    traces, after = [], []
    omega_b0 = 2 * math.pi * schedule.f_be[0]
    state = None
    for k in range(n_sweeps):
        zb, vb = dyn.ground_state_point(sb, omega_b0, traj.z_min_b[0], rng.random())
        state = [za, va, zb, vb, 0.0]
        res = dyn.run(traj, sa, sb, state, schedule.duration, config, f_max=prep.f_max,
                      record_every=record_every, bounds=prep.bounds, backend=backend)
        if record_every and res.records is not None:
            rec = res.records.copy()
            rec[:, 0] += k * schedule.duration
            traces.append(rec)
        if res.status != "ok":
            return SweepResult(E_init, float("nan"), res.status, after,
                               trace=np.vstack(traces) if traces else None)
        za, va = res.state.z_a, res.state.v_a
        after.append(res.state.E_a)
        e_b = res.state.E_b
    return SweepResult(E_init, after[-1], "ok", after, e_b,
                       np.vstack(traces) if traces else None)


class _TablePotential:
    """Particle-a view of a trajectory potential frozen at time ``t``."""

    def __init__(self, traj: dyn.TrajectoryPotential, t: float):
        self.traj, self.t = traj, t

    def __call__(self, z, order=0):
        return self.traj.evaluate_a(z, self.t, order)


# -- ground-state protocol plan -------------------------------------------------

@dataclass(frozen=True)
class Stage:
    kind: str                     # sweep | harmonic | ground_state
    f_particle: float             # Hz
    f_be: float | tuple           # Hz, or (start, end) for sweeps
    s0: float                     # m
    repetitions: int
    duration: float               # s per repetition
    tau_ex: float | None = None
    detuning: float | None = None  # Hz, Coulomb shift applied to the ion
    start_K: float | None = None
    target_K: float | None = None

    @property
    def total(self) -> float:
        return self.repetitions * self.duration


@dataclass(frozen=True)
class ProtocolPlan:
    species: str
    efficiency: float
    stages: tuple

    @property
    def total(self) -> float:
        """Total coupling time in s, without ion re-initialisation or transport."""
        return sum(s.total for s in self.stages)

    def as_text(self) -> str:
        lines = [f"# ground-state cooling plan: {self.species}, transfer efficiency "
                 f"{self.efficiency:.0%}"]
        for i, s in enumerate(self.stages, 1):
            if isinstance(s.f_be, tuple):
                fbe = f"{s.f_be[0] / 1e3:.0f}-{s.f_be[1] / 1e3:.0f} kHz"
            else:
                fbe = f"{s.f_be / 1e3:.3f} kHz"
            extra = ""
            if s.tau_ex is not None:
                extra = (f", tau_ex {s.tau_ex * 1e3:.2f} ms, detuning {s.detuning:+.1f} Hz, "
                         f"{s.start_K * 1e3:.3g} mK -> < {s.target_K * 1e3:.3g} mK")
            lines.append(f"{i}) {s.kind:<12} f {s.f_particle / 1e3:.0f} kHz, f_Be {fbe}, "
                         f"s0 {s.s0 * 1e3:.1f} mm, {s.repetitions} x {s.duration * 1e3:.1f} ms{extra}")
        lines.append(f"total {self.total * 1e3:.1f} ms (excluding ion re-initialisation and transport)")
        return "\n".join(lines)


# (particle frequency, s0) per stage and the sweep duration; post-sweep energies
_PLAN_INPUTS = {
    SpeciesLabel.PROTON: dict(sweep=180.0e-3, sweep_edge_K=0.460,
                              harmonic=(400e3, 0.7e-3), ground=(100e3, 0.6e-3)),
    SpeciesLabel.ANTIPROTON: dict(sweep=242e-3, sweep_edge_K=0.260,
                                  harmonic=(450e3, 0.6e-3), ground=(100e3, 0.6e-3)),
}


def repetitions_needed(e_start: float, e_target: float, efficiency: float) -> int:
    """Smallest ``k`` with ``e_start * (1 - efficiency)**k < e_target``."""
    if not 0 < efficiency < 1:
        raise ValueError("efficiency must lie in (0, 1)")
    if e_start < e_target:
        return 0
    return math.floor(math.log(e_target / e_start) / math.log(1 - efficiency)) + 1


def plan_ground_state_protocol(label, efficiency: float = 0.8, sweep_edge_K: float | None = None,
                               sweep_f: float = 500e3) -> ProtocolPlan:
    """Staged plan: two sweeps, then harmonic and ground-state exchanges.

    Repetitions follow geometric decay of the particle energy by
    ``1 - efficiency`` per exchange. Between stages the energy is rescaled
    adiabatically by the frequency ratio. The harmonic stage ends below
    1 mK x kB, the ground-state stage below ``hbar * omega``.
    """
    sp = species(label) if not isinstance(label, ParticleSpecies) else label
    if sp.label not in _PLAN_INPUTS:
        raise ValueError("the protocol is defined for protons and antiprotons")
    be = species("beryllium9_ion")
    row = _PLAN_INPUTS[sp.label]
    edge = row["sweep_edge_K"] if sweep_edge_K is None else sweep_edge_K
    stages = [Stage("sweep", sweep_f, (470e3, 500e3), 0.7e-3, 2, row["sweep"])]
    e_start = edge
    f_prev = sweep_f
    targets = (HARMONIC_THRESHOLD_K, None)
    for (kind, key), target in zip((("harmonic", "harmonic"), ("ground_state", "ground")), targets):
        f, s0 = row[key]
        w = 2 * math.pi * f
        shift = dyn.coulomb_detuning(sp, be, w, s0) / (2 * math.pi)
        tau = dyn.exchange_time(sp, be, w, w + 2 * math.pi * shift, s0)
        e_start = e_start * f / f_prev
        if target is None:
            target = CONSTANTS.hbar * w / CONSTANTS.kB
        k = repetitions_needed(e_start, target, efficiency)
        stages.append(Stage(kind, f, f + shift, s0, k, tau, tau, shift, e_start, target))
        e_start = target
        f_prev = f
    return ProtocolPlan(sp.name, efficiency, tuple(stages))
