"""Axial two-particle dynamics: forces, symplectic stepping and energy bookkeeping.

Trajectories are integrated by the compiled kernel (or its pure-Python twin,
see :mod:`doublewell.backend`) on piecewise quintic potential tables. Higher
accuracy comes from symmetric compositions of velocity-Verlet sub-steps, which
stay symplectic and time-reversible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from . import backend as _backend
from .core import CONSTANTS, ParticleSpecies
from .tables import PotentialTable

# symmetric compositions of velocity Verlet (Yoshida 1990)
_Y4 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
_Y6 = (0.784513610477560, 0.235573213359357, -1.17767998417887)
SCHEMES = {
    2: (1.0,),
    4: (_Y4, 1.0 - 2.0 * _Y4, _Y4),
    6: (_Y6[0], _Y6[1], _Y6[2], 1.0 - 2.0 * sum(_Y6), _Y6[2], _Y6[1], _Y6[0]),
}

STATUS_NAMES = {0: "ok", 1: "collided", 2: "untrapped", 3: "untrapped"}


class CollisionError(RuntimeError):
    pass


class UntrappedError(RuntimeError):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    """Time-stepping settings.

    ``dt=None`` picks ``T_axial / oversampling`` clamped to [10 ns, 50 ns];
    the clamp is dropped if it would break the oversampling requirement.
    ``order`` selects velocity Verlet (2) or its 4th/6th-order compositions.
    The default 6 holds ``E_total`` to ~1e-9 over an exchange; protocol and
    campaign drivers pass 4, which is ~3x cheaper and good to ~1e-6.
    """
    dt: float | None = None
    max_time: float | None = None
    collision_min_separation: float = 1e-6
    oversampling: int = 100
    order: int = 6

    def __post_init__(self):
        if self.order not in SCHEMES:
            raise ValueError(f"order must be one of {sorted(SCHEMES)}")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")

    def resolve_dt(self, f_max: float) -> float:
        if self.dt is not None:
            dt = self.dt
        else:
            period = 1.0 / f_max
            dt = min(max(period / self.oversampling, 10e-9), 50e-9)
            if dt * f_max > 1.0 / self.oversampling:
                dt = period / self.oversampling
        if dt * f_max > 1.0 / self.oversampling * (1 + 1e-12):
            raise ValueError(f"dt = {dt:.3g} s gives fewer than {self.oversampling} "
                             f"steps per axial period at {f_max:.4g} Hz")
        return dt

    @property
    def weights(self):
        return np.array(SCHEMES[self.order])


@dataclass(frozen=True)
class TrajectoryState:
    t: float
    z_a: float
    v_a: float
    z_b: float
    v_b: float
    E_a: float = float("nan")
    E_b: float = float("nan")
    E_int: float = float("nan")
    E_total: float = float("nan")

    def vector(self):
        return np.array([self.z_a, self.v_a, self.z_b, self.v_b, self.t])


@dataclass(frozen=True)
class CouplingAnalytics:
    tau_ex: float          # s
    delta_omega: float     # rad/s
    gamma: float           # Hz, HWHM of the transfer resonance

    @property
    def delta_f(self) -> float:
        return self.delta_omega / (2 * math.pi)


def exchange_time(species_a: ParticleSpecies, species_b: ParticleSpecies,
                  omega_a: float, omega_b: float, s0: float) -> float:
    """Time for a complete resonant energy swap between the two wells."""
    eps0 = CONSTANTS.epsilon0
    return (2 * math.pi**2 * eps0 * s0**3 * math.sqrt(species_a.mass * species_b.mass)
            * math.sqrt(omega_a * omega_b) / abs(species_a.charge * species_b.charge))


def coulomb_detuning(species_a: ParticleSpecies, species_b: ParticleSpecies,
                     omega: float, s0: float) -> float:
    """Signed angular-frequency shift of ``a`` relative to ``b`` from the Coulomb curvature."""
    return ((1 / species_a.mass - 1 / species_b.mass) * species_a.charge * species_b.charge
            * CONSTANTS.coulomb / (omega * s0**3))


def coupling_analytics(species_a, species_b, omega_a, omega_b, s0) -> CouplingAnalytics:
    tau = exchange_time(species_a, species_b, omega_a, omega_b, s0)
    dw = coulomb_detuning(species_a, species_b, math.sqrt(omega_a * omega_b), s0)
    return CouplingAnalytics(tau, dw, 1.0 / (2.0 * tau))


def resonance_width(species_a, species_b, omega_a, omega_b, s0) -> float:
    """HWHM (Hz) of transfer fraction versus detuning: ``1 / (2 tau_ex)``."""
    return 1.0 / (2.0 * exchange_time(species_a, species_b, omega_a, omega_b, s0))


# -- potentials as seen by the kernel ----------------------------------------

class TrajectoryPotential:
    """Potential tables for both particles, optionally a sequence of waypoints.

    Between waypoints the tables are blended linearly in time. Particles may
    share one table (the physical case) or see separate ones (synthetic
    single-particle wells). Energy references are the potential values at each
    particle's well minimum, refined per waypoint.
    """

    def __init__(self, tables_a, tables_b=None, times=None, z_min_a=None, z_min_b=None):
        if isinstance(tables_a, PotentialTable):
            tables_a = [tables_a]
        shared = tables_b is None
        if shared:
            tables_b = tables_a
        elif isinstance(tables_b, PotentialTable):
            tables_b = [tables_b]
        if len(tables_a) != len(tables_b):
            raise ValueError("particles need the same number of waypoints")
        self.shared = shared
        self.tables_a = list(tables_a)
        self.tables_b = list(tables_b)
        self.times = np.zeros(1) if times is None else np.asarray(times, dtype=float)
        if len(self.times) != len(self.tables_a):
            raise ValueError("one time per waypoint required")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("waypoint times must be strictly increasing")
        self.nominal_min_a = z_min_a
        self.nominal_min_b = z_min_b
        self.coeffs_a = np.ascontiguousarray(np.stack([t.coeffs for t in self.tables_a]))
        self.coeffs_b = self.coeffs_a if shared else \
            np.ascontiguousarray(np.stack([t.coeffs for t in self.tables_b]))
        self.z_min_a = np.array([_refine_minimum(t, z_min_a) for t in self.tables_a])
        self.z_min_b = np.array([_refine_minimum(t, z_min_b) for t in self.tables_b])
        self.ref_a = np.array([float(t(z)) for t, z in zip(self.tables_a, self.z_min_a)])
        self.ref_b = np.array([float(t(z)) for t, z in zip(self.tables_b, self.z_min_b)])

    @classmethod
    def static(cls, table, z_min_a, z_min_b, table_b=None):
        return cls(table, table_b, None, z_min_a, z_min_b)

    @property
    def is_static(self) -> bool:
        return len(self.times) == 1

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def with_offset(self, table: PotentialTable) -> "TrajectoryPotential":
        """Same schedule with ``table`` added to every waypoint (static noise)."""
        a = [t + table for t in self.tables_a]
        b = None if self.shared else [t + table for t in self.tables_b]
        return TrajectoryPotential(a, b, self.times, self.nominal_min_a, self.nominal_min_b)

    def _blend(self, which, t):
        K = len(self.times)
        if K == 1:
            return 0, 0.0
        k = int(np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, K - 2))
        w = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
        return k, float(np.clip(w, 0.0, 1.0))

    def _evaluate(self, tables, z, t, order):
        k, w = self._blend(tables, t)
        v = tables[k](z, order)
        if w:
            v = v + w * (tables[k + 1](z, order) - v)
        return v

    def evaluate_a(self, z, t=0.0, order=0):
        return self._evaluate(self.tables_a, z, t, order)

    def evaluate_b(self, z, t=0.0, order=0):
        return self._evaluate(self.tables_b, z, t, order)

    def reference(self, t=0.0):
        k, w = self._blend(None, t)
        if len(self.times) == 1:
            return self.ref_a[0], self.ref_b[0]
        return (self.ref_a[k] + w * (self.ref_a[k + 1] - self.ref_a[k]),
                self.ref_b[k] + w * (self.ref_b[k + 1] - self.ref_b[k]))

    def minima(self, t=0.0):
        k, w = self._blend(None, t)
        if len(self.times) == 1:
            return self.z_min_a[0], self.z_min_b[0]
        return (self.z_min_a[k] + w * (self.z_min_a[k + 1] - self.z_min_a[k]),
                self.z_min_b[k] + w * (self.z_min_b[k + 1] - self.z_min_b[k]))

    @property
    def grid_a(self):
        return self.tables_a[0].z0, self.tables_a[0].h

    @property
    def grid_b(self):
        return self.tables_b[0].z0, self.tables_b[0].h

    def table_range(self):
        ta, tb = self.tables_a[0], self.tables_b[0]
        return (ta.z_min, ta.z_max), (tb.z_min, tb.z_max)


def _refine_minimum(table: PotentialTable, z_guess):
    """Stationary point of ``table`` nearest ``z_guess`` (Newton on the field)."""
    if z_guess is None:
        raise ValueError("a nominal minimum position is required")
    z = float(z_guess)
    for _ in range(50):
        d1 = float(table(z, 1))
        d2 = float(table(z, 2))
        if d2 == 0:
            break
        dz = d1 / d2
        z -= dz
        if abs(dz) < 1e-16 + 1e-14 * abs(z):
            break
    return z


def as_trajectory_potential(potential, z_min_a, z_min_b, z_lo=None, z_hi=None, spacing=None):
    """Wrap a table, composed potential or ready :class:`TrajectoryPotential`."""
    if isinstance(potential, TrajectoryPotential):
        return potential
    if isinstance(potential, PotentialTable):
        return TrajectoryPotential.static(potential, z_min_a, z_min_b)
    z_lo = potential.z_min if z_lo is None else z_lo
    z_hi = potential.z_max if z_hi is None else z_hi
    kw = {} if spacing is None else {"spacing": spacing}
    table = PotentialTable.from_potential(potential, z_lo, z_hi, **kw)
    return TrajectoryPotential.static(table, z_min_a, z_min_b)


# -- forces, energies, stepping ----------------------------------------------

def coulomb_force(z_a, z_b, species_a, species_b):
    """Force on ``a`` from ``b`` (N); the force on ``b`` is its negative."""
    sep = z_a - z_b
    return CONSTANTS.coulomb * species_a.charge * species_b.charge * sep / abs(sep) ** 3


def force(z_a, z_b, potential, species_a, species_b, t=0.0, min_separation=1e-6):
    """Total axial forces ``(F_a, F_b)`` in N.

    ``potential`` is either a :class:`TrajectoryPotential` or any callable
    ``potential(z, order)`` shared by both particles.
    """
    if abs(z_a - z_b) < min_separation:
        raise CollisionError(f"separation {abs(z_a - z_b):.3e} m below guard")
    if isinstance(potential, TrajectoryPotential):
        field_a = float(potential.evaluate_a(z_a, t, 1))
        field_b = float(potential.evaluate_b(z_b, t, 1))
    else:
        field_a = float(potential(z_a, 1))
        field_b = float(potential(z_b, 1))
    fc = coulomb_force(z_a, z_b, species_a, species_b)
    return -species_a.charge * field_a + fc, -species_b.charge * field_b - fc


def coupled_equilibrium(potential: TrajectoryPotential, species_a, species_b, t=0.0):
    """Positions where trap and Coulomb forces balance for both particles."""
    za, zb = potential.minima(t)
    kc = CONSTANTS.coulomb * species_a.charge * species_b.charge
    for _ in range(50):
        fa, fb = force(za, zb, potential, species_a, species_b, t)
        sep = za - zb
        dc = -2 * kc / abs(sep) ** 3     # d(coulomb on a)/d(za)
        ka = -species_a.charge * float(potential.evaluate_a(za, t, 2))
        kb = -species_b.charge * float(potential.evaluate_b(zb, t, 2))
        J = np.array([[ka + dc, -dc], [-dc, kb + dc]])
        dz = np.linalg.solve(J, [-fa, -fb])
        za += dz[0]
        zb += dz[1]
        if np.max(np.abs(dz)) < 1e-18:
            break
    return za, zb


def energy_accounting(state, potential: TrajectoryPotential, species_a, species_b,
                      equilibrium_separation=None):
    """``(E_a, E_b, E_int, E_total)`` in J.

    Particle energies are kinetic plus trap potential energy measured from the
    particle's current well minimum; the mutual Coulomb energy is kept apart
    and measured from its value at ``equilibrium_separation``.
    """
    if not isinstance(state, TrajectoryState):
        za, va, zb, vb, t = state
        state = TrajectoryState(t, za, va, zb, vb)
    ref_a, ref_b = potential.reference(state.t)
    e_a = 0.5 * species_a.mass * state.v_a**2 + species_a.charge * (
        float(potential.evaluate_a(state.z_a, state.t)) - ref_a)
    e_b = 0.5 * species_b.mass * state.v_b**2 + species_b.charge * (
        float(potential.evaluate_b(state.z_b, state.t)) - ref_b)
    kab = CONSTANTS.coulomb * species_a.charge * species_b.charge
    if equilibrium_separation is None:
        za0, zb0 = potential.minima(state.t)
        equilibrium_separation = abs(za0 - zb0)
    e_int = kab / abs(state.z_a - state.z_b) - kab / equilibrium_separation
    return e_a, e_b, e_int, e_a + e_b + e_int


@dataclass
class RunResult:
    state: TrajectoryState
    status: str
    steps: int
    min_energy_a: float
    t_min_energy_a: float
    records: np.ndarray | None = field(default=None, repr=False)
    dt: float = float("nan")

    @property
    def ok(self) -> bool:
        return self.status == "ok"


RECORD_COLUMNS = ("t", "z_a", "v_a", "E_a", "z_b", "v_b", "E_b", "E_int", "E_total")


def run(potential: TrajectoryPotential, species_a: ParticleSpecies, species_b: ParticleSpecies,
        initial, duration: float, config: IntegratorConfig = IntegratorConfig(),
        f_max: float | None = None, record_every: int = 0, bounds=None,
        equilibrium_separation=None, backend: str | None = None) -> RunResult:
    """Integrate for ``duration`` seconds from ``initial`` (state or ``[za, va, zb, vb, t]``).

    ``bounds`` is ``((za_lo, za_hi), (zb_lo, zb_hi))``; leaving them marks the
    run ``"untrapped"``. Defaults to the table ranges.
    """
    if isinstance(initial, TrajectoryState):
        initial = initial.vector()
    state = np.array(initial, dtype=float)
    if f_max is None:
        f_max = _max_local_frequency(potential, species_a, species_b)
    dt = config.resolve_dt(f_max)
    if config.max_time is not None:
        duration = min(duration, config.max_time)
    n_steps = int(round(duration / dt)) if duration > 0 else 0
    if n_steps and abs(n_steps * dt - duration) > 1e-9 * duration:
        dt = duration / n_steps
    if bounds is None:
        bounds = potential.table_range()
    (za_lo, za_hi), (zb_lo, zb_hi) = bounds
    if equilibrium_separation is None:
        za0, zb0 = potential.minima(float(state[4]))
        equilibrium_separation = abs(za0 - zb0)
    kab = CONSTANTS.coulomb * species_a.charge * species_b.charge
    params = np.array([species_a.mass, species_b.mass, species_a.charge, species_b.charge,
                       CONSTANTS.coulomb, za_lo, za_hi, zb_lo, zb_hi,
                       config.collision_min_separation, kab / equilibrium_separation, dt])
    n_rec = (n_steps // record_every + 1) if record_every > 0 else 0
    records = np.zeros((max(n_rec, 1), len(RECORD_COLUMNS)))
    track = np.zeros(2)
    za_g, ha = potential.grid_a
    zb_g, hb = potential.grid_b
    kernel = _backend.get(backend)
    status, steps, got = kernel(
        potential.coeffs_a, za_g, ha, potential.coeffs_b, zb_g, hb,
        potential.times, potential.ref_a, potential.ref_b, state, n_steps, params,
        config.weights, record_every, records, track)
    e = energy_accounting(state, potential, species_a, species_b, equilibrium_separation)
    final = TrajectoryState(state[4], state[0], state[1], state[2], state[3], *e)
    return RunResult(final, STATUS_NAMES[status], int(steps), float(track[0]), float(track[1]),
                     records[:got] if record_every > 0 else None, dt)


def step(state, potential: TrajectoryPotential, config: IntegratorConfig,
         species_a: ParticleSpecies, species_b: ParticleSpecies, f_max=None) -> TrajectoryState:
    """Advance by one time step; raises on collision or escape."""
    if isinstance(state, TrajectoryState):
        state = state.vector()
    if f_max is None:
        f_max = _max_local_frequency(potential, species_a, species_b)
    dt = config.resolve_dt(f_max)
    res = run(potential, species_a, species_b, state, dt,
              IntegratorConfig(dt=dt, collision_min_separation=config.collision_min_separation,
                               oversampling=config.oversampling, order=config.order),
              f_max=f_max)
    if res.status == "collided":
        raise CollisionError("collision guard triggered")
    if res.status == "untrapped":
        raise UntrappedError("particle left the table range")
    return res.state


def _max_local_frequency(potential: TrajectoryPotential, species_a, species_b):
    f = 0.0
    for k in range(len(potential.times)):
        t = potential.times[k]
        za, zb = potential.z_min_a[k], potential.z_min_b[k]
        ka = species_a.charge * float(potential.evaluate_a(za, t, 2))
        kb = species_b.charge * float(potential.evaluate_b(zb, t, 2))
        for kk, m in ((ka, species_a.mass), (kb, species_b.mass)):
            if kk > 0:
                f = max(f, math.sqrt(kk / m) / (2 * math.pi))
    if f == 0.0:
        raise ValueError("no confining well found for either particle")
    return f


# -- single-particle well analytics -------------------------------------------

def turning_points(potential, species: ParticleSpecies, energy: float, z_min: float,
                   limits):
    """Turning points of a particle of ``energy`` (J) in ``q Phi`` around ``z_min``.

    ``limits`` are the barrier positions on either side; raises
    :class:`UntrappedError` if the energy reaches either barrier.
    """
    q = species.charge
    U0 = q * float(potential(z_min, 0))

    def excess(z):
        return q * float(potential(z, 0)) - U0 - energy

    lo, hi = limits
    if excess(lo) <= 0 or excess(hi) <= 0:
        raise UntrappedError(f"energy {energy / CONSTANTS.kB:.4g} K x kB above the barrier")
    z1 = brentq(excess, lo, z_min, xtol=1e-15, rtol=1e-15) if energy > 0 else z_min
    z2 = brentq(excess, z_min, hi, xtol=1e-15, rtol=1e-15) if energy > 0 else z_min
    return z1, z2


def _orbit(potential, species, z_start, t_end=None, stop_at_turn=True):
    """Integrate one particle from rest at ``z_start`` in ``q Phi`` alone.

    Uses only the field, so small energies carry no cancellation error.
    Returns the solve_ivp result; with ``stop_at_turn`` it ends at the next
    turning point.
    """
    q, m = species.charge, species.mass
    curvature = abs(q * float(potential(z_start, 2))) or 1.0
    t_scale = 2 * math.pi / math.sqrt(curvature / m)

    def rhs(t, y):
        return (y[1], -q * float(potential(y[0], 1)) / m)

    def turn(t, y):
        return y[1]
    turn.terminal = True
    turn.direction = -1.0 if float(potential(z_start, 1)) * q < 0 else 1.0

    span = t_end if t_end is not None else 20 * t_scale
    sol = solve_ivp(rhs, (0.0, span), [z_start, 0.0], method="DOP853", rtol=1e-12,
                    atol=[1e-20, 1e-14], max_step=t_scale / 40,
                    events=turn if stop_at_turn else None)
    if stop_at_turn and not sol.t_events[0].size:
        raise UntrappedError("no return within 20 harmonic periods")
    return sol


def axial_frequency_at_energy(potential, species: ParticleSpecies, energy: float,
                              z_min: float, limits) -> float:
    """Oscillation frequency (Hz) of the full anharmonic well at ``energy`` (J)."""
    if energy <= 0:
        curvature = species.charge * float(potential(z_min, 2))
        return math.sqrt(curvature / species.mass) / (2 * math.pi)
    z1, _ = turning_points(potential, species, energy, z_min, limits)
    half = _orbit(potential, species, z1).t_events[0][0]
    return 1.0 / (2.0 * half)


def phase_space_point(potential, species: ParticleSpecies, energy: float, z_min: float,
                      limits, phase: float):
    """``(z, v)`` on the orbit of ``energy`` at oscillation phase ``phase`` in [0, 1).

    Phase 0 is the lower turning point at rest; the first half period moves
    towards +z. The orbit is followed by high-accuracy integration, so the
    point has the requested energy to ~1e-10 relative.
    """
    if energy <= 0:
        return z_min, 0.0
    z1, _ = turning_points(potential, species, energy, z_min, limits)
    phase = phase % 1.0
    if phase == 0.0:
        return z1, 0.0
    half = _orbit(potential, species, z1).t_events[0][0]
    sol = _orbit(potential, species, z1, t_end=2 * half * phase, stop_at_turn=False)
    return float(sol.y[0, -1]), float(sol.y[1, -1])


def ground_state_point(species: ParticleSpecies, omega: float, z_min: float, phase: float,
                       zero_point: bool = True):
    """Classical ground-state placement: energy hbar*omega/2 (or 0) at ``phase``."""
    if not zero_point:
        return z_min, 0.0
    energy = 0.5 * CONSTANTS.hbar * omega
    amp = math.sqrt(2 * energy / (species.mass * omega**2))
    ang = 2 * math.pi * phase
    return z_min + amp * math.cos(ang), -amp * omega * math.sin(ang)
