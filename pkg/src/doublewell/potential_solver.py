"""Constrained minimum-norm voltage solving and double-well characterization."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .core import CONSTANTS, ConfigurationError, ParticleSpecies, to_kelvin
from .electrode_model import ElectrodeBasis

VOLTAGE_LIMIT = 10.0


class InfeasibleSpecError(ValueError):
    pass


class RankDeficientError(np.linalg.LinAlgError):
    def __init__(self, message, combination):
        super().__init__(message)
        self.combination = combination


class CharacterizationError(RuntimeError):
    pass


class VoltageLimitWarning(UserWarning):
    pass


@dataclass(frozen=True)
class DoubleWellSpec:
    """Target double well.

    Particle ``a`` sits at ``delta_s0 - s0/2`` and particle ``b`` (the cooling
    ion) at ``delta_s0 + s0/2``, so a positive offset moves the pair midpoint
    towards the cooling-ion side of the central electrode.
    """
    species_a: ParticleSpecies
    species_b: ParticleSpecies
    s0: float
    omega_a: float
    omega_b: float
    delta_s0: float = 0.0
    null_higher_orders: bool = True

    def __post_init__(self):
        if not self.s0 > 0:
            raise ConfigurationError("s0 must be positive")
        if not (self.omega_a > 0 and self.omega_b > 0):
            raise ConfigurationError("well frequencies must be positive")

    @classmethod
    def from_frequencies(cls, species_a, species_b, f_a, s0, f_b=None, delta_s0=0.0,
                         null_higher_orders=True, compensate=False):
        """Build from ordinary frequencies in Hz.

        With ``compensate`` the cooling-ion well is detuned by the Coulomb
        frequency shift so that the coupled pair is resonant.
        """
        if f_b is None:
            f_b = f_a
        if compensate:
            from .dynamics import coulomb_detuning
            f_b = f_b + coulomb_detuning(species_a, species_b, 2 * math.pi * f_a, s0) / (2 * math.pi)
        return cls(species_a, species_b, s0, 2 * math.pi * f_a, 2 * math.pi * f_b,
                   delta_s0, null_higher_orders)

    @property
    def z_a0(self) -> float:
        return self.delta_s0 - 0.5 * self.s0

    @property
    def z_b0(self) -> float:
        return self.delta_s0 + 0.5 * self.s0

    @property
    def f_a(self) -> float:
        return self.omega_a / (2 * math.pi)

    @property
    def f_b(self) -> float:
        return self.omega_b / (2 * math.pi)

    def with_(self, **changes) -> "DoubleWellSpec":
        return replace(self, **changes)

    def curvature_targets(self):
        """Required d2Phi/dz2 at each minimum: m omega^2 / q (V/m^2)."""
        a, b = self.species_a, self.species_b
        return (a.mass * self.omega_a**2 / a.charge, b.mass * self.omega_b**2 / b.charge)


@dataclass(frozen=True)
class Constraints:
    matrix: np.ndarray
    targets: np.ndarray
    labels: tuple
    row_scales: np.ndarray

    @property
    def condition_number(self) -> float:
        s = np.linalg.svd(self.matrix / self.row_scales[:, None], compute_uv=False)
        return float(s[0] / s[-1])


@dataclass(frozen=True)
class VoltageSet:
    voltages: np.ndarray
    residual: float
    norm: float

    def __post_init__(self):
        self.voltages.setflags(write=False)

    def __len__(self):
        return len(self.voltages)

    @property
    def max_abs(self) -> float:
        return float(np.abs(self.voltages).max())


def assemble_constraints(spec: DoubleWellSpec, basis: ElectrodeBasis) -> Constraints:
    orders = (1, 2, 3, 4) if spec.null_higher_orders else (1, 2)
    n_rows = 2 * len(orders)
    if n_rows > basis.n_electrodes:
        raise InfeasibleSpecError(
            f"{n_rows} constraint rows but only {basis.n_electrodes} electrodes")
    for z in (spec.z_a0, spec.z_b0):
        if not basis.z_min < z < basis.z_max:
            raise InfeasibleSpecError(f"minimum at {z} m lies outside the basis domain")
    curv_a, curv_b = spec.curvature_targets()
    rows, targets, labels = [], [], []
    for order in orders:
        for name, z in (("a", spec.z_a0), ("b", spec.z_b0)):
            rows.append(basis.evaluate_all(z, order))
            if order == 2:
                targets.append(curv_a if name == "a" else curv_b)
            else:
                targets.append(0.0)
            labels.append(f"d{order}phi({name})")
    matrix = np.array(rows)
    scales = np.abs(matrix).max(axis=1)
    return Constraints(matrix, np.array(targets), tuple(labels), scales)


def solve_min_norm(matrix, targets, row_scales=None, rcond: float = 1e-10) -> VoltageSet:
    """Minimum-Euclidean-norm exact solution of ``matrix @ V = targets`` via SVD.

    Rows are divided by ``row_scales`` (default: each row's max magnitude)
    before factorizing; the scaled and unscaled systems share their exact
    solutions so the returned voltages do not depend on the scaling.
    """
    A = np.asarray(matrix, dtype=float)
    t = np.asarray(targets, dtype=float)
    if row_scales is None:
        row_scales = np.abs(A).max(axis=1)
    row_scales = np.where(row_scales > 0, row_scales, 1.0)
    As = A / row_scales[:, None]
    ts = t / row_scales
    U, s, Vt = np.linalg.svd(As, full_matrices=False)
    if s[-1] <= rcond * s[0]:
        combo = U[:, -1] / row_scales
        raise RankDeficientError(
            "constraint rows are linearly dependent; offending combination "
            f"(row weights) = {np.array2string(combo, precision=3)}", combo)
    V = Vt.T @ ((U.T @ ts) / s)
    resid = float(np.max(np.abs(A @ V - t)))
    vs = VoltageSet(V, resid, float(np.linalg.norm(V)))
    if vs.max_abs > VOLTAGE_LIMIT:
        warnings.warn(f"electrode voltage {vs.max_abs:.2f} V exceeds {VOLTAGE_LIMIT} V",
                      VoltageLimitWarning, stacklevel=2)
    return vs


class ComposedPotential:
    """``Phi(z) = sum_i V_i phi_i(z)`` with derivatives of order 0..4."""

    def __init__(self, voltages, basis: ElectrodeBasis):
        v = np.asarray(getattr(voltages, "voltages", voltages), dtype=float)
        if v.shape != (basis.n_electrodes,):
            raise ValueError(f"expected {basis.n_electrodes} voltages, got {v.shape}")
        self.voltages = v
        self.basis = basis
        self.z_min, self.z_max = basis.z_min, basis.z_max

    def __call__(self, z, order: int = 0):
        return self.evaluate(z, order)

    def evaluate(self, z, order: int = 0):
        return np.tensordot(self.voltages, self.basis.evaluate_all(z, order), axes=1)

    def field_scale(self) -> float:
        z = np.linspace(self.z_min, self.z_max, 2001)
        return float(np.abs(self.evaluate(z, 1)).max()) or 1.0


def compose(voltages, basis: ElectrodeBasis) -> ComposedPotential:
    return ComposedPotential(voltages, basis)


def solve_double_well(spec: DoubleWellSpec, basis: ElectrodeBasis):
    """Assemble, solve and compose in one call; returns ``(VoltageSet, potential)``."""
    c = assemble_constraints(spec, basis)
    vs = solve_min_norm(c.matrix, c.targets, c.row_scales)
    return vs, compose(vs, basis)


# -- characterization ---------------------------------------------------------

@dataclass
class WellInfo:
    species: ParticleSpecies
    z_min: float
    f_local: float
    depth: float                      # K
    barriers: dict                    # side -> (z, energy K) ; None if no barrier that side
    trapping_region: tuple
    harmonic_boundary: float | None = None   # K
    harmonic_region: tuple | None = None

    @property
    def depth_energy(self) -> float:
        return self.depth * CONSTANTS.kB


@dataclass
class WellCharacterization:
    a: WellInfo
    b: WellInfo
    potential: object = field(repr=False, default=None)

    def as_dict(self):
        out = {}
        for key, w in (("a", self.a), ("b", self.b)):
            out[key] = {
                "species": w.species.name,
                "z_min_m": w.z_min,
                "f_local_Hz": w.f_local,
                "depth_K": w.depth,
                "trapping_region_m": list(w.trapping_region),
                "harmonic_boundary_K": w.harmonic_boundary,
                "harmonic_region_m": list(w.harmonic_region) if w.harmonic_region else None,
            }
        return out


def _locate_minimum(potential, z0, sp: ParticleSpecies, tol_field, width):
    def field(z):
        return float(potential(z, 1))

    lo, hi = z0 - 1e-9, z0 + 1e-9
    # expand until the field changes sign with a restoring orientation
    step = 1e-7
    for _ in range(60):
        flo, fhi = field(lo), field(hi)
        if sp.charge * flo <= 0 <= sp.charge * fhi:
            break
        lo, hi = max(lo - step, potential.z_min), min(hi + step, potential.z_max)
        step *= 1.6
        if hi - lo > width:
            raise CharacterizationError(f"no {sp.name} minimum found near z = {z0:.6g} m")
    else:
        raise CharacterizationError(f"no {sp.name} minimum found near z = {z0:.6g} m")
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    z = brentq(field, lo, hi, xtol=1e-16, rtol=1e-15, maxiter=200)
    if abs(field(z)) > tol_field:
        # brentq stops on the bracket width; polish with Newton
        for _ in range(5):
            z -= field(z) / float(potential(z, 2))
    return z


def _find_barrier(potential, z_start, direction, sp: ParticleSpecies, limit, step=2e-6):
    """Walk from ``z_start`` in ``direction`` until qPhi stops rising; return barrier z or None."""
    q = sp.charge
    grid = np.arange(z_start, limit, direction * step) if direction > 0 else \
        np.arange(z_start, limit, -step)
    grid = grid[1:]
    if grid.size == 0:
        return None
    slope = direction * q * potential(grid, 1)   # > 0 while climbing away
    turn = np.nonzero(slope <= 0)[0]
    if turn.size == 0:
        return None
    j = turn[0]
    if j == 0:
        lo, hi = z_start, grid[0]
    else:
        lo, hi = grid[j - 1], grid[j]
    a, b = sorted((lo, hi))
    fa, fb = float(potential(a, 1)), float(potential(b, 1))
    if fa * fb > 0:
        # turn within the first step of a flat minimum; the grid point is as good as it gets
        return hi
    return brentq(lambda z: float(potential(z, 1)), a, b, xtol=1e-13)


def _well_info(potential, z0, sp, partner, z_partner, tol_field, width):
    zmin = _locate_minimum(potential, z0, sp, tol_field, width)
    curvature = sp.charge * float(potential(zmin, 2))
    if curvature <= 0:
        raise CharacterizationError(f"{sp.name}: non-positive curvature at z = {zmin:.6g}")
    f_local = math.sqrt(curvature / sp.mass) / (2 * math.pi)
    U0 = sp.charge * float(potential(zmin, 0))
    toward = 1 if z_partner > zmin else -1
    attractive = sp.charge * partner.charge < 0
    barriers = {}
    for direction in (-1, 1):
        side = "toward_partner" if direction == toward else "far_side"
        limit = potential.z_max if direction > 0 else potential.z_min
        zb = _find_barrier(potential, zmin, direction, sp, limit)
        if zb is None:
            zb = limit   # climbs all the way to the grounded end of the domain
        energy = to_kelvin(sp.charge * float(potential(zb, 0)) - U0)
        barriers[side] = (zb, energy)
    candidates = {k: v for k, v in barriers.items()
                  if not (attractive and k == "toward_partner")}
    depth = min(e for _, e in candidates.values())
    region = _energy_interval(potential, sp, zmin, U0, depth * CONSTANTS.kB, barriers)
    return WellInfo(sp, zmin, f_local, depth, barriers, region)


def _energy_interval(potential, sp, zmin, U0, energy, barriers):
    """Interval around ``zmin`` where ``q(Phi - Phi_min) < energy``."""
    def excess(z):
        return sp.charge * float(potential(z, 0)) - U0 - energy

    ends = []
    for side, (zb, _) in barriers.items():
        if excess(zb) < 0:
            ends.append(zb)
        else:
            ends.append(brentq(excess, *sorted((zmin, zb)), xtol=1e-13))
    return tuple(sorted(ends))


def characterize(potential, spec: DoubleWellSpec) -> WellCharacterization:
    """Locate both minima, their local frequencies, depths and trapping regions."""
    tol_field = 1e-12 * potential.field_scale()
    width = 0.5 * spec.s0
    try:
        a = _well_info(potential, spec.z_a0, spec.species_a, spec.species_b, spec.z_b0,
                       tol_field, width)
        b = _well_info(potential, spec.z_b0, spec.species_b, spec.species_a, spec.z_a0,
                       tol_field, width)
    except CharacterizationError as exc:
        z = np.linspace(spec.z_a0 - spec.s0, spec.z_b0 + spec.s0, 21)
        z = z[(z > potential.z_min) & (z < potential.z_max)]
        scan = ", ".join(f"{zi * 1e3:.3f}mm:{float(potential(zi, 1)):.3e}" for zi in z)
        raise CharacterizationError(f"{exc}; field scan [{scan}]") from exc
    return WellCharacterization(a, b, potential)


def set_harmonic_boundary(well: WellInfo, potential, energy_K: float) -> WellInfo:
    """Fill the harmonic boundary and its spatial extent into ``well``."""
    U0 = well.species.charge * float(potential(well.z_min, 0))
    energy_K = min(energy_K, well.depth)
    well.harmonic_boundary = energy_K
    well.harmonic_region = _energy_interval(potential, well.species, well.z_min, U0,
                                            energy_K * CONSTANTS.kB, well.barriers)
    return well


def optimize_offset(spec: DoubleWellSpec, basis: ElectrodeBasis, offsets=None,
                    objective=None):
    """Scan the pair offset and return ``(best_offset, table)``.

    ``objective(spec, basis) -> float`` defaults to the harmonic-boundary
    energy; ``table`` is a list of ``(offset, value)``. Returns offset 0 when
    nothing beats the centred configuration.
    """
    if objective is None:
        from .protocols import harmonic_boundary

        def objective(s, b):
            return harmonic_boundary(s, b).energy_K
    if offsets is None:
        offsets = np.arange(-150e-6, 150e-6 + 0.5e-6, 1e-6)
    offsets = np.asarray(offsets, dtype=float)
    if np.any(np.abs(offsets) > 150e-6 + 1e-12):
        raise ConfigurationError("offset grid must lie within +-150 um")
    table = []
    for d in offsets:
        try:
            value = objective(spec.with_(delta_s0=float(d)), basis)
        except (CharacterizationError, RankDeficientError, InfeasibleSpecError):
            value = float("nan")
        table.append((float(d), float(value)))
    values = np.array([v for _, v in table])
    zero = [v for d, v in table if abs(d) < 1e-12]
    if not np.any(np.isfinite(values)):
        return 0.0, table
    best = int(np.nanargmax(values))
    if zero and np.isfinite(zero[0]) and values[best] <= zero[0]:
        return 0.0, table
    return table[best][0], table
