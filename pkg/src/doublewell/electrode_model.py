"""On-axis electrode basis potentials for a cylindrical electrode stack.

Two sources are supported:

* an analytic surrogate: the axial solution of Laplace's equation inside an
  ideal grounded cylinder whose wall carries 1 V on one electrode, 0 V on the
  others, with linear ramps across the gaps;
* imported tabulated data (e.g. from a finite-element model), interpolated
  with C4 quintic splines.

Both give ``phi_i(z)`` and its first four derivatives for unit voltage on
electrode ``i``.
"""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import make_interp_spline
from scipy.special import i0e

from .core import ConfigurationError

MAX_ORDER = 4


class DomainError(ValueError):
    pass


class TruncationError(RuntimeError):
    pass


class IngestionError(ValueError):
    pass


class BasisSource(str, enum.Enum):
    ANALYTIC_SURROGATE = "analytic_surrogate"
    IMPORTED_TABLE = "imported_table"


@dataclass(frozen=True)
class TrapGeometry:
    """Electrode stack layout. Lengths in metres.

    ``axial_extent`` is the half-length of the grounded simulation domain;
    ``None`` selects stack half-length + 2 mm.
    """
    n_electrodes: int = 9
    electrode_width: float = 200e-6
    gap: float = 50e-6
    inner_radius: float = 400e-6
    axial_extent: float | None = None

    def __post_init__(self):
        if self.n_electrodes < 5:
            raise ConfigurationError("need at least 5 electrodes")
        for name in ("electrode_width", "gap", "inner_radius"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.axial_extent is None:
            object.__setattr__(self, "axial_extent", self.stack_half_length + 2e-3)
        if not self.axial_extent > self.stack_half_length:
            raise ConfigurationError("axial_extent must exceed the stack half-length")

    @property
    def pitch(self) -> float:
        return self.electrode_width + self.gap

    @property
    def stack_half_length(self) -> float:
        n = self.n_electrodes
        return 0.5 * (n * self.electrode_width + (n - 1) * self.gap)

    @property
    def centers(self) -> np.ndarray:
        n = self.n_electrodes
        return (np.arange(n) - 0.5 * (n - 1)) * self.pitch

    @property
    def central_electrode(self) -> int:
        return self.n_electrodes // 2


class ElectrodeBasis:
    """Unit-voltage basis potentials ``phi_i(z)``; immutable after construction."""

    source: BasisSource
    geometry: TrapGeometry
    z_min: float
    z_max: float

    @property
    def n_electrodes(self) -> int:
        return self.geometry.n_electrodes

    def _check(self, z, order):
        if order not in range(MAX_ORDER + 1):
            raise ValueError(f"derivative order must be in 0..{MAX_ORDER}, got {order}")
        z = np.asarray(z, dtype=float)
        if np.any(z < self.z_min) or np.any(z > self.z_max) or np.any(~np.isfinite(z)):
            raise DomainError(
                f"z outside basis domain [{self.z_min:.6g}, {self.z_max:.6g}] m")
        return z

    def evaluate_all(self, z, order: int = 0) -> np.ndarray:
        """Return array of shape ``(n_electrodes,) + z.shape``."""
        raise NotImplementedError

    def evaluate(self, electrode: int, z, order: int = 0):
        if not 0 <= electrode < self.n_electrodes:
            raise IndexError(f"electrode index {electrode} out of range")
        return self.evaluate_all(z, order)[electrode]


class AnalyticBasis(ElectrodeBasis):
    """Eigenfunction-series solution for an ideal cylinder, grounded at ``z = +-L``.

    On the axis each electrode contributes
    ``phi(z) = sum_n b_n sin(k_n (z + L)) / I0(k_n R)`` with ``k_n = n pi / 2L``,
    where ``b_n`` are the sine coefficients of the trapezoidal wall profile.
    Derivatives are taken term by term.
    """

    source = BasisSource.ANALYTIC_SURROGATE

    def __init__(self, geometry: TrapGeometry, series_terms: int = 200):
        if series_terms < 50:
            raise ConfigurationError("series_terms must be >= 50")
        self.geometry = geometry
        self.series_terms = int(series_terms)
        L = geometry.axial_extent
        self.z_min, self.z_max = -L, L
        self._L = L
        n = np.arange(1, self.series_terms + 1)
        self._k = n * math.pi / (2.0 * L)
        self._amplitudes = self._coefficients(self._k)
        self._amplitudes.setflags(write=False)

    def _coefficients(self, k):
        """Axis amplitudes ``b_n / I0(k_n R)``, shape (n_electrodes, len(k))."""
        g = self.geometry
        L, w, gap, R = self._L, g.electrode_width, g.gap, g.inner_radius
        D = 2.0 * L
        c = g.centers[:, None] + L
        corners = (c - 0.5 * w - gap, c - 0.5 * w, c + 0.5 * w, c + 0.5 * w + gap)
        kk = k[None, :]
        jump_sum = (np.sin(kk * corners[0]) - np.sin(kk * corners[1])
                    - np.sin(kk * corners[2]) + np.sin(kk * corners[3]))
        b = -(2.0 / D) * jump_sum / (gap * kk**2)
        x = kk * R
        return b * np.exp(-x) / i0e(x)

    def evaluate_all(self, z, order: int = 0) -> np.ndarray:
        z = self._check(z, order)
        phase = np.multiply.outer(z + self._L, self._k) + 0.5 * math.pi * order
        terms = np.sin(phase) * self._k**order
        out = terms @ self._amplitudes.T
        return np.moveaxis(out, -1, 0)

    def tail_bound(self, order: int = 0) -> float:
        """Upper bound on the truncation error of the order-``order`` derivative.

        Uses ``|b_n| <= 8 / (D g k_n^2)``; valid for every ``z`` on the axis.
        """
        g = self.geometry
        D = 2.0 * self._L
        n = np.arange(self.series_terms + 1, 40 * self.series_terms + 1)
        k = n * math.pi / D
        x = k * g.inner_radius
        terms = 8.0 / (D * g.gap * k**2) * k**order * np.exp(-x) / i0e(x)
        return float(terms.sum())

    def peak_magnitude(self, order: int = 0) -> float:
        z = np.linspace(self.z_min, self.z_max, 4001)
        return float(np.abs(self.evaluate_all(z, order)).max())


def build_analytic_basis(geometry: TrapGeometry | None = None, series_terms: int = 200,
                         tolerance: float = 1e-9) -> AnalyticBasis:
    """Analytic surrogate basis with a certified truncation tail.

    Raises :class:`TruncationError` when the tail bound for any derivative order
    exceeds ``tolerance`` times that order's peak magnitude.
    """
    basis = AnalyticBasis(geometry or TrapGeometry(), series_terms)
    for order in range(MAX_ORDER + 1):
        bound = basis.tail_bound(order)
        peak = basis.peak_magnitude(order)
        if bound > tolerance * peak:
            raise TruncationError(
                f"series tail bound {bound:.3e} for derivative order {order} exceeds "
                f"{tolerance:g} x peak ({peak:.3e}); increase series_terms")
    return basis


class TabulatedBasis(ElectrodeBasis):
    """Basis interpolated from uniform-grid samples with quintic (C4) splines."""

    source = BasisSource.IMPORTED_TABLE

    def __init__(self, z, phi, dphi, geometry: TrapGeometry | None = None):
        z = np.asarray(z, dtype=float)
        phi = np.atleast_2d(np.asarray(phi, dtype=float))
        dphi = np.atleast_2d(np.asarray(dphi, dtype=float))
        n = phi.shape[0]
        self.geometry = geometry or TrapGeometry(n_electrodes=max(n, 5))
        if self.geometry.n_electrodes != n:
            raise IngestionError(
                f"table has {n} electrodes but geometry declares {self.geometry.n_electrodes}")
        self.z = z
        self.z_min, self.z_max = float(z[0]), float(z[-1])
        h = z[1] - z[0]
        self._splines = []
        for p, d in zip(phi, dphi):
            # clamp both ends with the supplied field; curvature from its differences
            s0 = (-3 * d[0] + 4 * d[1] - d[2]) / (2 * h)
            s1 = (3 * d[-1] - 4 * d[-2] + d[-3]) / (2 * h)
            bc = ([(1, d[0]), (2, s0)], [(1, d[-1]), (2, s1)])
            self._splines.append(make_interp_spline(z, p, k=5, bc_type=bc))
        fitted = np.array([s(z, 1) for s in self._splines])
        # a field-free table (constant potential) is judged against phi / length
        scale = max(np.abs(dphi).max(), np.abs(phi).max() / (self.z_max - self.z_min), 1e-300)
        self.derivative_mismatch = float(np.abs(fitted - dphi).max() / scale)

    def evaluate_all(self, z, order: int = 0) -> np.ndarray:
        z = self._check(z, order)
        return np.stack([s(z, order) for s in self._splines])


def import_basis(source, geometry: TrapGeometry | None = None,
                 derivative_tolerance: float = 1e-3) -> TabulatedBasis:
    """Read a basis table: CSV with header ``z,phi_1,dphi_1,...,phi_n,dphi_n``.

    ``source`` may be a path or an open text stream. All values SI.
    """
    if isinstance(source, (str, Path)):
        with open(source, newline="") as fh:
            rows = list(csv.reader(fh))
    elif isinstance(source, io.TextIOBase) or hasattr(source, "read"):
        rows = list(csv.reader(source))
    else:
        raise TypeError("source must be a path or a text stream")
    if not rows:
        raise IngestionError("empty basis table")
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "z" or (len(header) - 1) % 2:
        raise IngestionError("header must be z,phi_1,dphi_1,...,phi_n,dphi_n")
    n = (len(header) - 1) // 2
    for i in range(n):
        expected = (f"phi_{i + 1}", f"dphi_{i + 1}")
        got = tuple(header[1 + 2 * i: 3 + 2 * i])
        if got != expected:
            raise IngestionError(f"missing column(s) {expected}; found {got}")
    data = np.empty((len(rows) - 1, len(header)))
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise IngestionError(f"row {r}: expected {len(header)} columns, got {len(row)}")
        for c, cell in enumerate(row):
            try:
                value = float(cell)
            except ValueError:
                raise IngestionError(f"row {r}, column {header[c]!r}: not a number ({cell!r})") from None
            if not math.isfinite(value):
                raise IngestionError(f"row {r}, column {header[c]!r}: non-finite value")
            data[r - 2, c] = value
    if data.shape[0] < 6:
        raise IngestionError("need at least 6 grid points")
    z = data[:, 0]
    steps = np.diff(z)
    if np.any(steps <= 0):
        bad = int(np.argmax(steps <= 0)) + 3
        raise IngestionError(f"row {bad}: z grid not strictly increasing")
    h = steps.mean()
    off = np.abs(steps - h) > 1e-6 * h
    if np.any(off):
        raise IngestionError(f"row {int(np.argmax(off)) + 3}: z grid not uniform")
    if geometry is not None and h > geometry.electrode_width / 10:
        raise IngestionError(
            f"grid spacing {h:.3g} m gives fewer than 10 samples per electrode width")
    basis = TabulatedBasis(z, data[:, 1::2].T, data[:, 2::2].T, geometry)
    if basis.derivative_mismatch > derivative_tolerance:
        raise IngestionError(
            f"supplied field columns disagree with the interpolated potential "
            f"(relative mismatch {basis.derivative_mismatch:.2e})")
    return basis


def export_basis(basis: ElectrodeBasis, z, path) -> None:
    """Write ``basis`` sampled at ``z`` in the import CSV layout."""
    z = np.asarray(z, dtype=float)
    phi = basis.evaluate_all(z, 0)
    dphi = basis.evaluate_all(z, 1)
    header = ["z"]
    for i in range(basis.n_electrodes):
        header += [f"phi_{i + 1}", f"dphi_{i + 1}"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for j, zj in enumerate(z):
            row = [repr(float(zj))]
            for i in range(basis.n_electrodes):
                row += [repr(float(phi[i, j])), repr(float(dphi[i, j]))]
            w.writerow(row)


def evaluate(basis: ElectrodeBasis, electrode: int, z, order: int = 0):
    return basis.evaluate(electrode, z, order)
