"""Piecewise quintic Hermite tables of on-axis potentials.

The trajectory kernels never call the series basis directly: every potential
is first sampled (value, first and second derivative) on a uniform grid and
turned into a C2 piecewise quintic. Tables are linear in their data, so the
table of ``sum_i V_i phi_i`` equals ``sum_i V_i`` times the table of ``phi_i``.
"""
from __future__ import annotations

import numpy as np

DEFAULT_SPACING = 5e-6


def hermite_coefficients(f, d1, d2, h):
    """Quintic coefficients per cell from node values and derivatives.

    Samples run along the last axis. Returns ``(..., n - 1, 6)`` coefficients
    of ``p(x) = sum_j c_j x^j`` with ``x = (z - z_left) / h``.
    """
    f0, f1 = f[..., :-1], f[..., 1:]
    d0, e1 = h * d1[..., :-1], h * d1[..., 1:]
    s0, s1 = h * h * d2[..., :-1], h * h * d2[..., 1:]
    df = f1 - f0
    c = np.empty(f0.shape + (6,))
    c[..., 0] = f0
    c[..., 1] = d0
    c[..., 2] = 0.5 * s0
    c[..., 3] = 10 * df - 6 * d0 - 4 * e1 - 1.5 * s0 + 0.5 * s1
    c[..., 4] = -15 * df + 8 * d0 + 7 * e1 + 1.5 * s0 - s1
    c[..., 5] = 6 * df - 3 * d0 - 3 * e1 - 0.5 * s0 + 0.5 * s1
    return c


class PotentialTable:
    """One potential ``Phi(z)`` (volts) on a uniform grid of ``ncell`` cells."""

    def __init__(self, z0: float, h: float, coeffs):
        coeffs = np.ascontiguousarray(coeffs, dtype=float)
        if coeffs.ndim != 2 or coeffs.shape[1] != 6:
            raise ValueError("coefficients must have shape (ncell, 6)")
        self.z0 = float(z0)
        self.h = float(h)
        self.coeffs = coeffs

    @property
    def ncell(self) -> int:
        return self.coeffs.shape[0]

    @property
    def z_min(self) -> float:
        return self.z0

    @property
    def z_max(self) -> float:
        return self.z0 + self.ncell * self.h

    @classmethod
    def from_samples(cls, z, f, d1, d2):
        z = np.asarray(z, dtype=float)
        h = (z[-1] - z[0]) / (len(z) - 1)
        return cls(z[0], h, hermite_coefficients(np.asarray(f), np.asarray(d1),
                                                 np.asarray(d2), h))

    @classmethod
    def from_potential(cls, potential, z_lo, z_hi, spacing=DEFAULT_SPACING):
        """Sample any ``potential(z, order)`` callable."""
        n = max(int(np.ceil((z_hi - z_lo) / spacing)), 1)
        z = np.linspace(z_lo, z_hi, n + 1)
        return cls.from_samples(z, potential(z, 0), potential(z, 1), potential(z, 2))

    @classmethod
    def harmonic(cls, curvature, center, z_lo, z_hi, offset=0.0, n_cells=4):
        """``offset + curvature (z - center)^2 / 2``; reproduced exactly."""
        z = np.linspace(z_lo, z_hi, n_cells + 1)
        x = z - center
        return cls.from_samples(z, offset + 0.5 * curvature * x**2, curvature * x,
                                np.full_like(z, curvature))

    def _cell(self, z):
        z = np.asarray(z, dtype=float)
        x = (z - self.z0) / self.h
        j = np.clip(np.floor(x).astype(np.int64), 0, self.ncell - 1)
        return j, x - j

    def evaluate(self, z, order: int = 0):
        j, x = self._cell(z)
        c = self.coeffs[j]
        powers = np.arange(6)
        if order == 0:
            coef = c
            p = powers
        else:
            coef = c[..., order:] * _falling(powers[order:], order)
            p = powers[order:] - order
        out = np.sum(coef * np.power.outer(x, p), axis=-1)
        return out / self.h**order

    __call__ = evaluate

    def __add__(self, other: "PotentialTable") -> "PotentialTable":
        self._check_compatible(other)
        return PotentialTable(self.z0, self.h, self.coeffs + other.coeffs)

    def __mul__(self, scalar: float) -> "PotentialTable":
        return PotentialTable(self.z0, self.h, self.coeffs * scalar)

    __rmul__ = __mul__

    def _check_compatible(self, other):
        if (other.ncell != self.ncell or not np.isclose(other.z0, self.z0)
                or not np.isclose(other.h, self.h)):
            raise ValueError("tables live on different grids")


def _falling(n, k):
    out = np.ones_like(n, dtype=float)
    for i in range(k):
        out = out * (n - i)
    return out


class BasisTables:
    """Per-electrode tables on one shared grid; combine with voltages."""

    def __init__(self, basis, z_lo=None, z_hi=None, spacing=DEFAULT_SPACING):
        z_lo = basis.z_min if z_lo is None else max(z_lo, basis.z_min)
        z_hi = basis.z_max if z_hi is None else min(z_hi, basis.z_max)
        n = max(int(np.ceil((z_hi - z_lo) / spacing)), 1)
        z = np.linspace(z_lo, z_hi, n + 1)
        self.h = (z_hi - z_lo) / n
        self.z0 = z_lo
        f = basis.evaluate_all(z, 0)
        d1 = basis.evaluate_all(z, 1)
        d2 = basis.evaluate_all(z, 2)
        self.coeffs = hermite_coefficients(f, d1, d2, self.h)   # (n_el, ncell, 6)
        self.coeffs.setflags(write=False)

    @property
    def n_electrodes(self) -> int:
        return self.coeffs.shape[0]

    def combine(self, voltages) -> PotentialTable:
        v = np.asarray(getattr(voltages, "voltages", voltages), dtype=float)
        return PotentialTable(self.z0, self.h, np.tensordot(v, self.coeffs, axes=1))

    def electrode(self, i) -> PotentialTable:
        return PotentialTable(self.z0, self.h, self.coeffs[i])
