"""Thermal initialization, voltage noise and Monte Carlo campaigns."""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import dynamics as dyn
from .core import CONSTANTS
from .potential_solver import VoltageSet

OUTCOMES = ("cooled", "untrapped", "collided", "failed")


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for sample ``index`` of a campaign seeded with ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


@dataclass(frozen=True)
class BoltzmannSampler:
    """Axial energies of a particle thermalized at ``T_z`` (K).

    The one-dimensional oscillator energy is exponentially distributed with
    mean ``k_B T_z``.
    """
    T_z: float = 4.0
    seed: int = 0

    def __post_init__(self):
        if not self.T_z > 0:
            raise ValueError("T_z must be positive")

    def energy(self, u):
        """Inverse CDF: energy (J) for uniform deviate(s) ``u`` in [0, 1)."""
        u = np.asarray(u, dtype=float)
        return -CONSTANTS.kB * self.T_z * np.log1p(-u)

    def draw(self, rng: np.random.Generator, size=None):
        return self.energy(rng.random(size))

    def fraction_above(self, energy_K: float) -> float:
        return math.exp(-energy_K / self.T_z)


def sample_initial_energy(sampler: BoltzmannSampler, rng: np.random.Generator | None = None):
    if rng is None:
        rng = np.random.default_rng(sampler.seed)
    return float(sampler.draw(rng))


@dataclass(frozen=True)
class VoltageNoise:
    """Static Gaussian offsets, one per electrode, held for a whole trajectory."""
    sigma_V: float = 250e-9
    mode: str = "static_per_run"

    def __post_init__(self):
        if self.sigma_V < 0:
            raise ValueError("sigma_V must be non-negative")
        if self.mode != "static_per_run":
            raise ValueError("only static per-run noise is modelled")

    def draw(self, rng: np.random.Generator, n_electrodes: int) -> np.ndarray:
        offsets = rng.standard_normal(n_electrodes)
        return self.sigma_V * offsets


def apply_voltage_noise(target, noise: VoltageNoise, rng: np.random.Generator):
    """Perturb a voltage array, :class:`VoltageSet` or sweep schedule by one noise draw."""
    from .protocols import SweepSchedule

    if isinstance(target, SweepSchedule):
        return target.with_voltage_offsets(noise.draw(rng, target.voltages.shape[1]))
    if isinstance(target, VoltageSet):
        v = target.voltages + noise.draw(rng, len(target))
        return VoltageSet(v, target.residual, float(np.linalg.norm(v)))
    v = np.asarray(target, dtype=float)
    return v + noise.draw(rng, v.shape[-1])


# -- stages a campaign can run -------------------------------------------------

@dataclass
class SweepStage:
    """``n_sweeps`` passes of a sweep schedule per sample."""
    schedule: object
    n_sweeps: int = 2
    basis: object = None
    config: dyn.IntegratorConfig = dyn.IntegratorConfig(order=4)
    backend: str | None = None

    def prepare(self):
        prep = self.schedule.prepare(self.basis)
        return prep.depth_a, self.schedule.voltages.shape[1]

    def __call__(self, E_init, offsets, rng):
        from .protocols import run_sweep
        r = run_sweep(self.schedule, E_init, offsets, basis=self.basis, rng=rng,
                      n_sweeps=self.n_sweeps, config=self.config, backend=self.backend)
        return r.E_fin, r.status, list(r.E_after)


@dataclass
class HarmonicStage:
    """One static exchange per sample; ``E_fin`` is the minimum particle energy."""
    well: object
    config: dyn.IntegratorConfig = dyn.IntegratorConfig(order=4)
    backend: str | None = None
    basis: object = None

    def prepare(self):
        n = len(self.well.voltages) if self.well.voltages is not None else 0
        return self.well.depth_a, n

    def __call__(self, E_init, offsets, rng):
        from .protocols import run_harmonic_coupling
        well = self.well
        if offsets is not None and np.any(offsets):
            from .tables import BasisTables
            if self.basis is None:
                raise ValueError("voltage noise on a harmonic stage needs the basis")
            t = well.trajectory
            ref = t.tables_a[0]
            # slightly enlarged spacing keeps the cell count identical
            tables = BasisTables(self.basis, ref.z_min, ref.z_max, ref.h * (1 + 1e-9))
            well = replace(well, trajectory=t.with_offset(tables.combine(offsets)))
        r = run_harmonic_coupling(well=well, E_init=E_init, phase_a=rng.random(),
                                  phase_b=rng.random(), config=self.config, backend=self.backend)
        return r.E_fin, r.status, []


def _outcome(status: str) -> str:
    return {"ok": "cooled", "untrapped": "untrapped", "collided": "collided"}.get(status, "failed")


# -- distribution ---------------------------------------------------------------

@dataclass
class EnergyDistribution:
    """Per-sample outcomes of a campaign with threshold statistics.

    Energies are stored in J. Post-cooling statistics use the samples that
    started trapped; untrapped samples stay in the ledger only.
    """
    index: np.ndarray
    E_init: np.ndarray
    E_fin: np.ndarray
    outcome: np.ndarray
    intermediate: np.ndarray | None = None    # (n, k) energies after each pass, J
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.index)

    @property
    def trapped(self) -> np.ndarray:
        return self.outcome != "untrapped"

    @property
    def cooled(self) -> np.ndarray:
        return self.outcome == "cooled"

    def counts(self) -> dict:
        return {k: int(np.sum(self.outcome == k)) for k in OUTCOMES}

    def energies(self, which="final") -> np.ndarray:
        """Energies (J) of the selected stage for cooled samples (``"init"`` covers all trapped)."""
        if which == "init":
            return self.E_init[self.trapped]
        if which == "final":
            return self.E_fin[self.cooled]
        return self.intermediate[self.cooled, int(which)]

    def fraction_below(self, threshold_K: float, which="final") -> float:
        """Fraction of initially trapped samples ending below ``threshold_K``.

        Collided and failed samples count as not cooled.
        """
        n = int(np.sum(self.trapped))
        if n == 0:
            return float("nan")
        e = self.energies(which)
        return float(np.sum(e < threshold_K * CONSTANTS.kB)) / n

    def temperature(self, which="final") -> float:
        """Temperature (K) from the mean energy, ``<E> = k_B T``."""
        e = self.energies(which)
        return float(np.mean(e) / CONSTANTS.kB) if e.size else float("nan")

    def histogram(self, which="final", bins=40, range_K=None):
        """``(edges_K, density)`` with density in 1/K, integrating to one."""
        e = self.energies(which) / CONSTANTS.kB
        if e.size == 0:
            return np.linspace(0, 1, bins + 1), np.zeros(bins)
        if range_K is None:
            range_K = (0.0, float(e.max()) * 1.0001 if e.max() > 0 else 1.0)
        counts, edges = np.histogram(e, bins=bins, range=range_K)
        density = counts / (counts.sum() * np.diff(edges)) if counts.sum() else counts * 0.0
        return edges, density

    def drop_edge(self, which="final", bins=None, level=0.05):
        """Energy (K) where the cooled bulk ends, and the fraction below it.

        The histogram spans four times the median energy with ``sqrt(n)``
        bins by default; the edge is the first bin past the peak whose
        density falls below ``level`` times the peak density.
        """
        e = self.energies(which) / CONSTANTS.kB
        if e.size == 0:
            return float("nan"), float("nan")
        if bins is None:
            bins = max(5, int(math.sqrt(e.size)))
        med = float(np.median(e))
        edges, density = self.histogram(which, bins, (0.0, 4 * med if med > 0 else 1.0))
        peak = int(np.argmax(density))
        below = np.nonzero(density[peak:] < level * density[peak])[0]
        edge = edges[peak + below[0]] if below.size else edges[-1]
        return float(edge), self.fraction_below(edge, which)

    def summary(self) -> dict:
        edge, frac = self.drop_edge()
        out = {"n_samples": len(self), **self.counts(),
               "temperature_init_K": self.temperature("init"),
               "temperature_final_K": self.temperature("final"),
               "drop_edge_K": edge, "fraction_below_drop_edge": frac}
        for thr in (0.26, 0.4, 0.46, 0.5, 0.6):
            out[f"fraction_below_{thr}K"] = self.fraction_below(thr)
        out.update(self.meta)
        return out

    def write_samples(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "E_init_K", "E_fin_K", "outcome"])
            for i, e0, e1, o in zip(self.index, self.E_init, self.E_fin, self.outcome):
                w.writerow([int(i), _fmt(e0 / CONSTANTS.kB), _fmt(e1 / CONSTANTS.kB), o])

    def write_histogram(self, path, which="final", bins=40, range_K=None):
        edges, density = self.histogram(which, bins, range_K)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_low_K", "bin_high_K", "density"])
            for lo, hi, d in zip(edges[:-1], edges[1:], density):
                w.writerow([_fmt(lo), _fmt(hi), _fmt(d)])


def _fmt(x) -> str:
    x = float(x)
    return "nan" if math.isnan(x) else format(x, ".17g")


# -- campaign driver -------------------------------------------------------------

def run_campaign(stage, n_samples: int, noise: VoltageNoise | None = None,
                 sampler: BoltzmannSampler = BoltzmannSampler(), seed: int | None = None,
                 threads: int | None = None, progress=None) -> EnergyDistribution:
    """Run ``stage`` on ``n_samples`` Boltzmann-distributed particles.

    Each sample draws, from its own stream, the initial energy, then the
    electrode offsets, then whatever phases the stage needs. Results do not
    depend on ``threads``. Failing samples are recorded, never raised.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    seed = sampler.seed if seed is None else seed
    depth_K, n_el = stage.prepare()
    if threads is None:
        threads = os.cpu_count() or 1

    def one(i):
        rng = sample_rng(seed, i)
        e0 = float(sampler.draw(rng))
        offsets = noise.draw(rng, n_el) if noise is not None and noise.sigma_V > 0 else None
        if e0 >= depth_K * CONSTANTS.kB:
            return i, e0, float("nan"), "untrapped", []
        try:
            e1, status, after = stage(e0, offsets, rng)
        except dyn.UntrappedError:
            return i, e0, float("nan"), "untrapped", []
        except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError):
            return i, e0, float("nan"), "failed", []
        return i, e0, e1, _outcome(status), after

    if threads <= 1:
        results = []
        for i in range(n_samples):
            results.append(one(i))
            if progress:
                progress(i + 1, n_samples)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = []
            for k, r in enumerate(pool.map(one, range(n_samples))):
                results.append(r)
                if progress:
                    progress(k + 1, n_samples)
    results.sort(key=lambda r: r[0])
    k_max = max((len(r[4]) for r in results), default=0)
    inter = None
    if k_max:
        inter = np.full((n_samples, k_max), np.nan)
        for r in results:
            inter[r[0], :len(r[4])] = r[4]
    return EnergyDistribution(
        np.array([r[0] for r in results]), np.array([r[1] for r in results]),
        np.array([r[2] for r in results]), np.array([r[3] for r in results], dtype=object),
        inter, {"seed": seed, "T_z_K": sampler.T_z,
                "sigma_V": noise.sigma_V if noise is not None else 0.0,
                "depth_K": depth_K})
