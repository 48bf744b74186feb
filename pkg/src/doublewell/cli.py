"""Command-line front end: ``doublewell <command> [options]``.

Settings come from built-in defaults, then an optional YAML file
(``--config``), then command-line flags. The effective configuration is
written next to the outputs and its hash is embedded in every SVG.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np
import yaml

from . import analysis, dynamics, montecarlo, plotting, protocols
from .core import CONSTANTS, ConfigurationError, species
from .electrode_model import build_analytic_basis, import_basis
from .potential_solver import (CharacterizationError, DoubleWellSpec, InfeasibleSpecError,
                               VoltageLimitWarning, characterize, solve_double_well)

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_PARTIAL = 0, 2, 3, 4, 5
OUTPUT_ENV = "DOUBLEWELL_OUTPUT_DIR"

DEFAULTS = {
    "species": None,
    "partner": "beryllium9_ion",
    "f_Hz": None,
    "f_b_Hz": None,
    "s0_m": None,
    "delta_s0_m": 0.0,
    "compensate": True,
    "null_higher_orders": True,
    "import_basis": None,
    "order": 4,
    "dt_s": None,
    "oversampling": 100,
    "mode": "harmonic",
    "synthetic": False,
    "E_init_K": 0.1,
    "duration_s": None,
    "record_every": 50,
    "f_start_Hz": 470e3,
    "f_end_Hz": 500e3,
    "sweep_duration_s": None,
    "n_waypoints": 41,
    "profile": "capture",
    "alpha": 1.0,
    "n_sweeps": 2,
    "schedule_file": None,
    "noise_sigma_V": 250e-9,
    "n_samples": 100,
    "T_z_K": 4.0,
    "seed": None,
    "threads": 1,
    "task": "resonance",
    "n_detunings": 17,
    "span_gamma": 6.0,
    "frequencies_Hz": [300e3, 350e3, 400e3, 450e3, 500e3],
    "s0_values_m": [0.6e-3, 0.7e-3, 0.8e-3],
    "transfer_target": 0.8,
    "efficiency": 0.8,
    "backend": None,
}

# flag name -> config key
FLAGS = {
    "species": ("species", str), "partner": ("partner", str),
    "f": ("f_Hz", float), "f_b": ("f_b_Hz", float), "s0": ("s0_m", float),
    "ds": ("delta_s0_m", float), "import_basis": ("import_basis", str),
    "order": ("order", int), "dt": ("dt_s", float), "oversampling": ("oversampling", int),
    "mode": ("mode", str), "E_init": ("E_init_K", float), "duration": ("duration_s", float),
    "record_every": ("record_every", int), "f_start": ("f_start_Hz", float),
    "f_end": ("f_end_Hz", float), "sweep_duration": ("sweep_duration_s", float),
    "n_waypoints": ("n_waypoints", int), "profile": ("profile", str), "alpha": ("alpha", float),
    "n_sweeps": ("n_sweeps", int), "schedule_file": ("schedule_file", str),
    "noise": ("noise_sigma_V", float), "n_samples": ("n_samples", int), "T_z": ("T_z_K", float),
    "seed": ("seed", int), "threads": ("threads", int), "task": ("task", str),
    "n_detunings": ("n_detunings", int), "span_gamma": ("span_gamma", float),
    "efficiency": ("efficiency", float), "backend": ("backend", str),
}
REQUIRED = {
    "solve": ("species", "f_Hz", "s0_m"),
    "simulate": ("species", "f_Hz", "s0_m"),
    "sweep": ("species",),
    "campaign": ("species",),
    "analyze": ("species",),
    "plan": ("species",),
}


class NumericalFailure(RuntimeError):
    pass


# -- configuration ---------------------------------------------------------------

def load_config(path) -> dict:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigurationError("config file must hold a mapping")
    unknown = set(data) - set(DEFAULTS)
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    return data


def effective_config(args) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        cfg.update(load_config(args.config))
    for flag, (key, _) in FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            cfg[key] = v
    if getattr(args, "synthetic", False):
        cfg["synthetic"] = True
    return cfg


def config_hash(cfg: dict) -> str:
    keep = {k: v for k, v in cfg.items() if k not in ("threads", "output_dir")}
    blob = json.dumps(keep, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _species_pair(cfg):
    try:
        return species(cfg["species"]), species(cfg["partner"])
    except (ValueError, KeyError) as exc:
        raise ConfigurationError(str(exc)) from None


def _basis(cfg):
    if cfg["import_basis"]:
        return import_basis(cfg["import_basis"])
    return build_analytic_basis()


def _integrator(cfg):
    try:
        return dynamics.IntegratorConfig(dt=cfg["dt_s"], oversampling=cfg["oversampling"],
                                         order=cfg["order"])
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None


def _spec(cfg):
    sa, sb = _species_pair(cfg)
    return DoubleWellSpec.from_frequencies(sa, sb, cfg["f_Hz"], cfg["s0_m"], f_b=cfg["f_b_Hz"],
                                           delta_s0=cfg["delta_s0_m"],
                                           null_higher_orders=cfg["null_higher_orders"],
                                           compensate=cfg["compensate"])


class Outputs:
    def __init__(self, directory, command, cfg):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.cfg = cfg
        self.hash = config_hash(cfg)
        with open(self.dir / f"{command}_config.yaml", "w") as fh:
            yaml.safe_dump({**cfg, "config_hash": self.hash}, fh, sort_keys=True)

    def path(self, name) -> Path:
        return self.dir / name

    def csv(self, name, header, rows):
        with open(self.path(name), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x
                            for x in r])

    def json(self, name, data):
        with open(self.path(name), "w") as fh:
            json.dump(data, fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")

    def svg(self, name, series, **kw):
        plotting.line_plot(self.path(name), series,
                           provenance=f"doublewell {self.command} config_hash={self.hash}", **kw)


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


# -- commands ------------------------------------------------------------------------

def cmd_solve(cfg, out: Outputs):
    spec = _spec(cfg)
    basis = _basis(cfg)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", VoltageLimitWarning)
        vs, pot = solve_double_well(spec, basis)
    ch = characterize(pot, spec)
    out.csv("voltages.csv", ["electrode", "voltage_V"], enumerate(vs.voltages.tolist(), 1))
    z = np.linspace(basis.z_min, basis.z_max, 801)
    phi = pot(z, 0)
    out.csv("potential.csv", ["z_m", "phi_V", "dphi_V_per_m", "d2phi_V_per_m2"],
            zip(z.tolist(), phi.tolist(), pot(z, 1).tolist(), pot(z, 2).tolist()))
    summary = {"voltages_V": vs.voltages.tolist(), "max_abs_V": vs.max_abs,
               "residual": vs.residual, "wells": ch.as_dict(),
               "voltage_warnings": [str(w.message) for w in caught]}
    out.json("solve_summary.json", summary)
    out.svg("potential.svg", [("Phi(z)", z * 1e3, phi)], xlabel="z (mm)",
            ylabel="potential (V)", title=f"double well, {spec.species_a.name} + "
                                          f"{spec.species_b.name}")
    print(f"voltages (V): {np.array2string(vs.voltages, precision=4)}")
    for key, w in (("a", ch.a), ("b", ch.b)):
        print(f"{key}: {w.species.name:<12} z_min {w.z_min * 1e3:+.4f} mm  f {w.f_local:.2f} Hz  "
              f"depth {w.depth:.3f} K")
    return EXIT_OK


def cmd_simulate(cfg, out: Outputs):
    config = _integrator(cfg)
    if cfg["mode"] == "sweep":
        return _simulate_sweep(cfg, out, config)
    if cfg["mode"] != "harmonic":
        raise ConfigurationError("mode must be 'harmonic' or 'sweep'")
    sa, sb = _species_pair(cfg)
    if cfg["synthetic"]:
        well = protocols.synthetic_well(sa, sb, cfg["f_Hz"], cfg["s0_m"], f_b=cfg["f_b_Hz"],
                                        compensate=cfg["compensate"])
    else:
        well = protocols.prepare_well(_spec(cfg), _basis(cfg))
    E0 = cfg["E_init_K"] * CONSTANTS.kB
    duration = cfg["duration_s"]
    if duration == 0:
        za, va = dynamics.phase_space_point(well.potential, sa, E0, well.z_min_a, well.region_a,
                                            0.0)
        state = (za, va, well.z_min_b, 0.0, 0.0)
        e = dynamics.energy_accounting(state, well.trajectory, sa, sb)
        rows = [[0.0, za, va, e[0], well.z_min_b, 0.0, e[1], e[2], e[3]]]
        out.csv("trajectory.csv", [f"{c}" for c in dynamics.RECORD_COLUMNS], rows)
        print(f"duration 0: E_a = {e[0] / CONSTANTS.kB:.6g} K")
        return EXIT_OK
    r = protocols.run_harmonic_coupling(well=well, E_init=E0, duration=duration, config=config,
                                        record_every=cfg["record_every"], backend=cfg["backend"])
    if r.status != "ok":
        raise NumericalFailure(f"trajectory ended with status {r.status}")
    _write_trace(out, r.trace, "harmonic exchange")
    out.json("simulate_summary.json", {"E_init_K": cfg["E_init_K"], "E_fin_K": r.E_fin_K,
                                       "t_min_s": r.t_min, "transfer_fraction": r.transfer_fraction,
                                       "tau_ex_s": r.tau_ex})
    print(f"E_fin {r.E_fin_K:.6g} K at t = {r.t_min * 1e3:.3f} ms, transfer "
          f"{r.transfer_fraction:.5f}, tau_ex {r.tau_ex * 1e3:.3f} ms")
    return EXIT_OK


def _write_trace(out, trace, title):
    if trace is None or not len(trace):
        return
    out.csv("trajectory.csv", list(dynamics.RECORD_COLUMNS), trace.tolist())
    t = trace[:, 0] * 1e3
    col = dynamics.RECORD_COLUMNS.index
    out.svg("energies.svg", [("E_a", t, trace[:, col("E_a")] / CONSTANTS.kB),
                             ("E_b", t, trace[:, col("E_b")] / CONSTANTS.kB)],
            xlabel="t (ms)", ylabel="energy (K x kB)", title=title)


def _schedule(cfg, basis):
    sa, _ = _species_pair(cfg)
    f_particle = cfg["f_Hz"] or 500e3
    s0 = cfg["s0_m"] or 0.7e-3
    ds = cfg["delta_s0_m"] if cfg["delta_s0_m"] else None
    spec = protocols.default_sweep_spec(sa.label, f_particle, s0, ds)
    if cfg["schedule_file"]:
        return protocols.load_schedule(cfg["schedule_file"], spec, basis, cfg["compensate"])
    duration = cfg["sweep_duration_s"]
    if duration is None:
        duration = protocols._PLAN_INPUTS[sa.label]["sweep"]
    return protocols.build_sweep(spec, cfg["f_start_Hz"], cfg["f_end_Hz"], duration,
                                 cfg["n_waypoints"], basis, profile=cfg["profile"],
                                 alpha=cfg["alpha"], compensate=cfg["compensate"])


def _simulate_sweep(cfg, out, config):
    basis = _basis(cfg)
    sch = _schedule(cfg, basis)
    rng = np.random.default_rng(cfg["seed"] or 0)
    r = protocols.run_sweep(sch, cfg["E_init_K"] * CONSTANTS.kB, None, basis=basis, rng=rng,
                            n_sweeps=cfg["n_sweeps"], config=config,
                            record_every=cfg["record_every"], backend=cfg["backend"])
    if r.status == "untrapped":
        raise NumericalFailure("initial energy exceeds the well depth")
    if r.status != "ok":
        raise NumericalFailure(f"trajectory ended with status {r.status}")
    _write_trace(out, r.trace, "frequency sweep")
    after = [e / CONSTANTS.kB for e in r.E_after]
    out.json("simulate_summary.json", {"E_init_K": cfg["E_init_K"], "E_after_sweeps_K": after})
    print("E after each sweep (K): " + ", ".join(f"{e:.4g}" for e in after))
    return EXIT_OK


def cmd_sweep(cfg, out: Outputs):
    basis = _basis(cfg)
    sch = _schedule(cfg, basis)
    sch.to_csv(out.path("schedule.csv"))
    sch.to_csv(out.path("schedule_voltages.csv"), columns="voltage")
    t = np.asarray(sch.times) * 1e3
    out.svg("schedule.svg", [("f_Be nominal", t, np.asarray(sch.f_nominal) / 1e3),
                             ("f_Be applied", t, np.asarray(sch.f_be) / 1e3)],
            xlabel="t (ms)", ylabel="frequency (kHz)", title="cooling-ion sweep")
    out.json("sweep_summary.json", {"duration_s": sch.duration, "n_waypoints": sch.n_waypoints,
                                    "profile": sch.profile, "alpha": sch.alpha})
    print(f"{sch.profile} sweep, {sch.n_waypoints} waypoints over {sch.duration * 1e3:.1f} ms, "
          f"alpha {sch.alpha:.3g}")
    return EXIT_OK


def cmd_campaign(cfg, out: Outputs):
    if cfg["seed"] is None:
        raise ConfigurationError("campaigns need --seed")
    basis = _basis(cfg)
    config = _integrator(cfg)
    if cfg["mode"] == "harmonic":
        spec = _spec(cfg)
        stage = montecarlo.HarmonicStage(protocols.prepare_well(spec, basis), config,
                                         cfg["backend"], basis)
    else:
        stage = montecarlo.SweepStage(_schedule(cfg, basis), cfg["n_sweeps"], basis, config,
                                      cfg["backend"])
    noise = montecarlo.VoltageNoise(cfg["noise_sigma_V"])
    sampler = montecarlo.BoltzmannSampler(cfg["T_z_K"], cfg["seed"])

    def progress(k, n):
        if k % max(1, n // 20) == 0 or k == n:
            print(f"  {k}/{n} samples", file=sys.stderr, flush=True)

    dist = montecarlo.run_campaign(stage, cfg["n_samples"], noise, sampler, cfg["seed"],
                                   cfg["threads"], progress)
    dist.write_samples(out.path("samples.csv"))
    stages = [("init", "initial")]
    if dist.intermediate is not None:
        stages += [(k, f"after sweep {k + 1}") for k in range(dist.intermediate.shape[1])]
    else:
        stages.append(("final", "final"))
    top = max(float(np.nanmax(dist.energies("init") / CONSTANTS.kB, initial=1.0)), 1e-3)
    series = []
    for which, label in stages:
        name = "init" if which == "init" else ("final" if which == "final" else f"sweep{which + 1}")
        dist.write_histogram(out.path(f"histogram_{name}.csv"), which, bins=60, range_K=(0, top))
        edges, dens = dist.histogram(which, bins=60, range_K=(0, top))
        series.append((label, edges, dens))
    out.svg("histograms.svg", series, xlabel="energy (K x kB)", ylabel="density (1/K)",
            title="energy distributions", step=True)
    summary = dist.summary()
    out.json("campaign_summary.json", summary)
    for k in ("n_samples", "cooled", "untrapped", "collided", "failed", "drop_edge_K",
              "fraction_below_drop_edge", "fraction_below_0.4K", "fraction_below_0.6K"):
        print(f"{k}: {summary[k]}")
    return EXIT_PARTIAL if summary["collided"] + summary["failed"] else EXIT_OK


def cmd_analyze(cfg, out: Outputs):
    sa, sb = _species_pair(cfg)
    basis = _basis(cfg)
    config = _integrator(cfg)
    noise = montecarlo.VoltageNoise(cfg["noise_sigma_V"])
    task = cfg["task"]
    if task == "resonance":
        f = cfg["f_Hz"] or 500e3
        s0 = cfg["s0_m"] or 0.6e-3
        g = dynamics.resonance_width(sa, sb, 2 * math.pi * f, 2 * math.pi * f, s0)
        d = np.linspace(-cfg["span_gamma"] * g, cfg["span_gamma"] * g, cfg["n_detunings"])
        curve = analysis.scan_resonance(sa, sb, f, s0, cfg["E_init_K"] * CONSTANTS.kB, d,
                                        well="synthetic" if cfg["synthetic"] else "solved",
                                        basis=basis, config=config, threads=cfg["threads"],
                                        backend=cfg["backend"])
        curve.to_csv(out.path("resonance.csv"))
        fit = curve.fit
        xs = np.linspace(d[0], d[-1], 301)
        out.svg("resonance.svg", [("simulated", d, curve.transfer_fractions),
                                  ("Lorentzian fit", xs, fit(xs))],
                xlabel="detuning (Hz)", ylabel="energy transferred", title="resonance curve")
        out.json("resonance_summary.json", {
            "amplitude": fit.amplitude, "center_Hz": fit.center, "gamma_HWHM_Hz": fit.gamma,
            "residual": fit.residual, "converged": fit.converged, "message": fit.message,
            "gamma_predicted_Hz": curve.gamma_predicted, "tau_ex_s": curve.tau_ex})
        print(f"HWHM {fit.gamma:.3f} Hz (predicted {curve.gamma_predicted:.3f} Hz), "
              f"converged {fit.converged}")
        return EXIT_OK if fit.converged else EXIT_NUMERICAL
    if task == "sigma-f":
        s0 = cfg["s0_m"] or 0.7e-3
        fl = analysis.sigma_f_scan(sa, sb, cfg["frequencies_Hz"], s0, noise, cfg["n_samples"],
                                   basis, cfg["seed"] or 0)
        out.csv("sigma_f.csv", ["f_Hz", "sigma_f_Hz", "n_flagged"],
                [(float(f), float(s), e.n_flagged)
                 for f, s, e in zip(fl.frequencies, fl.sigma_f, fl.estimates)])
        ratios, cfit = analysis.robustness_vs_frequency(sa, sb, fl, s0)
        out.json("sigma_f_summary.json", {"reciprocal_coefficient_Hz2": fl.coefficient,
                                          "reciprocal_residual": fl.fit.residual,
                                          "robustness": ratios, "robustness_constant": cfit.coeffs[0],
                                          "robustness_residual": cfit.residual})
        out.svg("sigma_f.svg", [("sigma_f", fl.frequencies / 1e3, fl.sigma_f),
                                ("c/f fit", fl.frequencies / 1e3, fl.fit(fl.frequencies))],
                xlabel="f (kHz)", ylabel="sigma_f (Hz)", title="frequency fluctuations")
        print(f"sigma_f = {fl.coefficient / 1e3:.4g} kHz x Hz / f, residual {fl.fit.residual:.3g}")
        return EXIT_OK
    if task == "stability":
        st = analysis.stability_study(sa, sb, cfg["s0_values_m"], cfg["frequencies_Hz"], basis,
                                      noise, cfg["n_samples"], cfg["seed"] or 0,
                                      cfg["transfer_target"], config, cfg["backend"])
        out.csv("stability_grid.csv", ["s0_m", "f_Hz", "E_max_K", "depth_K", "sigma_f_Hz"],
                st.rows())
        rows = []
        for s0, r in st.reports.items():
            rows.append((s0, r.f_Emax, r.E_max_K, r.gamma, r.sigma_f, r.robustness, r.p_at_95,
                         r.required_Vpp, r.required_Vpp_95))
        out.csv("stability.csv", ["s0_m", "f_Emax_Hz", "E_max_K", "gamma_Hz", "sigma_f_Hz",
                                  "robustness", "p_at_95", "V_pp_V", "V_pp_95_V"], rows)
        s0s = np.array([r[0] for r in rows]) * 1e3
        out.svg("stability.svg", [("V_pp (68.3%)", s0s, [r[7] * 1e6 for r in rows]),
                                  ("V_pp (95.4%)", s0s, [r[8] * 1e6 for r in rows])],
                xlabel="s0 (mm)", ylabel="V_pp (uV)", title="required supply stability",
                hlines=[("0.5 uV_pp", 0.5)])
        out.json("stability_summary.json", {
            str(s0): {"linear_fit_mK_per_kHz": st.emax_fits[s0].coeffs[0] * 1e6,
                      "linear_residual": st.emax_fits[s0].residual,
                      "depth_fit_residual": st.depth_fits[s0].residual,
                      "sigma_f_coefficient_kHzHz": st.fluctuations[s0].coefficient / 1e3,
                      "robustness_constant": st.robustness_fits[s0].coeffs[0],
                      "V_pp_V": st.reports[s0].required_Vpp} for s0 in st.s0_values})
        for r in rows:
            print(f"s0 {r[0] * 1e3:.1f} mm: V_pp {r[7] * 1e6:.3f} uV (95.4%: {r[8] * 1e6:.3f} uV)")
        return EXIT_OK
    raise ConfigurationError("task must be 'resonance', 'sigma-f' or 'stability'")


def cmd_plan(cfg, out: Outputs):
    plan = protocols.plan_ground_state_protocol(cfg["species"], cfg["efficiency"])
    text = plan.as_text()
    (out.path("plan.txt")).write_text(text + "\n")
    out.csv("plan.csv", ["stage", "kind", "f_particle_Hz", "f_be_Hz", "s0_m", "repetitions",
                         "duration_s", "total_s"],
            [(i, s.kind, s.f_particle, s.f_be if not isinstance(s.f_be, tuple)
              else f"{s.f_be[0]:g}-{s.f_be[1]:g}", s.s0, s.repetitions, s.duration, s.total)
             for i, s in enumerate(plan.stages, 1)])
    print(text)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "simulate": cmd_simulate, "sweep": cmd_sweep,
            "campaign": cmd_campaign, "analyze": cmd_analyze, "plan": cmd_plan}


# -- argument parsing --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="doublewell", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file with SI-suffixed keys")
    common.add_argument("--output-dir", help=f"output directory (default ${OUTPUT_ENV} or ./out)")
    common.add_argument("--species", help="proton or antiproton")
    common.add_argument("--partner", help="cooling ion (default beryllium9_ion)")
    common.add_argument("--import-basis", dest="import_basis", help="electrode basis CSV")
    common.add_argument("--threads", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--backend", choices=("cython", "python"))
    well = argparse.ArgumentParser(add_help=False)
    well.add_argument("--f", type=float, help="particle well frequency, Hz")
    well.add_argument("--f-b", dest="f_b", type=float, help="ion well frequency, Hz")
    well.add_argument("--s0", type=float, help="well separation, m")
    well.add_argument("--ds", type=float, help="pair offset, m (use --ds=-50e-6)")
    integ = argparse.ArgumentParser(add_help=False)
    integ.add_argument("--order", type=int, choices=(2, 4, 6))
    integ.add_argument("--dt", type=float, help="time step, s")
    integ.add_argument("--oversampling", type=int)
    sweep = argparse.ArgumentParser(add_help=False)
    sweep.add_argument("--f-start", dest="f_start", type=float)
    sweep.add_argument("--f-end", dest="f_end", type=float)
    sweep.add_argument("--sweep-duration", dest="sweep_duration", type=float)
    sweep.add_argument("--n-waypoints", dest="n_waypoints", type=int)
    sweep.add_argument("--profile", choices=protocols.SWEEP_PROFILES)
    sweep.add_argument("--alpha", type=float)
    sweep.add_argument("--n-sweeps", dest="n_sweeps", type=int)
    sweep.add_argument("--schedule-file", dest="schedule_file")

    sub.add_parser("solve", parents=[common, well], help="solve and characterize a double well")
    s = sub.add_parser("simulate", parents=[common, well, integ, sweep],
                       help="one trajectory with energy trace")
    s.add_argument("--mode", choices=("harmonic", "sweep"))
    s.add_argument("--synthetic", action="store_true", help="exact parabolic wells")
    s.add_argument("--E-init", dest="E_init", type=float, help="initial energy, K")
    s.add_argument("--duration", type=float, help="s (default 1.1 tau_ex)")
    s.add_argument("--record-every", dest="record_every", type=int)
    sub.add_parser("sweep", parents=[common, well, sweep], help="build a sweep schedule")
    c = sub.add_parser("campaign", parents=[common, well, integ, sweep],
                       help="Monte Carlo cooling campaign")
    c.add_argument("--mode", choices=("harmonic", "sweep"), default="sweep")
    c.add_argument("--n-samples", dest="n_samples", type=int)
    c.add_argument("--noise", type=float, help="voltage noise sigma, V")
    c.add_argument("--T-z", dest="T_z", type=float, help="initial temperature, K")
    a = sub.add_parser("analyze", parents=[common, well, integ], help="resonance and robustness")
    a.add_argument("--task", choices=("resonance", "sigma-f", "stability"))
    a.add_argument("--synthetic", action="store_true")
    a.add_argument("--E-init", dest="E_init", type=float)
    a.add_argument("--n-detunings", dest="n_detunings", type=int)
    a.add_argument("--span-gamma", dest="span_gamma", type=float)
    a.add_argument("--n-samples", dest="n_samples", type=int)
    a.add_argument("--noise", type=float)
    pl = sub.add_parser("plan", parents=[common], help="ground-state protocol plan")
    pl.add_argument("--efficiency", type=float)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.command == "campaign" and args.seed is None:
        parser.print_usage(sys.stderr)
        print("doublewell campaign: error: --seed is required", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = effective_config(args)
        missing = [k for k in REQUIRED[args.command] if cfg.get(k) is None]
        if missing:
            flags = [next(f for f, (key, _) in FLAGS.items() if key == m) for m in missing]
            parser.print_usage(sys.stderr)
            print(f"doublewell {args.command}: error: missing "
                  + ", ".join(f"--{f.replace('_', '-')}" for f in flags), file=sys.stderr)
            return EXIT_USAGE
        outdir = args.output_dir or os.environ.get(OUTPUT_ENV) or "out"
        out = Outputs(outdir, args.command, cfg)
        return COMMANDS[args.command](cfg, out)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, InfeasibleSpecError, CharacterizationError, protocols.ProtocolError,
            analysis.AnalysisError, dynamics.CollisionError, dynamics.UntrappedError,
            np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
