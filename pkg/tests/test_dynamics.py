import math

import numpy as np
import pytest

from doublewell import dynamics as dyn
from doublewell.core import CONSTANTS, ParticleSpecies, SpeciesLabel
from doublewell.protocols import prepare_well, synthetic_well
from doublewell.potential_solver import DoubleWellSpec
from doublewell.tables import PotentialTable

F0 = 500e3
W0 = 2 * math.pi * F0


def spectator(charge=1e-40, mass=1e-20):
    """A heavy, (almost) uncharged partner that leaves particle a alone."""
    return ParticleSpecies(SpeciesLabel.BERYLLIUM9_ION, mass, charge)


def single_well(sp, partner, z_a=-0.35e-3, z_b=0.35e-3, f_b=300e3):
    """Separate exact parabolas: ``sp`` at ``F0`` around ``z_a``, ``partner`` at ``f_b``."""
    ca = sp.mass * W0**2 / sp.charge
    cb = partner.mass * (2 * math.pi * f_b) ** 2 / partner.charge
    ta = PotentialTable.harmonic(ca, z_a, z_a - 50e-6, z_a + 50e-6)
    tb = PotentialTable.harmonic(cb, z_b, z_b - 50e-6, z_b + 50e-6)
    return dyn.TrajectoryPotential(ta, tb, None, z_a, z_b)


def test_coulomb_force_magnitude(proton, be):
    f = dyn.coulomb_force(0.0, 0.7e-3, proton, be)
    # [DERIVED] scalar arithmetic
    expected = CONSTANTS.elementary_charge**2 / (4 * math.pi * CONSTANTS.epsilon0 * 0.7e-3**2)
    assert abs(f) == pytest.approx(expected, rel=1e-12)
    assert abs(f) == pytest.approx(4.71e-22, rel=2e-3)
    assert f < 0       # like charges: a (below) is pushed further down


def test_newton_third_law(proton, be):
    flat = PotentialTable.harmonic(0.0, 0.0, -1e-3, 1e-3)
    traj = dyn.TrajectoryPotential.static(flat, -0.3e-3, 0.4e-3)
    fa, fb = dyn.force(-0.3e-3, 0.4e-3, traj, proton, be)
    assert fa + fb == 0.0


def test_uniform_field_force(proton):
    E = 250.0

    def uniform(z, order=0):
        return -E * z if order == 0 else (-E if order == 1 else 0.0)

    fa, _ = dyn.force(0.0, 1.0, uniform, proton, spectator(charge=1e-300))
    assert fa == pytest.approx(proton.charge * E, rel=1e-12)


def test_force_collision_guard(proton, be):
    flat = PotentialTable.harmonic(0.0, 0.0, -1e-3, 1e-3)
    with pytest.raises(dyn.CollisionError):
        dyn.force(0.0, 0.5e-6, flat, proton, be)


def test_config_dt_rules():
    cfg = dyn.IntegratorConfig()
    assert cfg.resolve_dt(500e3) == pytest.approx(20e-9)
    assert cfg.resolve_dt(100e3) == 50e-9          # clamped
    assert cfg.resolve_dt(1e6) == 10e-9
    assert cfg.resolve_dt(5e6) == pytest.approx(2e-9)   # clamp yields to oversampling
    with pytest.raises(ValueError):
        dyn.IntegratorConfig(dt=100e-9).resolve_dt(500e3)
    with pytest.raises(ValueError):
        dyn.IntegratorConfig(order=3)


def test_exchange_time_formula(proton, be):
    w = 2 * math.pi * 400e3
    tau = dyn.exchange_time(proton, be, w, w, 0.7e-3)
    ref = 2 * math.pi**2 * CONSTANTS.epsilon0 * 0.7e-3**3 * math.sqrt(proton.mass * be.mass) * w \
        / CONSTANTS.elementary_charge**2
    assert tau == pytest.approx(ref, rel=1e-14)
    assert tau == pytest.approx(29.4e-3, rel=0.01)


def test_detuning_sign_and_equal_masses(proton, antiproton, be):
    assert dyn.coulomb_detuning(proton, be, W0, 0.7e-3) > 0
    assert dyn.coulomb_detuning(antiproton, be, W0, 0.7e-3) < 0
    assert dyn.coulomb_detuning(proton, proton, W0, 0.7e-3) == 0.0


def test_coupling_analytics_gamma(proton, be):
    ca = dyn.coupling_analytics(proton, be, W0, W0, 0.6e-3)
    assert ca.gamma == pytest.approx(1 / (2 * ca.tau_ex))
    assert ca.delta_f == pytest.approx(ca.delta_omega / (2 * math.pi))
    assert dyn.resonance_width(proton, be, W0, W0, 0.6e-3) == ca.gamma


def _phase(z, v, omega):
    return math.atan2(-v / omega, z)


def _period_error(sp, order, backend_name):
    partner = spectator()
    traj = single_well(sp, partner)
    za0 = traj.z_min_a[0]
    res = dyn.run(traj, sp, partner, [za0 + 2e-6, 0.0, traj.z_min_b[0], 0.0, 0.0],
                  1000 / F0, dyn.IntegratorConfig(order=order), backend=backend_name)
    assert res.ok and res.steps == 100_000
    # accumulated phase over 1000 periods, as a relative period error
    return abs(_phase(res.state.z_a - za0, res.state.v_a, W0)) / (2 * math.pi * 1000)


def test_harmonic_period_over_1000_periods(proton, backend_name):
    assert dyn.IntegratorConfig().order == 6
    assert _period_error(proton, 6, backend_name) < 1e-6


@pytest.mark.parametrize("order, bound", [(2, 2e-4), (4, 2e-6)])
def test_period_error_scales_with_order(proton, order, bound):
    err = _period_error(proton, order, None)
    assert err < bound
    if order == 2:
        # plain velocity Verlet: (w dt)^2 / 24
        assert err == pytest.approx((2 * math.pi / 100) ** 2 / 24, rel=0.02)


def test_rest_at_minimum_stays(proton, be, backend_name):
    well = synthetic_well(proton, be, F0, 0.7e-3)
    za, zb = dyn.coupled_equilibrium(well.trajectory, proton, be)
    res = dyn.run(well.trajectory, proton, be, [za, 0.0, zb, 0.0, 0.0], 2e-4,
                  backend=backend_name)
    assert abs(res.state.z_a - za) < 1e-15
    assert abs(res.state.v_a) < 1e-9
    assert abs(res.state.z_b - zb) < 1e-15


def test_time_reversal(proton, be, basis, backend_name):
    well = prepare_well(DoubleWellSpec.from_frequencies(proton, be, F0, 0.7e-3, compensate=True),
                        basis)
    z0 = np.array([well.z_min_a + 20e-6, 3.0, well.z_min_b - 5e-6, -1.0, 0.0])
    cfg = dyn.IntegratorConfig(dt=20e-9)
    fwd = dyn.run(well.trajectory, proton, be, z0, 4000 * 20e-9, cfg, f_max=F0,
                  backend=backend_name).state
    back = dyn.run(well.trajectory, proton, be, [fwd.z_a, -fwd.v_a, fwd.z_b, -fwd.v_b, 0.0],
                   4000 * 20e-9, cfg, f_max=F0, backend=backend_name).state
    got = np.array([back.z_a, -back.v_a, back.z_b, -back.v_b])
    want = z0[:4]
    assert np.all(np.abs(got - want) <= 1e-9 * np.abs(want))


def test_energy_zero_at_rest(proton, be):
    well = synthetic_well(proton, be, F0, 0.7e-3)
    e = dyn.energy_accounting([well.z_min_a, 0.0, well.z_min_b, 0.0, 0.0], well.trajectory,
                              proton, be)
    assert e == (0.0, 0.0, 0.0, 0.0)


def test_short_run_conserves_energy(proton, be, basis, backend_name):
    well = prepare_well(DoubleWellSpec.from_frequencies(proton, be, F0, 0.7e-3, compensate=True),
                        basis)
    z0 = [well.z_min_a + 30e-6, 0.0, well.z_min_b, 0.0, 0.0]
    e0 = dyn.energy_accounting(z0, well.trajectory, proton, be)[3]
    res = dyn.run(well.trajectory, proton, be, z0, 1e-3, backend=backend_name)
    assert res.ok
    assert abs(res.state.E_total - e0) < 1e-9 * e0


def test_backends_agree(proton, be):
    if len(dyn._backend.BACKENDS) < 2:
        pytest.skip("compiled kernel not built")
    well = synthetic_well(proton, be, F0, 0.7e-3)
    z0 = [well.z_min_a + 10e-6, 0.0, well.z_min_b, 0.0, 0.0]
    out = [dyn.run(well.trajectory, proton, be, z0, 2e-4, record_every=100, backend=b).records
           for b in ("python", "cython")]
    np.testing.assert_array_equal(out[0], out[1])


def test_records_columns(proton, be):
    well = synthetic_well(proton, be, F0, 0.7e-3)
    res = dyn.run(well.trajectory, proton, be, [well.z_min_a + 1e-6, 0, well.z_min_b, 0, 0],
                  1e-5, record_every=50)
    assert res.records.shape == (res.steps // 50 + 1, len(dyn.RECORD_COLUMNS))
    assert res.records[0, 0] == 0.0
    assert res.records[-1, 0] == pytest.approx(1e-5)


def test_collision_reported(proton, be, backend_name):
    flat = PotentialTable.harmonic(0.0, 0.0, -1e-3, 1e-3)
    traj = dyn.TrajectoryPotential.static(flat, -0.5e-3, 0.5e-3)
    res = dyn.run(traj, proton, be, [-0.4e-6, 0.0, 0.4e-6, 0.0, 0.0], 1e-7,
                  dyn.IntegratorConfig(dt=1e-8), f_max=1e5, backend=backend_name)
    assert res.status == "collided"
    with pytest.raises(dyn.CollisionError):
        dyn.step([-0.4e-6, 0.0, 0.4e-6, 0.0, 0.0], traj, dyn.IntegratorConfig(dt=1e-8),
                 proton, be, f_max=1e5)


def test_escape_reported(proton, be):
    well = synthetic_well(proton, be, F0, 0.7e-3, depth_K=1.0)
    lo, _ = well.trajectory.table_range()[0]
    res = dyn.run(well.trajectory, proton, be, [well.z_min_a, -2e3, well.z_min_b, 0, 0], 1e-5)
    assert res.status == "untrapped"


def test_coulomb_frequency_shift(proton, backend_name):
    """Stationary heavy partner shifts the proton by q_a q_b / (4 pi eps0 s0^3 m_a w_a)."""
    if backend_name == "python":
        pytest.skip("long run; covered by the compiled kernel")
    s0 = 0.7e-3
    heavy = spectator(charge=CONSTANTS.elementary_charge)
    predicted = CONSTANTS.coulomb * proton.charge * heavy.charge / (s0**3 * proton.mass * W0)

    def crossings(partner):
        traj = single_well(proton, partner)
        za, zb = dyn.coupled_equilibrium(traj, proton, partner)
        res = dyn.run(traj, proton, partner, [za + 1e-6, 0.0, zb, 0.0, 0.0], 20e-3,
                      dyn.IntegratorConfig(), record_every=5, backend=backend_name)
        t, z = res.records[:, 0], res.records[:, 1] - za
        up = np.nonzero((z[:-1] < 0) & (z[1:] >= 0))[0]
        tc = t[up] - z[up] * (t[up + 1] - t[up]) / (z[up + 1] - z[up])
        return 2 * math.pi / np.polyfit(np.arange(tc.size), tc, 1)[0]

    shift = crossings(heavy) - crossings(spectator())
    assert shift == pytest.approx(predicted, rel=0.10)


def test_frequency_harmonic_limit(proton):
    c = proton.mass * W0**2 / proton.charge

    def parabola(z, order=0):
        return (0.5 * c * z**2, c * z, c)[order] if order < 3 else 0.0

    f = dyn.axial_frequency_at_energy(parabola, proton, 1e-6 * CONSTANTS.kB, 0.0, (-1e-3, 1e-3))
    assert f == pytest.approx(F0, rel=1e-4)
    assert dyn.axial_frequency_at_energy(parabola, proton, 0.0, 0.0, (-1, 1)) == pytest.approx(F0)


def test_frequency_quartic_perturbation(proton):
    c = proton.mass * W0**2 / proton.charge
    b = 0.02 * c / (50e-6) ** 2            # 2 % quartic correction at 50 um

    def quartic(z, order=0):
        return (0.5 * c * z**2 + b * z**4, c * z + 4 * b * z**3, c + 12 * b * z**2)[order]

    energy = 0.05 * CONSTANTS.kB
    amp = math.sqrt(2 * energy / (proton.charge * c))
    # [DERIVED] first-order perturbation: w = w0 + 3 beta A^2 / (2 m w0) with beta = q b
    expected = F0 + 3 * proton.charge * b * amp**2 / (2 * proton.mass * W0) / (2 * math.pi)
    f = dyn.axial_frequency_at_energy(quartic, proton, energy, 0.0, (-1e-3, 1e-3))
    assert (f - F0) == pytest.approx(expected - F0, rel=0.01)


def test_frequency_decreases_with_energy(proton, be, basis):
    well = prepare_well(DoubleWellSpec.from_frequencies(proton, be, F0, 0.7e-3, compensate=True),
                        basis)
    # below ~1 K the nulled octupole leaves a slight stiffening (< 1e-4 relative)
    energies = np.array([1.0, 2.0, 3.0, 4.5, 6.0]) * CONSTANTS.kB
    f = [dyn.axial_frequency_at_energy(well.potential, proton, e, well.z_min_a, well.region_a)
         for e in energies]
    assert np.all(np.diff(f) < 0)
    low = dyn.axial_frequency_at_energy(well.potential, proton, 0.3 * CONSTANTS.kB,
                                        well.z_min_a, well.region_a)
    assert abs(low / F0 - 1) < 1e-4
    with pytest.raises(dyn.UntrappedError):
        dyn.axial_frequency_at_energy(well.potential, proton, 1.5 * well.depth_a * CONSTANTS.kB,
                                      well.z_min_a, well.region_a)


def test_phase_space_point_energy(proton, be, basis):
    well = prepare_well(DoubleWellSpec.from_frequencies(proton, be, F0, 0.7e-3, compensate=True),
                        basis)
    e = 2.0 * CONSTANTS.kB
    ref = proton.charge * float(well.potential(well.z_min_a))
    for phase in (0.0, 0.25, 0.6):
        z, v = dyn.phase_space_point(well.potential, proton, e, well.z_min_a, well.region_a, phase)
        got = 0.5 * proton.mass * v**2 + proton.charge * float(well.potential(z)) - ref
        assert got == pytest.approx(e, rel=1e-8)


def test_ground_state_point(be):
    z, v = dyn.ground_state_point(be, W0, 1e-4, 0.3)
    e = 0.5 * be.mass * (v**2 + W0**2 * (z - 1e-4) ** 2)
    assert e == pytest.approx(0.5 * CONSTANTS.hbar * W0, rel=1e-12)
    assert dyn.ground_state_point(be, W0, 1e-4, 0.3, zero_point=False) == (1e-4, 0.0)


def test_antiproton_inverted_well_bounded(antiproton, be, basis):
    spec = DoubleWellSpec.from_frequencies(antiproton, be, F0, 0.7e-3, compensate=True)
    well = prepare_well(spec, basis)
    assert float(well.potential(well.z_min_a, 2)) < 0
    za, va = dyn.phase_space_point(well.potential, antiproton, 3 * CONSTANTS.kB, well.z_min_a,
                                   well.region_a, 0.3)
    res = dyn.run(well.trajectory, antiproton, be, [za, va, well.z_min_b, 0, 0], 1e-3,
                  bounds=well.bounds)
    assert res.ok
