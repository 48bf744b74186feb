import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from doublewell.electrode_model import (AnalyticBasis, BasisSource, DomainError,
                                        IngestionError, TrapGeometry, TruncationError,
                                        build_analytic_basis, evaluate, export_basis,
                                        import_basis)


def test_geometry_defaults():
    g = TrapGeometry()
    assert g.n_electrodes == 9
    assert g.axial_extent == pytest.approx(g.stack_half_length + 2e-3)
    assert g.centers[g.central_electrode] == 0.0
    with pytest.raises(ValueError):
        TrapGeometry(n_electrodes=4)
    with pytest.raises(ValueError):
        TrapGeometry(gap=0.0)


def test_center_value_matches_dense_series(basis):
    g = basis.geometry
    c = g.central_electrode
    val = float(basis.evaluate(c, 0.0))
    dense = AnalyticBasis(g, series_terms=2000)
    assert 0.0 < val < 1.0
    assert val == pytest.approx(float(dense.evaluate(c, 0.0)), rel=1e-9)


def test_sum_of_electrodes_near_one_in_interior(basis):
    z = np.linspace(-0.2e-3, 0.2e-3, 21)
    total = basis.evaluate_all(z).sum(axis=0)
    assert np.all(np.abs(total - 1) < 0.05)


def test_far_field_small(basis):
    peak = np.abs(basis.evaluate_all(np.linspace(basis.z_min, basis.z_max, 2001))).max()
    edge = np.abs(basis.evaluate_all(np.array([basis.z_min + 1e-6, basis.z_max - 1e-6]))).max()
    assert edge < 1e-3 * peak


def test_mirror_symmetry(basis):
    n = basis.n_electrodes
    z = np.linspace(-1e-3, 1e-3, 17)
    for i in range(n):
        j = n - 1 - i
        for order in range(5):
            sign = (-1) ** order
            np.testing.assert_allclose(basis.evaluate(i, z, order),
                                       sign * basis.evaluate(j, -z, order),
                                       rtol=1e-9, atol=1e-12 * 10 ** (4 * order))


def test_odd_derivative_zero_at_center(basis):
    c = basis.geometry.central_electrode
    assert abs(float(basis.evaluate(c, 0.0, 1))) < 1e-9 * np.abs(basis.evaluate(c, np.linspace(-1e-3, 1e-3, 101), 1)).max()
    assert abs(float(basis.evaluate(c, 0.0, 3))) < 1e-9 * np.abs(basis.evaluate(c, np.linspace(-1e-3, 1e-3, 101), 3)).max()


def test_derivative_consistency_with_finite_differences(basis, rng):
    z = rng.uniform(-1.5e-3, 1.5e-3, 100)
    for order in range(1, 5):
        h = 1e-8 if order == 1 else 2e-7
        fd = (basis.evaluate_all(z + h, order - 1) - basis.evaluate_all(z - h, order - 1)) / (2 * h)
        exact = basis.evaluate_all(z, order)
        scale = np.abs(exact).max(axis=1, keepdims=True)
        assert np.max(np.abs(fd - exact) / scale) < 1e-5


def test_domain_and_order_errors(basis):
    with pytest.raises(DomainError):
        basis.evaluate_all(basis.z_max + 1e-6)
    with pytest.raises(ValueError):
        basis.evaluate_all(0.0, 5)
    with pytest.raises(IndexError):
        evaluate(basis, 9, 0.0)


def test_truncation_error_reported():
    with pytest.raises(TruncationError, match="tail bound"):
        build_analytic_basis(series_terms=50, tolerance=1e-14)


def test_linearity_zero_voltages(basis):
    z = np.linspace(-1e-3, 1e-3, 11)
    assert np.all(np.tensordot(np.zeros(9), basis.evaluate_all(z), axes=1) == 0)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=9, max_size=9),
       st.lists(st.floats(-5, 5), min_size=9, max_size=9))
def test_superposition_is_linear(v1, v2):
    b = _BASIS
    z = np.linspace(-1e-3, 1e-3, 7)
    phi = b.evaluate_all(z, 2)
    lhs = np.tensordot(np.add(v1, v2), phi, axes=1)
    rhs = np.tensordot(v1, phi, axes=1) + np.tensordot(v2, phi, axes=1)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-6)


_BASIS = build_analytic_basis()


@pytest.fixture(scope="module")
def imported(basis, tmp_path_factory):
    path = tmp_path_factory.mktemp("basis") / "basis.csv"
    z = np.linspace(basis.z_min, basis.z_max, 6201)
    export_basis(basis, z, path)
    return import_basis(path, basis.geometry), z


def test_import_reproduces_analytic(basis, imported):
    tab, z = imported
    assert tab.source is BasisSource.IMPORTED_TABLE
    mid = 0.5 * (z[1:] + z[:-1])
    mid = mid[np.abs(mid) < 1.5e-3]
    for order in (0, 2):
        a = basis.evaluate_all(mid, order)
        b = tab.evaluate_all(mid, order)
        assert np.max(np.abs(a - b)) / np.abs(a).max() < 1e-6


def test_import_constant_column():
    z = np.linspace(0, 1e-3, 101)
    header = "z," + ",".join(f"phi_{i},dphi_{i}" for i in range(1, 6))
    rows = [header] + [f"{x!r}," + ",".join("1.0,0.0" for _ in range(5)) for x in z.tolist()]
    tab = import_basis(io.StringIO("\n".join(rows)))
    zz = np.linspace(0.1e-3, 0.9e-3, 13)
    h = z[1] - z[0]
    for order in range(1, 5):
        # zero up to round-off amplified by 1 / h^order
        assert np.max(np.abs(tab.evaluate_all(zz, order))) * h**order < 1e-9


@pytest.mark.parametrize("mutate, message", [
    (lambda rows: rows.__setitem__(5, rows[5].replace(rows[5].split(",")[3], "nan", 1)), "row 6"),
    (lambda rows: rows.__setitem__(0, rows[0].replace("dphi_2", "dphi_x")), "missing column"),
    (lambda rows: rows.__setitem__(7, "0.5" + rows[7][rows[7].index(","):]), "row"),
])
def test_import_errors(mutate, message):
    z = np.linspace(0, 1e-3, 101)
    header = "z," + ",".join(f"phi_{i},dphi_{i}" for i in range(1, 6))
    rows = [header] + [f"{x!r}," + ",".join(f"{x!r},1.0" for _ in range(5)) for x in z.tolist()]
    mutate(rows)
    with pytest.raises(IngestionError, match=message):
        import_basis(io.StringIO("\n".join(rows)))
