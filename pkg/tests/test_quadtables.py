import numpy as np
import pytest

from fraclap.quadtables import (
    build_tables,
    collapsed_triangle_rule,
    dump_tables,
    gauss_legendre_01,
    reference_basis,
    triangle_rules,
)
from printed_tables import PRINTED, generator_tables


@pytest.fixture(scope="module")
def tables():
    return build_tables()


@pytest.mark.parametrize("name", sorted(PRINTED))
def test_printed_values(tables, name):
    ours = getattr(tables, name)
    assert ours.shape == PRINTED[name].shape
    assert np.abs(ours - PRINTED[name]).max() <= 5e-5


@pytest.mark.parametrize("name", ["vpsi1", "vpsi2", "epsi1", "epsi2", "epsi3", "epsi4", "epsi5",
                                  "tpsi1", "tpsi2", "tpsi3", "cphi", "phiA", "phiB", "phiD"])
def test_matrices_match_loop_generators(tables, name):
    ref = generator_tables(tables)[name]
    np.testing.assert_allclose(getattr(tables, name), ref, rtol=0, atol=1e-15)


def test_shapes(tables):
    assert tables.p_cube.shape == (27, 3)
    assert tables.phiA.shape == tables.phiB.shape == tables.phiD.shape == (9, 36)
    assert tables.vpsi1.shape == (25, 27)
    assert all(e.shape == (16, 27) for e in tables.epsi)
    assert all(e.shape == (9, 9) for e in tables.tpsi)
    assert tables.cphi.shape == (9, 12)


def test_weight_sums(tables):
    assert tables.w_I.sum() == pytest.approx(1.0, abs=1e-14)
    assert tables.w_cube.sum() == pytest.approx(1.0, abs=1e-14)
    assert tables.w_T_6.sum() == pytest.approx(0.5, abs=1e-14)
    for a in (tables.w_I, tables.w_cube, tables.w_T_6, tables.w_T_12):
        assert np.all(a > 0)


def test_gauss_legendre_small():
    x, w = gauss_legendre_01(1)
    assert x.tolist() == [0.5] and w.tolist() == [1.0]
    x, _ = gauss_legendre_01(3)
    np.testing.assert_allclose(x, [0.1127, 0.5, 0.8873], atol=5e-5)
    x, w = gauss_legendre_01(9)
    i = np.argmin(abs(x - 0.5))
    assert x[i] == pytest.approx(0.5, abs=1e-15)
    assert w[i] == pytest.approx(0.1651, abs=5e-5)


@pytest.mark.parametrize("n", [1, 2, 3, 5, 9])
def test_gauss_legendre_exactness(n):
    x, w = gauss_legendre_01(n)
    for d in range(2 * n):
        assert w @ x ** d == pytest.approx(1.0 / (d + 1), rel=1e-13)


def test_gauss_legendre_rejects_zero():
    with pytest.raises(ValueError):
        gauss_legendre_01(0)


def _monomial_on_ref(a, b):
    # int over 0<=y<=x<=1 of x^a y^b
    return 1.0 / ((b + 1) * (a + b + 2))


@pytest.mark.parametrize("which,degree", [(0, 4), (1, 6)])
def test_triangle_rule_degree(which, degree):
    p6, w6, p12, w12 = triangle_rules()
    p, w = ((p6, w6), (p12, w12))[which]
    assert w.sum() == pytest.approx(0.5, abs=1e-12)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            val = w @ (p[:, 0] ** a * p[:, 1] ** b)
            assert val == pytest.approx(_monomial_on_ref(a, b), rel=1e-12, abs=1e-14)


def test_triangle_first_nodes():
    p6, _, p12, w12 = triangle_rules()
    np.testing.assert_allclose(p6[0], [0.5541, 0.4459], atol=5e-5)
    np.testing.assert_allclose(2 * w12[:3], 0.1168, atol=5e-5)
    np.testing.assert_allclose(2 * w12[3:6], 0.0508, atol=5e-5)
    np.testing.assert_allclose(2 * w12[6:], 0.0829, atol=5e-5)


def test_collapsed_rule_integrates_polynomials():
    p, w = collapsed_triangle_rule(6)
    assert w.sum() == pytest.approx(0.5, abs=1e-14)
    assert w @ (p[:, 0] ** 3 * p[:, 1] ** 2) == pytest.approx(_monomial_on_ref(3, 2), rel=1e-12)


def test_reference_basis_partition_of_unity():
    rng = np.random.default_rng(0)
    x = rng.random(20)
    y = x * rng.random(20)
    phi = reference_basis(np.column_stack([x, y]))
    np.testing.assert_allclose(phi.sum(axis=-1 if phi.shape[-1] == 3 else 0), 1.0, atol=1e-15)


def test_tpsi1_entry_33_equals_weights(tables):
    # psi_3 of the first family is identically one
    np.testing.assert_array_equal(tables.tpsi1[2 + 3 * 2], tables.w_I)


def test_vpsi1_entry_11(tables):
    x, y, z = tables.p_cube.T
    np.testing.assert_allclose(tables.vpsi1[0], tables.w_cube * (y - 1) ** 2 * y, rtol=1e-15)


def test_epsi_no_zero_column(tables):
    for e in tables.epsi:
        assert np.all(np.abs(e).max(axis=0) > 0)


def test_tpsi_rows_sum_to_zero(tables):
    # sum over j of psi_i psi_j vanishes since sum_j psi_j = 0 in each family
    for tp in tables.tpsi:
        blk = tp.reshape(3, 3, -1, order="F")
        np.testing.assert_allclose(blk.sum(axis=1), 0.0, atol=1e-15)


def test_nontouching_block_symmetry(tables):
    rng = np.random.default_rng(3)
    d = rng.random(36) + 0.1
    A = (tables.phiA @ d).reshape(3, 3, order="F")
    D = (tables.phiD @ d).reshape(3, 3, order="F")
    np.testing.assert_allclose(A, A.T, atol=1e-15)
    np.testing.assert_allclose(D, D.T, atol=1e-15)


def test_deterministic_build():
    a, b = build_tables(), build_tables()
    for k, v in a.arrays().items():
        np.testing.assert_array_equal(v, b.arrays()[k])


def test_raised_orders():
    t = build_tables(cube_points=5, interval_points=12, triangle_points=12)
    assert t.p_cube.shape == (125, 3)
    assert t.p_I.shape == (12,)
    assert t.w_cube.sum() == pytest.approx(1.0)


def test_dump_tables(tmp_path, tables):
    paths = dump_tables(tables, tmp_path)
    names = {p.stem for p in paths}
    assert {"p_cube", "phiA", "vpsi1", "epsi5", "tpsi3", "cphi"} <= names
    back = np.loadtxt(tmp_path / "phiA.csv", delimiter=",")
    np.testing.assert_array_equal(back, tables.phiA)
