import csv

import numpy as np
import pytest

from fraclap.assembly import StiffnessSystem, assemble
from fraclap.errors import NumericalError
from fraclap.mesh import generate_disk_mesh, make_mesh
from fraclap.quadtables import build_tables
from fraclap.solver import sample_grid, solve, write_grid_csv, write_solution_csv


@pytest.fixture(scope="module")
def system():
    m = generate_disk_mesh(1.0, 0.15, 1.1)
    return assemble(m, 0.5, None, build_tables())


def _tiny(K, b):
    # one free node surrounded by boundary nodes
    m = make_mesh([[0, 0], [1, 0], [0, 1], [-1, -1]], [[0, 1, 2], [0, 2, 3], [0, 3, 1]], 0,
                  [1, 2, 3], [0], 5.0)
    Kfull = np.eye(4)
    Kfull[0, 0] = K
    bfull = np.zeros(4)
    bfull[0] = b
    return StiffnessSystem(Kfull, bfull, 0.5, 1.0, m)


def test_one_by_one():
    sol = solve(_tiny(2.0, 4.0))
    assert sol.values[0] == pytest.approx(2.0, rel=1e-15)
    assert np.all(sol.values[1:] == 0)
    assert sol.free_values.tolist() == [sol.values[0]]


def test_non_spd_raises():
    with pytest.raises(NumericalError):
        solve(_tiny(-1.0, 1.0))


def test_unknown_method():
    with pytest.raises(ValueError):
        solve(_tiny(2.0, 1.0), method="lu")


def test_residual_and_zero_outside(system):
    sol = solve(system)
    assert sol.residual <= 1e-10
    m = system.mesh
    assert np.all(sol.values[m.boundary_nodes] == 0)
    assert np.all(sol.values[m.auxiliary_nodes] == 0)


def test_cg_agrees_with_cholesky(system):
    a = solve(system)
    b = solve(system, "cg", tol=1e-12)
    assert np.linalg.norm(a.values - b.values) <= 1e-8 * np.linalg.norm(a.values)
    assert b.info["iterations"] > 0


def test_cg_iteration_cap(system):
    with pytest.raises(NumericalError):
        solve(system, "cg", tol=1e-14, maxiter=2)


def test_energy_identity(system):
    sol = solve(system)
    Kf, bf = system.free_block()
    uf = sol.free_values
    assert uf @ Kf @ uf == pytest.approx(bf @ uf, rel=1e-9)


def test_unnormalized_system_gives_same_solution():
    m = generate_disk_mesh(1.0, 0.25, 1.1)
    t = build_tables()
    a = solve(assemble(m, 0.3, None, t))
    b = solve(assemble(m, 0.3, None, t, normalize=False))
    np.testing.assert_allclose(a.values, b.values, rtol=1e-11, atol=1e-14)
    assert b.residual <= 1e-10


def test_positive_for_unit_source(system):
    sol = solve(system)
    assert np.all(sol.free_values >= 0)


def test_permutation_invariance(system):
    Kf, bf = system.free_block()
    perm = np.random.default_rng(2).permutation(len(bf))
    import scipy.linalg

    u = scipy.linalg.cho_solve(scipy.linalg.cho_factor(Kf), bf)
    up = scipy.linalg.cho_solve(scipy.linalg.cho_factor(Kf[np.ix_(perm, perm)]), bf[perm])
    np.testing.assert_allclose(up, u[perm], rtol=1e-10)


def test_solution_csv(tmp_path, system):
    sol = solve(system)
    path = tmp_path / "u.csv"
    write_solution_csv(sol, path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["node_index", "x", "y", "u"]
    assert len(rows) == system.mesh.n_nodes + 1
    i = 5
    assert float(rows[i + 1][3]) == sol.values[i]


def test_grid_sampling(tmp_path, system):
    sol = solve(system)
    gx, gy, vals, found = sample_grid(sol, 21)
    assert vals.shape == (21, 21)
    # centre of the grid is the origin, a mesh node
    assert vals[10, 10] == pytest.approx(sol.values[0], rel=1e-12)
    assert not found[0, 0]  # corner of the bounding box lies outside the disk
    write_grid_csv(sol, tmp_path / "g.csv", 11)
    rows = list(csv.reader((tmp_path / "g.csv").open()))
    assert rows[0] == ["x", "y", "u"] and len(rows) == 122
