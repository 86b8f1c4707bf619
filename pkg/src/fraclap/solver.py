"""Solution of the free-node system and solution export."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .assembly import StiffnessSystem
from .errors import NumericalError
from .mesh import Mesh

__all__ = ["Solution", "solve", "write_solution_csv", "sample_grid", "write_grid_csv"]


@dataclass(frozen=True, eq=False)
class Solution:
    values: np.ndarray
    mesh: Mesh
    s: float
    method: str = "cholesky"
    residual: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def free_values(self) -> np.ndarray:
        return self.values[self.mesh.free_nodes]


def solve(
    system: StiffnessSystem,
    method: str = "cholesky",
    tol: float = 1e-10,
    maxiter: int | None = None,
) -> Solution:
    """Solve K_ff u_f = b_f; u is zero on boundary and auxiliary nodes.

    ``method`` is ``"cholesky"`` (dense, default) or ``"cg"`` (conjugate
    gradients with a diagonal preconditioner, relative tolerance ``tol``).
    """
    Kf, bf = system.free_block()
    if not system.normalized:
        Kf = Kf * system.cns
    info = {}
    if len(bf) == 0:
        uf = np.zeros(0)
    elif method == "cholesky":
        try:
            c = scipy.linalg.cho_factor(Kf, lower=True, overwrite_a=True, check_finite=True)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"stiffness matrix is not positive definite: {exc}") from exc
        uf = scipy.linalg.cho_solve(c, bf)
    elif method == "cg":
        d = np.diag(Kf).copy()
        if np.any(d <= 0):
            raise NumericalError("non-positive diagonal entry in the stiffness matrix")
        M = scipy.sparse.linalg.LinearOperator(Kf.shape, matvec=lambda v: v / d, dtype=float)
        its = [0]

        def count(_):
            its[0] += 1

        uf, flag = scipy.sparse.linalg.cg(Kf, bf, rtol=tol, atol=0.0, M=M,
                                          maxiter=maxiter or 10 * len(bf), callback=count)
        info["iterations"] = its[0]
        if flag != 0:
            raise NumericalError(f"conjugate gradients did not converge (flag {flag}, {its[0]} iterations)")
    else:
        raise ValueError(f"unknown solver {method!r}")

    u = np.zeros(system.mesh.n_nodes)
    u[system.mesh.free_nodes] = uf
    # Kf may have been overwritten by the factorization
    scale = 1.0 if system.normalized else system.cns
    nb = np.linalg.norm(bf)
    r = scale * (system.K[system.mesh.free_nodes] @ u) - bf
    res = float(np.linalg.norm(r) / nb) if nb > 0 else 0.0
    return Solution(u, system.mesh, system.s, method, res, info)


def write_solution_csv(solution: Solution, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_index", "x", "y", "u"])
        for i, ((x, y), u) in enumerate(zip(solution.mesh.nodes.tolist(), solution.values.tolist())):
            w.writerow([i, repr(x), repr(y), repr(u)])


def sample_grid(solution: Solution, n: int = 101):
    """Piecewise-linear values on an n x n grid covering the domain.

    Points outside every domain triangle get 0 (the solution vanishes
    off the domain).
    """
    mesh = solution.mesh
    T = mesh.triangles[: mesh.n_domain]
    P = mesh.nodes[T]
    lo = P.reshape(-1, 2).min(0)
    hi = P.reshape(-1, 2).max(0)
    gx = np.linspace(lo[0], hi[0], n)
    gy = np.linspace(lo[1], hi[1], n)
    X, Y = np.meshgrid(gx, gy, indexing="xy")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    vals = np.zeros(len(pts))
    found = np.zeros(len(pts), dtype=bool)
    v0 = P[:, 0]
    e1 = P[:, 1] - v0
    e2 = P[:, 2] - v0
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    U = solution.values[T]
    step = max(1, 4_000_000 // max(len(T), 1))
    for a in range(0, len(pts), step):
        q = pts[a:a + step, None, :] - v0[None]
        l1 = (q[..., 0] * e2[:, 1] - q[..., 1] * e2[:, 0]) / det
        l2 = (e1[:, 0] * q[..., 1] - e1[:, 1] * q[..., 0]) / det
        l0 = 1 - l1 - l2
        inside = (l0 >= -1e-12) & (l1 >= -1e-12) & (l2 >= -1e-12)
        hit = inside.any(1)
        t = inside.argmax(1)
        r = np.arange(len(t))
        v = l0[r, t] * U[t, 0] + l1[r, t] * U[t, 1] + l2[r, t] * U[t, 2]
        vals[a:a + step] = np.where(hit, v, 0.0)
        found[a:a + step] = hit
    return gx, gy, vals.reshape(n, n), found.reshape(n, n)


def write_grid_csv(solution: Solution, path, n: int = 101) -> None:
    gx, gy, vals, _ = sample_grid(solution, n)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "u"])
        for j, y in enumerate(gy.tolist()):
            for i, x in enumerate(gx.tolist()):
                w.writerow([repr(x), repr(y), repr(float(vals[j, i]))])
