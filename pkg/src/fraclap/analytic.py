"""Explicit solutions on the unit disk and error measurement.

For k >= 0 and 0 < s < 1 the function u = (1 - |x|^2)_+^s P_k^{(s,0)}(2|x|^2 - 1)
satisfies (-Delta)^s u = lambda_{k,s} P_k^{(s,0)}(2|x|^2 - 1) in the unit disk.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import roots_jacobi

from .assembly import StiffnessSystem
from .errors import NumericalError
from .kernels import check_order
from .mesh import Mesh
from .quadtables import triangle_rules

__all__ = [
    "jacobi",
    "eigenvalue_lambda",
    "ExactSolution",
    "exact_pair",
    "integral_fu",
    "l2_error",
    "energy_error",
    "RateTable",
    "fit_slope",
    "convergence_study",
]


def _log_binom(n: float, j: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(j + 1) - math.lgamma(n - j + 1)


def jacobi(k: int, alpha: float, beta: float, z):
    """Jacobi polynomial P_k^{(alpha, beta)}(z) by an explicit finite sum.

    Uses the two-sided form
    sum_m C(k+alpha, k-m) C(k+beta, m) ((z-1)/2)^m ((z+1)/2)^(k-m).
    All binomials are positive for alpha, beta > -1, and the terms stay
    small on [-1, 1]; the one-sided sum in powers of (z-1)/2 loses about
    eight digits at k = 10.
    """
    if int(k) != k or k < 0:
        raise ValueError(f"degree must be a non-negative integer, got {k}")
    if alpha <= -1 or beta <= -1:
        raise ValueError("alpha and beta must exceed -1")
    k = int(k)
    z = np.asarray(z, dtype=float)
    a = (z - 1.0) / 2.0
    b = (z + 1.0) / 2.0
    out = np.zeros_like(z)
    for m in range(k + 1):
        c = math.exp(_log_binom(k + alpha, k - m) + _log_binom(k + beta, m))
        out = out + c * a**m * b ** (k - m)
    return out


def eigenvalue_lambda(k: int, s: float, n: int = 2) -> float:
    if int(k) != k or k < 0:
        raise ValueError(f"k must be a non-negative integer, got {k}")
    s = check_order(s)
    return math.exp(2 * s * math.log(2) + math.lgamma(1 + s + k) + math.lgamma(n / 2 + s + k)
                    - math.lgamma(k + 1) - math.lgamma(n / 2 + k))


@dataclass(frozen=True)
class ExactSolution:
    """u = scale * omega^s * P_k(2r^2 - 1),  f = rhs_scale * P_k(2r^2 - 1)."""

    k: int
    s: float
    lam: float
    scale: float = 1.0
    rhs_scale: float = 1.0

    def profile(self, x, y):
        r2 = np.asarray(x) ** 2 + np.asarray(y) ** 2
        return jacobi(self.k, self.s, 0.0, 2.0 * r2 - 1.0), r2

    def u(self, x, y):
        p, r2 = self.profile(x, y)
        w = np.clip(1.0 - r2, 0.0, None) ** self.s
        return self.scale * w * p

    def f(self, x, y):
        p, r2 = self.profile(x, y)
        return np.where(r2 <= 1.0, self.rhs_scale * p, 0.0)

    __call__ = u


def exact_pair(k: int, s: float, unit_source: bool = False) -> ExactSolution:
    """Exact pair of degree k.

    By default u = omega^s P_k and f = lambda_{k,s} P_k.  With
    ``unit_source`` (k = 0 only) f = 1 and u = omega^s / lambda_{0,s}.
    """
    s = check_order(s)
    lam = eigenvalue_lambda(k, s)
    if unit_source:
        if k != 0:
            raise ValueError("a unit source corresponds to k = 0")
        return ExactSolution(0, s, lam, 1.0 / lam, 1.0)
    return ExactSolution(int(k), s, lam, 1.0, lam)


def integral_fu(exact: ExactSolution, n: int | None = None) -> float:
    """Exact value of the integral of f * u over the unit disk.

    In polar form with t = r^2 and z = 2t - 1 it becomes
    pi 2^{-s-1} int_{-1}^{1} (1-z)^s P_k(z)^2 dz, integrated exactly by
    Gauss-Jacobi quadrature.
    """
    n = n or exact.k + 2
    z, w = roots_jacobi(n, exact.s, 0.0)
    p = jacobi(exact.k, exact.s, 0.0, z)
    val = math.pi * 2.0 ** (-exact.s - 1) * float(w @ (p * p))
    return exact.scale * exact.rhs_scale * val


def _red_refine(P):
    a, b, c = P[:, 0], P[:, 1], P[:, 2]
    ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
    return np.stack([np.stack(t, 1) for t in ((a, ab, ca), (ab, b, bc), (ca, bc, c), (bc, ca, ab))], 1)


def l2_error(mesh: Mesh, values: np.ndarray, exact) -> float:
    """||u - u_h|| over the domain triangles.

    12-point rule per element; elements with a vertex on the boundary are
    split once into four before integrating, since u behaves like
    dist^s there.
    """
    values = getattr(values, "values", values)
    T = mesh.triangles[: mesh.n_domain]
    P = mesh.nodes[T]
    U = np.asarray(values, dtype=float)[T]
    on_bnd = np.zeros(mesh.n_nodes, dtype=bool)
    on_bnd[mesh.boundary_nodes] = True
    layer = on_bnd[T].any(1)
    _, _, p12, w12 = triangle_rules()
    lam = np.column_stack([1 - p12[:, 0], p12[:, 0] - p12[:, 1], p12[:, 1]])
    w = 2.0 * w12  # barycentric weights summing to 1

    def accumulate(P, U):
        e1 = P[:, 1] - P[:, 0]
        e2 = P[:, 2] - P[:, 0]
        area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        x = np.einsum("qa,nab->nqb", lam, P)
        uh = U @ lam.T
        ue = exact(x[..., 0], x[..., 1])
        return float(((ue - uh) ** 2 @ w) @ area)

    total = accumulate(P[~layer], U[~layer])
    if layer.any():
        Pc = _red_refine(P[layer]).reshape(-1, 3, 2)
        # child vertices are averages of parent vertices; interpolate u_h alike
        Ul = U[layer]
        ua, ub, uc = Ul[:, 0], Ul[:, 1], Ul[:, 2]
        uab, ubc, uca = (ua + ub) / 2, (ub + uc) / 2, (uc + ua) / 2
        Uc = np.stack([np.stack(t, 1) for t in ((ua, uab, uca), (uab, ub, ubc), (uca, ubc, uc), (ubc, uca, uab))], 1)
        total += accumulate(Pc, Uc.reshape(-1, 3))
    return math.sqrt(total)


def energy_error(system: StiffnessSystem, values, exact: ExactSolution, fu: float | None = None) -> float:
    """Energy-norm error via  |u - u_h|^2 = int f u - u_f^T K_ff u_f."""
    values = getattr(values, "values", values)
    f = system.mesh.free_nodes
    u = np.zeros(system.mesh.n_nodes)
    u[f] = np.asarray(values, dtype=float)[f]
    quad = float(u[f] @ (system.K[f] @ u))
    if not system.normalized:
        quad *= system.cns
    if fu is None:
        fu = integral_fu(exact)
    rad = fu - quad
    if rad < -1e-10:
        raise NumericalError(f"negative energy radicand {rad:.3e}: inconsistent system and exact solution")
    return math.sqrt(max(rad, 0.0))


def fit_slope(x, y) -> float:
    """Least-squares slope of log y against log x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2 or np.any(x <= 0) or np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise ValueError("slope undefined: need at least two positive values")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


@dataclass
class RateTable:
    h: list
    dofs: list
    l2: list
    energy: list
    s: float
    k: int
    used: slice = slice(None)
    rows: list = field(default_factory=list)

    @property
    def slopes(self) -> dict:
        u = self.used
        return {
            "l2_h": fit_slope(self.h[u], self.l2[u]),
            "energy_h": fit_slope(self.h[u], self.energy[u]),
            "l2_dofs": fit_slope(self.dofs[u], self.l2[u]),
            "energy_dofs": fit_slope(self.dofs[u], self.energy[u]),
        }

    def write_csv(self, path) -> None:
        sl = self.slopes
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["h", "dofs", "l2_error", "energy_error"])
            for row in zip(self.h, self.dofs, self.l2, self.energy):
                w.writerow([repr(float(v)) for v in row])
            w.writerow(["slope_h", "slope_dofs", "", ""])
            w.writerow(["l2", repr(sl["l2_h"]), repr(sl["l2_dofs"]), ""])
            w.writerow(["energy", repr(sl["energy_h"]), repr(sl["energy_dofs"]), ""])


def convergence_study(
    s: float,
    k: int,
    hs,
    *,
    domain_radius: float = 1.0,
    ball_radius: float = 1.1,
    unit_source: bool | None = None,
    drop_coarsest: int = 0,
    tables=None,
    threads: int = 1,
    solver: str = "cholesky",
    systems_cache: dict | None = None,
    progress=None,
) -> RateTable:
    """Solve on a ladder of disk meshes and fit log-log rates.

    ``unit_source`` defaults to True for k = 0 (f = 1).  The first
    ``drop_coarsest`` levels are computed and reported but left out of
    the slope fit.  ``systems_cache`` lets callers reuse assembled
    matrices across k for the same (s, h, R).
    """
    from .assembly import assemble, load_vector
    from .mesh import generate_disk_mesh
    from .solver import solve

    hs = [float(h) for h in hs]
    if len(hs) - drop_coarsest < 3:
        raise ValueError("a convergence study needs at least three mesh sizes in the fit")
    if domain_radius != 1.0:
        raise ValueError("exact solutions are available on the unit disk only")
    if unit_source is None:
        unit_source = k == 0
    exact = exact_pair(k, s, unit_source=unit_source)
    fu = integral_fu(exact)
    out = RateTable([], [], [], [], s, k)
    for h in hs:
        key = (s, h, ball_radius)
        if systems_cache is not None and key in systems_cache:
            base = systems_cache[key]
        else:
            mesh = generate_disk_mesh(domain_radius, h, ball_radius)
            base = assemble(mesh, s, None, tables, threads=threads)
            if systems_cache is not None:
                systems_cache[key] = base
        mesh = base.mesh
        b = load_vector(mesh, exact.f)
        system = StiffnessSystem(base.K, b, base.s, base.cns, mesh, base.normalized, base.timings)
        sol = solve(system, solver)
        e2 = l2_error(mesh, sol.values, exact)
        ee = energy_error(system, sol.values, exact, fu)
        out.h.append(h)
        out.dofs.append(len(mesh.free_nodes))
        out.l2.append(e2)
        out.energy.append(ee)
        if progress:
            progress(h, len(mesh.free_nodes), e2, ee)
    out.h, out.dofs, out.l2, out.energy = (np.array(v) for v in (out.h, out.dofs, out.l2, out.energy))
    out.used = slice(drop_coarsest, None)
    return out
