"""Quadrature nodes, weights and the precomputed interaction tables.

Every table is regenerated at import-free startup from the rule
definitions below; nothing is loaded from disk.  The layouts follow the
reference element

    T = {(x1, x2) : 0 <= x1 <= 1, 0 <= x2 <= x1}

with vertices (0, 0), (1, 0), (1, 1) and local basis

    phi_1 = 1 - x1,   phi_2 = x1 - x2,   phi_3 = x2.

Rows of the ``*psi*``/``phi*`` matrices enumerate basis-function pairs
(i, j) in column-major order (``row = i + k * j`` for a k x k block), so
that ``(table @ d).reshape(k, k, order="F")`` is the block.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

__all__ = [
    "QuadTables",
    "build_tables",
    "dump_tables",
    "gauss_legendre_01",
    "reference_basis",
    "triangle_rules",
    "collapsed_triangle_rule",
]

# Permutation of the ascending 9-point rule giving the printed node order
# 0.5000, 0.0820, 0.9180, 0.0159, 0.9841, 0.3379, 0.6621, 0.8067, 0.1933.
_P_I_ORDER = (4, 1, 7, 0, 8, 3, 5, 6, 2)

# Symmetric rules on the unit simplex, barycentric coordinates with weights
# normalized to sum 1.  Degree 4 (6 points) and degree 6 (12 points).
_TRI6_A = 0.445948490915965
_TRI6_B = 1.0 - 2.0 * _TRI6_A
_TRI6_C = 0.091576213509771
_TRI6_D = 1.0 - 2.0 * _TRI6_C
_TRI6_W = (0.223381589678011, 0.109951743655322)

_TRI12_A = 0.249286745170910
_TRI12_B = 1.0 - 2.0 * _TRI12_A
_TRI12_C = 0.063089014491502
_TRI12_D = 1.0 - 2.0 * _TRI12_C
_TRI12_E1 = 0.053145049844817
_TRI12_E2 = 0.310352451033784
_TRI12_E3 = 1.0 - _TRI12_E1 - _TRI12_E2
_TRI12_W = (0.116786275726379, 0.050844906370207, 0.082851075618374)


def gauss_legendre_01(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre rule on [0, 1], nodes ascending."""
    if int(n) != n or n < 1:
        raise ValueError(f"point count must be a positive integer, got {n!r}")
    x, w = np.polynomial.legendre.leggauss(int(n))
    return 0.5 * (x + 1.0), 0.5 * w


def _bary_to_ref(lam: np.ndarray) -> np.ndarray:
    # (l1, l2, l3) -> l2 * (1, 0) + l3 * (1, 1)
    lam = np.asarray(lam, dtype=float)
    return np.column_stack([lam[:, 1] + lam[:, 2], lam[:, 2]])


def triangle_rules() -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """The 6- and 12-point symmetric rules on the reference triangle.

    Returns ``(p6, w6, p12, w12)``; both weight vectors sum to the area
    of the reference triangle, 1/2.  Node order matches the tabulated
    ``p_T_6``/``p_T_12`` listings.
    """
    a, b, c, d = _TRI6_A, _TRI6_B, _TRI6_C, _TRI6_D
    lam6 = [(a, b, a), (a, a, b), (b, a, a), (c, d, c), (c, c, d), (d, c, c)]
    w6 = np.repeat(_TRI6_W, 3)

    a, b, c, d = _TRI12_A, _TRI12_B, _TRI12_C, _TRI12_D
    e1, e2, e3 = _TRI12_E1, _TRI12_E2, _TRI12_E3
    lam12 = [
        (a, b, a), (a, a, b), (b, a, a),
        (c, d, c), (c, c, d), (d, c, c),
        (e2, e1, e3), (e3, e2, e1), (e1, e3, e2),
        (e3, e1, e2), (e2, e3, e1), (e1, e2, e3),
    ]
    w12 = np.concatenate([np.repeat(_TRI12_W[:2], 3), np.repeat(_TRI12_W[2], 6)])
    return _bary_to_ref(lam6), 0.5 * w6, _bary_to_ref(lam12), 0.5 * w12


def collapsed_triangle_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Conical-product Gauss rule with n*n points on the reference triangle.

    Exact for polynomials of total degree <= 2n - 2; weights sum to 1/2.
    """
    u, wu = gauss_legendre_01(n)
    v, wv = gauss_legendre_01(n)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    pts = np.column_stack([uu.ravel(), (uu * vv).ravel()])
    w = (np.outer(wu * u, wv)).ravel()
    return pts, w


def reference_basis(points: np.ndarray) -> np.ndarray:
    """Values of the three reference basis functions, shape (n, 3)."""
    p = np.atleast_2d(points)
    x, y = p[:, 0], p[:, 1]
    return np.column_stack([1.0 - x, x - y, y])


def _pair_rows(values: np.ndarray, extra: np.ndarray) -> np.ndarray:
    """Rows ``i + k*j`` holding ``values[:, i] * values[:, j] * extra``."""
    k = values.shape[1]
    out = np.empty((k * k, values.shape[0]))
    for j in range(k):
        for i in range(k):
            out[i + k * j] = values[:, i] * values[:, j] * extra
    return out


@dataclass(frozen=True)
class QuadTables:
    """Quadrature data and precomputed numerator tables.

    ``w_T_12`` keeps the tabulated convention (weights summing to 1, i.e.
    twice the area weights); ``cphi`` is built from it, which is why the
    complement block carries the factor ``2*pi*|T|/s``.
    """

    p_cube: np.ndarray
    w_cube: np.ndarray
    p_T_6: np.ndarray
    w_T_6: np.ndarray
    p_T_12: np.ndarray
    w_T_12: np.ndarray
    p_I: np.ndarray
    w_I: np.ndarray
    phiA: np.ndarray
    phiB: np.ndarray
    phiD: np.ndarray
    vpsi1: np.ndarray
    vpsi2: np.ndarray
    epsi1: np.ndarray
    epsi2: np.ndarray
    epsi3: np.ndarray
    epsi4: np.ndarray
    epsi5: np.ndarray
    tpsi1: np.ndarray
    tpsi2: np.ndarray
    tpsi3: np.ndarray
    cphi: np.ndarray
    orders: dict = field(default_factory=dict, compare=False)

    @property
    def vpsi(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vpsi1, self.vpsi2

    @property
    def epsi(self) -> tuple[np.ndarray, ...]:
        return self.epsi1, self.epsi2, self.epsi3, self.epsi4, self.epsi5

    @property
    def tpsi(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.tpsi1, self.tpsi2, self.tpsi3

    def arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "orders"}


def _nontouching_tables(p: np.ndarray, w: np.ndarray):
    """phiA, phiB, phiD with columns ``a + n*b`` (a: point in T_l, b: in T_m)."""
    n = len(w)
    phi = reference_basis(p)
    W = np.outer(w, w)  # W[a, b]
    phiA = np.empty((9, n * n))
    phiB = np.empty((9, n * n))
    phiD = np.empty((9, n * n))
    for j in range(3):
        for i in range(3):
            r = i + 3 * j
            # column-major flattening of an (a, b) array gives index a + n*b
            phiA[r] = (W * (phi[:, i] * phi[:, j])[:, None]).ravel(order="F")
            phiB[r] = (W * np.outer(phi[:, i], -phi[:, j])).ravel(order="F")
            phiD[r] = (W * (phi[:, i] * phi[:, j])[None, :]).ravel(order="F")
    return phiA, phiB, phiD


def _vertex_psi(p: np.ndarray):
    x, y, z = p.T
    one = np.ones_like(x)
    psi1 = np.column_stack([y - 1.0, 1.0 - x, x, -y * (1.0 - z), -y * z])
    psi2 = np.column_stack([1.0 - y, y * (1.0 - z), y * z, -(1.0 - one * x), -x])
    return psi1, psi2


def _edge_psi(p: np.ndarray):
    x, y, z = p.T
    psi = [
        np.column_stack([-x * y, x * (1 - z), x * z, -x * (1 - y)]),
        np.column_stack([-x * y * z, -x * (1 - y), x, -x * y * (1 - z)]),
        np.column_stack([x * y, -x * (1 - y * z), x * (1 - y), -x * y * z]),
        np.column_stack([x * y * z, x * (1 - y), x * y * (1 - z), -x]),
        np.column_stack([x * y * z, -x * (1 - y), x * (1 - y * z), -x * y]),
    ]
    jac = [x**2, x**2 * y, x**2 * y, x**2 * y, x**2 * y]
    return psi, jac


def _identical_psi(t: np.ndarray):
    one = np.ones_like(t)
    return [
        np.column_stack([-t, -(1 - t), one]),
        np.column_stack([-one, 1 - t, t]),
        np.column_stack([t, -one, 1 - t]),
    ]


def build_tables(
    cube_points: int = 3,
    interval_points: int = 9,
    triangle_points: int | None = None,
) -> QuadTables:
    """Generate every quadrature table.

    The defaults reproduce the tabulated rules: a 3x3x3 tensor Gauss rule
    on the cube, the 9-point Gauss rule on [0, 1], and the 6/12-point
    symmetric triangle rules.  Raising ``cube_points``/``interval_points``
    or passing ``triangle_points=n`` (conical n*n rule for both triangle
    rules) gives higher-order tables for reference computations.
    """
    g, gw = gauss_legendre_01(cube_points)
    p_cube = np.array(list(itertools.product(g, g, g)))
    w_cube = np.array([a * b * c for a, b, c in itertools.product(gw, gw, gw)])

    p_I, w_I = gauss_legendre_01(interval_points)
    if interval_points == 9:
        p_I, w_I = p_I[list(_P_I_ORDER)], w_I[list(_P_I_ORDER)]

    if triangle_points is None:
        p6, w6, p12, w12 = triangle_rules()
    else:
        p6, w6 = collapsed_triangle_rule(triangle_points)
        p12, w12 = p6, w6
    w12 = 2.0 * w12  # tabulated normalization

    phiA, phiB, phiD = _nontouching_tables(p6, w6)

    vp1, vp2 = _vertex_psi(p_cube)
    vjac = p_cube[:, 1] * w_cube
    vpsi1 = _pair_rows(vp1, vjac)
    vpsi2 = _pair_rows(vp2, vjac)

    epsi_vals, ejac = _edge_psi(p_cube)
    epsi = [_pair_rows(v, jac * w_cube) for v, jac in zip(epsi_vals, ejac)]

    tpsi = [_pair_rows(v, w_I) for v in _identical_psi(p_I)]

    cphi = _pair_rows(reference_basis(p12), w12)

    arrays = dict(
        p_cube=p_cube, w_cube=w_cube, p_T_6=p6, w_T_6=w6, p_T_12=p12, w_T_12=w12,
        p_I=p_I, w_I=w_I, phiA=phiA, phiB=phiB, phiD=phiD, vpsi1=vpsi1, vpsi2=vpsi2,
        epsi1=epsi[0], epsi2=epsi[1], epsi3=epsi[2], epsi4=epsi[3], epsi5=epsi[4],
        tpsi1=tpsi[0], tpsi2=tpsi[1], tpsi3=tpsi[2], cphi=cphi,
    )
    for a in arrays.values():
        a.setflags(write=False)
    orders = dict(cube_points=cube_points, interval_points=interval_points,
                  triangle_points=triangle_points)
    return QuadTables(**arrays, orders=orders)


def dump_tables(tables: QuadTables, directory: str | Path) -> list[Path]:
    """Write each table as ``<name>.csv`` under ``directory``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, arr in tables.arrays().items():
        path = out / f"{name}.csv"
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            for row in np.atleast_2d(arr.reshape(arr.shape[0], -1) if arr.ndim > 1 else arr[:, None]):
                writer.writerow([repr(float(v)) for v in row])
        written.append(path)
    return written
