"""Element interaction blocks for the kernel |x - y|^-(2 + 2s).

Each touching case uses a Duffy-type change of variables that integrates
the radial singular factor exactly, leaving a smooth integrand on the
unit cube (vertex, edge) or the unit interval (identical element).  The
batched ``*_blocks`` functions take vertex coordinates already arranged
in the local numbering and return stacks of blocks; the singular-pair
wrappers accept a :class:`~fraclap.mesh.PairClass`.

Local numberings
----------------
identical   [v1, v2, v3] of the element
vertex      [shared, l's other two, m's other two] (positional order)
edge        [P1, P2, Ql, Qm]: shared nodes in l's order, then the
            non-shared node of l and of m
disjoint    [l's three nodes, m's three nodes]
"""

from __future__ import annotations

import numpy as np

from .errors import MeshValidationError
from .mesh import DISJOINT, EDGE, IDENTICAL, VERTEX, ElementMap, PairClass
from .quadtables import QuadTables

__all__ = [
    "check_order",
    "inv_pow",
    "identical_blocks",
    "vertex_blocks",
    "edge_blocks",
    "nontouching_blocks",
    "complement_blocks",
    "identical_block",
    "vertex_block",
    "edge_block",
    "nontouching_block",
    "complement_block",
    "pair_block",
    "psi_complement",
]


def check_order(s: float) -> float:
    s = float(s)
    if not 0.0 < s < 1.0:
        raise ValueError(f"fractional order must lie in (0, 1), got {s}")
    return s


def inv_pow(r2: np.ndarray, s: float) -> np.ndarray:
    """|d|^-(2+2s) from the squared distance."""
    return np.power(r2, -1.0 - s)


def _areas(P: np.ndarray) -> np.ndarray:
    e1 = P[..., 1, :] - P[..., 0, :]
    e2 = P[..., 2, :] - P[..., 0, :]
    return 0.5 * np.abs(e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0])


def _check_nondegenerate(B: np.ndarray) -> None:
    det = B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0]
    scale = np.abs(B).reshape(len(B), -1).max(1)
    if np.any(np.abs(det) <= 1e-14 * scale**2):
        raise MeshValidationError("degenerate element (zero determinant)")


def _dist(Bl, a, Bm, b, s):
    """inv_pow(|Bl a - Bm b|^2) for coefficient arrays a, b of shape (q, 2).

    Bl, Bm: (n, 2, 2).  Returns (q, n).
    """
    d = a @ Bl.transpose(0, 2, 1) - b @ Bm.transpose(0, 2, 1)  # (n, q, 2)
    r2 = d[..., 0] ** 2 + d[..., 1] ** 2
    return inv_pow(r2, s).T


def _reshape_blocks(flat: np.ndarray, k: int) -> np.ndarray:
    # flat (k*k, n) with row i + k*j -> (n, k, k) block[i, j]
    return flat.T.reshape(-1, k, k).transpose(0, 2, 1)


def identical_blocks(P: np.ndarray, s: float, tables: QuadTables) -> np.ndarray:
    """I_{l,l} for triangles with vertices P (n, 3, 2)."""
    s = check_order(s)
    P = np.asarray(P, dtype=float).reshape(-1, 3, 2)
    B = np.stack([P[:, 1] - P[:, 0], P[:, 2] - P[:, 1]], axis=2)
    _check_nondegenerate(B)
    area = _areas(P)
    t = tables.p_I
    one = np.ones_like(t)
    zero = np.zeros_like(t)
    col = lambda a, b: np.column_stack([a, b])  # noqa: E731
    Bz = np.zeros_like(B)
    acc = tables.tpsi1 @ _dist(B, col(t, one), Bz, col(zero, zero), s)
    acc += tables.tpsi2 @ _dist(B, col(one, t), Bz, col(zero, zero), s)
    acc += tables.tpsi3 @ _dist(B, col(t, t - 1.0), Bz, col(zero, zero), s)
    pref = 8.0 * area**2 / ((4 - 2 * s) * (3 - 2 * s) * (2 - 2 * s))
    return pref[:, None, None] * _reshape_blocks(acc, 3)


def vertex_blocks(P: np.ndarray, s: float, tables: QuadTables) -> np.ndarray:
    """Vertex-touching pairs, P (n, 5, 2) = [shared, l1, l2, m1, m2]."""
    s = check_order(s)
    P = np.asarray(P, dtype=float).reshape(-1, 5, 2)
    # B columns: (first other - shared, second other - first other)
    Bl = np.stack([P[:, 1] - P[:, 0], P[:, 2] - P[:, 1]], axis=2)
    Bm = np.stack([P[:, 3] - P[:, 0], P[:, 4] - P[:, 3]], axis=2)
    _check_nondegenerate(Bl)
    _check_nondegenerate(Bm)
    x, y, z = tables.p_cube.T
    a = np.column_stack([np.ones_like(x), x])
    b = np.column_stack([y, y * z])
    acc = tables.vpsi1 @ _dist(Bl, a, Bm, b, s)
    acc += tables.vpsi2 @ _dist(Bm, a, Bl, b, s)
    al = _areas(P[:, [0, 1, 2]])
    am = _areas(P[:, [0, 3, 4]])
    pref = 4.0 * al * am / (4 - 2 * s)
    return pref[:, None, None] * _reshape_blocks(acc, 5)


def edge_blocks(P: np.ndarray, s: float, tables: QuadTables) -> np.ndarray:
    """Edge-touching pairs, P (n, 4, 2) = [P1, P2, Ql, Qm]."""
    s = check_order(s)
    P = np.asarray(P, dtype=float).reshape(-1, 4, 2)
    # both maps send [0,1] x {0} onto the shared edge P1 -> P2
    Bl = np.stack([P[:, 1] - P[:, 0], P[:, 2] - P[:, 1]], axis=2)
    Bm = np.stack([P[:, 1] - P[:, 0], P[:, 3] - P[:, 1]], axis=2)
    _check_nondegenerate(Bl)
    _check_nondegenerate(Bm)
    x, y, z = tables.p_cube.T
    one = np.ones_like(x)
    c = np.column_stack
    args = [
        (c([one, x * z]), c([1 - x * y, x * (1 - y)])),
        (c([one, x]), c([1 - x * y * z, x * y * (1 - z)])),
        (c([1 - x * y, x * (1 - y)]), c([one, x * y * z])),
        (c([1 - x * y * z, x * y * (1 - z)]), c([one, x])),
        (c([1 - x * y * z, x * (1 - y * z)]), c([one, x * y])),
    ]
    acc = 0.0
    for psi, (a, b) in zip(tables.epsi, args):
        acc = acc + psi @ _dist(Bl, a, Bm, b, s)
    al = _areas(P[:, [0, 1, 2]])
    am = _areas(P[:, [0, 1, 3]])
    pref = 4.0 * al * am / (4 - 2 * s)
    return pref[:, None, None] * _reshape_blocks(acc, 4)


def nontouching_blocks(Pl: np.ndarray, Pm: np.ndarray, s: float, tables: QuadTables) -> np.ndarray:
    """Blocks for pairs with disjoint closures; Pl, Pm (n, 3, 2)."""
    s = check_order(s)
    Pl = np.asarray(Pl, dtype=float).reshape(-1, 3, 2)
    Pm = np.asarray(Pm, dtype=float).reshape(-1, 3, 2)
    Bl = np.stack([Pl[:, 1] - Pl[:, 0], Pl[:, 2] - Pl[:, 1]], axis=2)
    Bm = np.stack([Pm[:, 1] - Pm[:, 0], Pm[:, 2] - Pm[:, 1]], axis=2)
    p = tables.p_T_6
    nq = len(p)
    xl = p @ Bl.transpose(0, 2, 1) + Pl[:, None, 0]  # (n, q, 2)
    xm = p @ Bm.transpose(0, 2, 1) + Pm[:, None, 0]
    diff = xl[:, :, None, :] - xm[:, None, :, :]  # (n, a, b, 2)
    r2 = (diff**2).sum(-1)
    if np.any(r2 < 1e-28):
        raise MeshValidationError("elements passed as disjoint share quadrature points")
    # column index a + nq*b
    d = inv_pow(r2, s).transpose(0, 2, 1).reshape(len(Pl), nq * nq).T
    A = _reshape_blocks(tables.phiA @ d, 3)
    Bb = _reshape_blocks(tables.phiB @ d, 3)
    D = _reshape_blocks(tables.phiD @ d, 3)
    out = np.empty((len(Pl), 6, 6))
    out[:, :3, :3] = A
    out[:, :3, 3:] = Bb
    out[:, 3:, :3] = Bb.transpose(0, 2, 1)
    out[:, 3:, 3:] = D
    pref = 4.0 * _areas(Pl) * _areas(Pm)
    return pref[:, None, None] * out


def _rho0_weight(r: np.ndarray, R: float, s: float, tables: QuadTables) -> np.ndarray:
    # sum_q W_q rho0(theta_q, (r, 0))^-2s ; evaluating on the x1-axis keeps
    # the result exactly radial
    th = 2.0 * np.pi * tables.p_I
    rr = r[..., None]
    rho = -rr * np.cos(th) + np.sqrt(R * R - (rr * np.sin(th)) ** 2)
    return (rho ** (-2.0 * s)) @ tables.w_I


def psi_complement(x, R: float, s: float, tables: QuadTables):
    """Integral of |x - y|^-(2+2s) over |y| > R, by the angular rule."""
    s = check_order(s)
    x = np.asarray(x, dtype=float)
    r = np.sqrt((x**2).sum(-1))
    if np.any(r >= R):
        raise ValueError("point must lie strictly inside the ball")
    return (np.pi / s) * _rho0_weight(r, float(R), s, tables)


def complement_blocks(P: np.ndarray, R: float, s: float, tables: QuadTables) -> np.ndarray:
    """Twice the complement block J_l for triangles P (n, 3, 2)."""
    s = check_order(s)
    P = np.asarray(P, dtype=float).reshape(-1, 3, 2)
    if np.any((P**2).sum(-1) > (R * (1 + 1e-12)) ** 2):
        raise MeshValidationError("element lies outside the enclosing ball")
    B = np.stack([P[:, 1] - P[:, 0], P[:, 2] - P[:, 1]], axis=2)
    x = tables.p_T_12 @ B.transpose(0, 2, 1) + P[:, None, 0]  # (n, k, 2)
    r = np.sqrt((x**2).sum(-1))
    weight = _rho0_weight(r, float(R), s, tables)  # (n, k)
    blocks = _reshape_blocks(tables.cphi @ weight.T, 3)
    return (2.0 * np.pi * _areas(P) / s)[:, None, None] * blocks


# single-pair conveniences --------------------------------------------------


def _coords(nodes, idx):
    return np.asarray(nodes, dtype=float)[list(idx)][None]


def identical_block(map_l: ElementMap, s: float, tables: QuadTables) -> np.ndarray:
    P = map_l(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]))
    return identical_blocks(P[None], s, tables)[0]


def complement_block(map_l: ElementMap, R: float, s: float, tables: QuadTables) -> np.ndarray:
    P = map_l(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]))
    return complement_blocks(P[None], R, s, tables)[0]


def nontouching_block(map_l: ElementMap, map_m: ElementMap, s: float, tables: QuadTables) -> np.ndarray:
    ref = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
    return nontouching_blocks(map_l(ref)[None], map_m(ref)[None], s, tables)[0]


def vertex_block(pair: PairClass, nodes, s: float, tables: QuadTables) -> np.ndarray:
    if pair.tag != VERTEX:
        raise ValueError(f"expected a vertex pair, got {pair.tag}")
    return vertex_blocks(_coords(nodes, pair.ordered_nodes), s, tables)[0]


def edge_block(pair: PairClass, nodes, s: float, tables: QuadTables) -> np.ndarray:
    if pair.tag != EDGE:
        raise ValueError(f"expected an edge pair, got {pair.tag}")
    return edge_blocks(_coords(nodes, pair.ordered_nodes), s, tables)[0]


def pair_block(pair: PairClass, nodes, s: float, tables: QuadTables) -> np.ndarray:
    """Interaction block for any pair class, in its local numbering."""
    P = _coords(nodes, pair.ordered_nodes)
    if pair.tag == IDENTICAL:
        return identical_blocks(P, s, tables)[0]
    if pair.tag == VERTEX:
        return vertex_blocks(P, s, tables)[0]
    if pair.tag == EDGE:
        return edge_blocks(P, s, tables)[0]
    if pair.tag == DISJOINT:
        return nontouching_blocks(P[:, :3], P[:, 3:], s, tables)[0]
    raise ValueError(f"unknown pair tag {pair.tag!r}")
