"""Triangular meshes of a domain plus an auxiliary annulus.

Triangles belonging to the domain come first in ``Mesh.triangles``; the
last ``n_aux`` rows triangulate the region between the domain and the
enclosing ball of radius ``ball_radius``.  Node indices are 0-based.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MemoryBudgetError, MeshFormatError, MeshValidationError

__all__ = [
    "Mesh",
    "ElementMap",
    "PairClass",
    "PatchIndex",
    "load_mesh",
    "save_mesh",
    "generate_disk_mesh",
    "build_patches",
    "element_map",
    "element_maps",
    "classify_pair",
    "classify_all_against",
    "touching_pairs",
    "shape_regularity",
]

IDENTICAL, EDGE, VERTEX, DISJOINT = "Identical", "Edge", "Vertex", "Disjoint"

DEFAULT_MAX_TRIANGLES = 200_000


@dataclass(frozen=True)
class ElementMap:
    """Affine map x = B @ xhat + offset onto one element."""

    matrix_B: np.ndarray
    offset: np.ndarray
    area: float

    def __call__(self, xhat: np.ndarray) -> np.ndarray:
        return np.atleast_2d(xhat) @ self.matrix_B.T + self.offset


@dataclass(frozen=True)
class PairClass:
    tag: str
    ordered_nodes: tuple


@dataclass(frozen=True)
class PatchIndex:
    """Incident triangles per node, stored in CSR form."""

    indptr: np.ndarray
    indices: np.ndarray

    def __getitem__(self, node: int) -> np.ndarray:
        return self.indices[self.indptr[node]:self.indptr[node + 1]]

    def __len__(self) -> int:
        return len(self.indptr) - 1


@dataclass(frozen=True, eq=False)
class Mesh:
    nodes: np.ndarray
    triangles: np.ndarray
    n_aux: int
    boundary_nodes: np.ndarray
    free_nodes: np.ndarray
    ball_radius: float

    def __post_init__(self):
        for name in ("nodes", "triangles", "boundary_nodes", "free_nodes"):
            getattr(self, name).setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_domain(self) -> int:
        return len(self.triangles) - self.n_aux

    @property
    def areas(self) -> np.ndarray:
        return element_maps(self.nodes, self.triangles)[2]

    @property
    def auxiliary_nodes(self) -> np.ndarray:
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.free_nodes] = False
        mask[self.boundary_nodes] = False
        return np.flatnonzero(mask)

    def mesh_size(self) -> float:
        """Largest edge length over the domain triangles."""
        p = self.nodes[self.triangles[: self.n_domain]]
        e = p - np.roll(p, 1, axis=1)
        return float(np.sqrt((e**2).sum(-1)).max())


def element_maps(nodes: np.ndarray, triangles: np.ndarray):
    """Vectorized maps: B (n, 2, 2), offsets (n, 2), areas (n,).

    Columns of B are v2 - v1 and v3 - v2, so the reference vertices
    (0,0), (1,0), (1,1) go to v1, v2, v3.
    """
    p = nodes[triangles]
    B = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1]], axis=2)
    det = B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0]
    return B, p[:, 0].copy(), 0.5 * np.abs(det)


def element_map(mesh: Mesh, t: int, order=None) -> ElementMap:
    """Map of triangle ``t``; ``order`` optionally permutes its vertices."""
    tri = mesh.triangles[t] if order is None else np.asarray(order)
    B, off, area = element_maps(mesh.nodes, tri[None, :])
    return ElementMap(B[0], off[0], float(area[0]))


def shape_regularity(nodes: np.ndarray, triangles: np.ndarray) -> float:
    """max over triangles of diameter / inradius."""
    p = nodes[triangles]
    e = np.sqrt(((p - np.roll(p, 1, axis=1)) ** 2).sum(-1))
    area = element_maps(nodes, triangles)[2]
    rho = 2.0 * area / e.sum(1)
    return float((e.max(1) / rho).max())


# ---------------------------------------------------------------- validation


def _validate(nodes, triangles, n_aux, boundary, free, R, tri_lines=None, check_radius=True):
    def where(i):
        if tri_lines is None:
            return f"triangle {i}"
        return f"line {tri_lines[i]} (triangle {i})"

    nn = len(nodes)
    if not np.all(np.isfinite(nodes)):
        raise MeshValidationError("non-finite node coordinates")
    if not (np.isfinite(R) and R > 0):
        raise MeshValidationError(f"ball radius must be positive, got {R}")
    if triangles.size and (triangles.min() < 0 or triangles.max() >= nn):
        bad = int(np.flatnonzero((triangles < 0).any(1) | (triangles >= nn).any(1))[0])
        raise MeshValidationError(f"{where(bad)}: node index out of range")
    if not 0 <= n_aux <= len(triangles):
        raise MeshValidationError(f"n_aux={n_aux} out of range")
    for name, idx in (("boundary", boundary), ("free", free)):
        if idx.size and (idx.min() < 0 or idx.max() >= nn):
            raise MeshValidationError(f"{name} node index out of range")
        if len(np.unique(idx)) != len(idx):
            raise MeshValidationError(f"duplicate {name} node indices")

    # repeated vertex inside a triangle
    t = np.sort(triangles, axis=1)
    rep = (t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2])
    if rep.any():
        raise MeshValidationError(f"{where(int(np.flatnonzero(rep)[0]))}: repeated vertex")

    _, _, area = element_maps(nodes, triangles)
    scale = max(float(np.abs(nodes).max()), 1.0) if nn else 1.0
    small = area <= 1e-13 * scale**2
    if small.any():
        raise MeshValidationError(f"{where(int(np.flatnonzero(small)[0]))}: degenerate triangle")

    if check_radius:
        r = np.sqrt((nodes**2).sum(1))
        out = r > R * (1 + 1e-12)
        if out.any():
            raise MeshValidationError(
                f"node {int(np.flatnonzero(out)[0])} lies outside the ball of radius {R}")

    if np.intersect1d(boundary, free).size:
        raise MeshValidationError("free and boundary node sets overlap")
    dom = triangles[: len(triangles) - n_aux]
    dom_nodes = np.unique(dom)
    known = np.zeros(nn, dtype=bool)
    known[boundary] = True
    known[free] = True
    if not known[dom_nodes].all():
        n = int(dom_nodes[~known[dom_nodes]][0])
        raise MeshValidationError(f"node {n} of a domain triangle is neither free nor boundary")
    if n_aux:
        aux_nodes = np.unique(triangles[len(triangles) - n_aux:])
        is_free = np.zeros(nn, dtype=bool)
        is_free[free] = True
        if is_free[aux_nodes].any():
            n = int(aux_nodes[is_free[aux_nodes]][0])
            raise MeshValidationError(f"free node {n} belongs to an auxiliary triangle")
    used = np.zeros(nn, dtype=bool)
    used[triangles.ravel()] = True
    if not used.all():
        raise MeshValidationError(f"node {int(np.flatnonzero(~used)[0])} is not used by any triangle")
    is_dom = np.zeros(nn, dtype=bool)
    is_dom[dom_nodes] = True
    if not is_dom[free].all():
        raise MeshValidationError("a free node is not a vertex of any domain triangle")

    _check_admissible(nodes, triangles, where)


def _check_admissible(nodes, triangles, where):
    nt = len(triangles)
    key = np.sort(triangles, axis=1)
    _, first, counts = np.unique(key, axis=0, return_index=True, return_counts=True)
    if (counts > 1).any():
        raise MeshValidationError(f"{where(int(first[counts > 1][0]))}: duplicated triangle")

    # edge-use counts: each edge may bound at most two triangles, lying on
    # opposite sides of it
    a = np.concatenate([triangles[:, 0], triangles[:, 1], triangles[:, 2]])
    b = np.concatenate([triangles[:, 1], triangles[:, 2], triangles[:, 0]])
    c = np.concatenate([triangles[:, 2], triangles[:, 0], triangles[:, 1]])
    owner = np.tile(np.arange(nt), 3)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    order = np.lexsort((hi, lo))
    lo, hi, c, owner = lo[order], hi[order], c[order], owner[order]
    same = (lo[1:] == lo[:-1]) & (hi[1:] == hi[:-1])
    triple = same[1:] & same[:-1]
    if triple.any():
        k = int(np.flatnonzero(triple)[0]) + 2
        raise MeshValidationError(f"{where(int(owner[k]))}: edge shared by more than two triangles")
    k = np.flatnonzero(same)
    if k.size:
        p0, p1 = nodes[lo[k]], nodes[hi[k]]
        d = p1 - p0

        def side(q):
            v = q - p0
            return d[:, 0] * v[:, 1] - d[:, 1] * v[:, 0]

        bad = side(nodes[c[k]]) * side(nodes[c[k + 1]]) >= 0
        if bad.any():
            j = int(k[np.flatnonzero(bad)[0]])
            raise MeshValidationError(f"{where(int(owner[j + 1]))}: overlaps its neighbour across an edge")

    # nodes lying inside an edge used only once (hanging nodes)
    single = np.ones(len(lo), dtype=bool)
    single[k] = False
    single[k + 1] = False
    s_idx = np.flatnonzero(single)
    if s_idx.size:
        _check_hanging(nodes, lo[s_idx], hi[s_idx], owner[s_idx], where)


def _check_hanging(nodes, e0, e1, owner, where):
    p0, p1 = nodes[e0], nodes[e1]
    d = p1 - p0
    L2 = (d**2).sum(1)
    chunk = max(1, 2_000_000 // max(len(nodes), 1))
    for s in range(0, len(e0), chunk):
        sl = slice(s, s + chunk)
        v = nodes[None, :, :] - p0[sl, None, :]
        t = (v * d[sl, None, :]).sum(-1) / L2[sl, None]
        cross = v[..., 0] * d[sl, None, 1] - v[..., 1] * d[sl, None, 0]
        tol = 1e-10 * L2[sl, None]
        hit = (t > 1e-10) & (t < 1 - 1e-10) & (np.abs(cross) <= tol)
        if hit.any():
            i = int(np.flatnonzero(hit.any(1))[0])
            raise MeshValidationError(f"{where(int(owner[s + i]))}: hanging node on an edge")


def make_mesh(nodes, triangles, n_aux, boundary, free, ball_radius, *, validate=True) -> Mesh:
    nodes = np.ascontiguousarray(nodes, dtype=float).reshape(-1, 2)
    triangles = np.ascontiguousarray(triangles, dtype=np.int64).reshape(-1, 3)
    boundary = np.sort(np.asarray(boundary, dtype=np.int64).ravel())
    free = np.sort(np.asarray(free, dtype=np.int64).ravel())
    if validate:
        _validate(nodes, triangles, int(n_aux), boundary, free, float(ball_radius))
    return Mesh(nodes, triangles, int(n_aux), boundary, free, float(ball_radius))


# ----------------------------------------------------------------- file I/O


def save_mesh(mesh: Mesh, path) -> None:
    lines = ["FRACMESH 1", f"nodes {mesh.n_nodes}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.nodes.tolist()]
    lines.append(f"triangles {mesh.n_triangles} {mesh.n_aux}")
    lines += [f"{a} {b} {c}" for a, b, c in mesh.triangles.tolist()]
    lines.append(f"boundary {len(mesh.boundary_nodes)}")
    lines += [str(i) for i in mesh.boundary_nodes.tolist()]
    lines.append(f"free {len(mesh.free_nodes)}")
    lines += [str(i) for i in mesh.free_nodes.tolist()]
    lines.append(f"ball_radius {mesh.ball_radius!r}")
    Path(path).write_text("\n".join(lines) + "\n")


class _Reader:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.pos = 0

    def next(self) -> tuple[int, list[str]]:
        while self.pos < len(self.lines):
            self.pos += 1
            raw = self.lines[self.pos - 1].split("#", 1)[0].split()
            if raw:
                return self.pos, raw
        raise MeshFormatError(f"line {self.pos + 1}: unexpected end of file")

    def header(self, word: str, nvals: int) -> list[int]:
        ln, tok = self.next()
        if tok[0] != word or len(tok) != nvals + 1:
            raise MeshFormatError(f"line {ln}: expected '{word}' header with {nvals} value(s)")
        try:
            vals = [int(v) for v in tok[1:]]
        except ValueError:
            raise MeshFormatError(f"line {ln}: malformed integer in '{word}' header") from None
        if any(v < 0 for v in vals):
            raise MeshFormatError(f"line {ln}: negative count")
        return vals

    def rows(self, count: int, width: int, conv, what: str):
        out, where = [], []
        while len(out) < count:
            ln, tok = self.next()
            if width and len(tok) != width:
                raise MeshFormatError(f"line {ln}: expected {width} values for {what}, got {len(tok)}")
            try:
                vals = [conv(v) for v in tok]
            except ValueError:
                raise MeshFormatError(f"line {ln}: malformed {what}") from None
            if width:
                out.append(vals)
                where.append(ln)
            else:
                out.extend(vals)
                where.extend([ln] * len(vals))
        if len(out) != count:
            raise MeshFormatError(f"line {where[-1]}: too many {what} entries")
        return out, where


def load_mesh(path, *, max_triangles: int | None = None) -> Mesh:
    """Read a FRACMESH file and validate it."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise MeshFormatError(f"cannot read {path}: {exc}") from exc
    rd = _Reader(text)
    ln, tok = rd.next()
    if tok != ["FRACMESH", "1"]:
        raise MeshFormatError(f"line {ln}: expected 'FRACMESH 1'")
    (nn,) = rd.header("nodes", 1)
    nodes, _ = rd.rows(nn, 2, float, "node coordinates")
    nt, n_aux = rd.header("triangles", 2)
    if max_triangles is not None and nt > max_triangles:
        raise MemoryBudgetError(f"{nt} triangles exceeds the cap of {max_triangles}")
    tris, tri_lines = rd.rows(nt, 3, int, "triangle indices")
    (nb,) = rd.header("boundary", 1)
    bnd, _ = rd.rows(nb, 0, int, "boundary indices")
    (nf,) = rd.header("free", 1)
    free, _ = rd.rows(nf, 0, int, "free indices")
    ln, tok = rd.next()
    if tok[0] != "ball_radius" or len(tok) != 2:
        raise MeshFormatError(f"line {ln}: expected 'ball_radius <R>'")
    try:
        R = float(tok[1])
    except ValueError:
        raise MeshFormatError(f"line {ln}: malformed ball radius") from None
    while rd.pos < len(rd.lines):
        rd.pos += 1
        if rd.lines[rd.pos - 1].split("#", 1)[0].strip():
            raise MeshFormatError(f"line {rd.pos}: trailing content")
    if n_aux > nt:
        raise MeshFormatError(f"triangles header: n_aux={n_aux} exceeds count {nt}")

    nodes = np.array(nodes, dtype=float).reshape(-1, 2)
    tris = np.array(tris, dtype=np.int64).reshape(-1, 3)
    bnd = np.sort(np.array(bnd, dtype=np.int64))
    free = np.sort(np.array(free, dtype=np.int64))
    _validate(nodes, tris, n_aux, bnd, free, R, tri_lines=tri_lines)
    return Mesh(nodes, tris, n_aux, bnd, free, R)


# ---------------------------------------------------------------- generator


def _ring(radius: float, count: int) -> np.ndarray:
    theta = 2.0 * np.pi * np.arange(count) / count
    return np.column_stack([radius * np.cos(theta), radius * np.sin(theta)])


def _zipper(inner: np.ndarray, n_in: int, outer: np.ndarray, n_out: int) -> list:
    """Triangulate the strip between two rings with uniformly spaced angles."""
    tris = []
    i = o = 0
    while i < n_in or o < n_out:
        # compare next angles exactly; ties advance the inner ring so that
        # aligned nodes get joined by a radial edge
        if o < n_out and (i >= n_in or (o + 1) * n_in < (i + 1) * n_out):
            tris.append((inner[i % n_in], outer[o], outer[(o + 1) % n_out]))
            o += 1
        else:
            tris.append((inner[i % n_in], outer[o % n_out], inner[(i + 1) % n_in]))
            i += 1
    return tris


def generate_disk_mesh(
    domain_radius: float,
    target_h: float,
    ball_radius: float,
    *,
    max_triangles: int = DEFAULT_MAX_TRIANGLES,
) -> Mesh:
    """Concentric-ring mesh of a disk, extended by an annulus out to the ball.

    Ring k of the disk sits at radius k*dr and carries 6k equally spaced
    nodes; neighbouring rings are stitched by angle.  The outermost disk
    ring is the boundary.  Rings continue past it up to ``ball_radius``
    with a spacing adjusted so the last ring lies on the ball.
    """
    r0, h, R = float(domain_radius), float(target_h), float(ball_radius)
    if not (r0 > 0 and math.isfinite(r0)):
        raise MeshValidationError(f"domain radius must be positive, got {r0}")
    if not (0 < h < r0):
        raise MeshValidationError(f"target h must lie in (0, {r0}), got {h}")
    if R < r0 or not math.isfinite(R):
        raise MeshValidationError(f"ball radius {R} is smaller than the domain radius {r0}")

    nr = math.ceil(r0 / h - 1e-9)
    dr = r0 / nr
    na = 0 if R == r0 else max(1, round((R - r0) / dr))
    total = 6 * (nr + na) ** 2
    if total > max_triangles:
        raise MemoryBudgetError(
            f"h={h} with ball radius {R} needs {total} triangles (cap {max_triangles})")

    pts = [np.zeros((1, 2))]
    rings = [np.array([0])]
    count = 1
    radii = [k * dr for k in range(1, nr + 1)]
    if na:
        radii += [r0 + j * (R - r0) / na for j in range(1, na + 1)]
        radii[-1] = R
    for k, rad in enumerate(radii, start=1):
        pts.append(_ring(rad, 6 * k))
        rings.append(np.arange(count, count + 6 * k))
        count += 6 * k
    nodes = np.vstack(pts)

    tris = [(0, int(rings[1][j]), int(rings[1][(j + 1) % 6])) for j in range(6)]
    for k in range(2, nr + na + 1):
        tris += _zipper(rings[k - 1], 6 * (k - 1), rings[k], 6 * k)
    tris = np.array(tris, dtype=np.int64)

    boundary = rings[nr]
    free = np.arange(0, boundary[0])
    return make_mesh(nodes, tris, 6 * (nr + na) ** 2 - 6 * nr**2, boundary, free, R,
                     validate=False)


# ---------------------------------------------------------- adjacency / pairs


def build_patches(mesh: Mesh) -> PatchIndex:
    flat = mesh.triangles.ravel()
    tri = np.repeat(np.arange(mesh.n_triangles), 3)
    order = np.argsort(flat, kind="stable")
    counts = np.bincount(flat, minlength=mesh.n_nodes)
    indptr = np.concatenate([[0], np.cumsum(counts)])
    return PatchIndex(indptr, tri[order])


def _order_pair(tl, tm):
    shared = [n for n in tl if n in tm]
    if len(shared) == 3:
        return PairClass(IDENTICAL, tuple(tl))
    if len(shared) == 2:
        ql = [n for n in tl if n not in tm][0]
        qm = [n for n in tm if n not in tl][0]
        return PairClass(EDGE, (shared[0], shared[1], ql, qm))
    if len(shared) == 1:
        v = shared[0]
        return PairClass(VERTEX, (v, *[n for n in tl if n != v], *[n for n in tm if n != v]))
    return PairClass(DISJOINT, (*tl, *tm))


def classify_pair(mesh: Mesh, patches: PatchIndex | None, l: int, m: int) -> PairClass:
    """Relation between triangles l and m with the local node ordering.

    Vertex: [shared, other two of l, other two of m].  Edge: [shared
    endpoints in l's order, third node of l, third node of m].
    """
    tl = [int(v) for v in mesh.triangles[l]]
    tm = [int(v) for v in mesh.triangles[m]]
    if l == m:
        return PairClass(IDENTICAL, tuple(tl))
    pc = _order_pair(tl, tm)
    if pc.tag == IDENTICAL:
        raise MeshValidationError(f"triangles {l} and {m} coincide")
    return pc


def classify_all_against(mesh: Mesh, patches: PatchIndex, l: int):
    """Split triangles m > l into (disjoint, vertex, edge) index arrays."""
    tl = mesh.triangles[l]
    nb = np.concatenate([patches[int(v)] for v in tl])
    uniq, counts = np.unique(nb, return_counts=True)
    above = uniq > l
    edge = uniq[above & (counts == 2)]
    vertex = uniq[above & (counts == 1)]
    touching = np.zeros(mesh.n_triangles, dtype=bool)
    touching[uniq] = True
    disjoint = np.flatnonzero(~touching[l + 1:]) + l + 1
    return disjoint, vertex, edge


def touching_pairs(mesh: Mesh, patches: PatchIndex | None = None):
    """All pairs (l, m), l < m, l a domain triangle, sharing a vertex or an edge.

    Returns ``(l, m, nshared)`` integer arrays sorted by (l, m).
    """
    if patches is None:
        patches = build_patches(mesh)
    nd = mesh.n_domain
    pairs = {}
    for n in range(mesh.n_nodes):
        pt = np.sort(patches[n])
        for a, b in itertools.combinations(pt.tolist(), 2):
            if a < nd:
                pairs[(a, b)] = pairs.get((a, b), 0) + 1
    if not pairs:
        e = np.zeros(0, dtype=np.int64)
        return e, e.copy(), e.copy()
    keys = sorted(pairs)
    arr = np.array(keys, dtype=np.int64)
    cnt = np.array([pairs[k] for k in keys], dtype=np.int64)
    return arr[:, 0], arr[:, 1], cnt
