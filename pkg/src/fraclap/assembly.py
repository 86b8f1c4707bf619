"""Dense stiffness matrix and load vector.

The outer loop runs over domain triangles l only.  Pairs (l, m) with
m > l are computed once and doubled, which also covers (m, l).  Pairs
with disjoint closures are handled in a vectorized sweep per l; the
touching pairs, the diagonal blocks and the complement blocks are
batched over the whole mesh.
"""

from __future__ import annotations

import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import MemoryBudgetError
from .mesh import Mesh, build_patches, touching_pairs
from .quadtables import QuadTables, build_tables

__all__ = [
    "StiffnessSystem",
    "normalization_constant",
    "load_element",
    "load_vector",
    "assemble",
    "DEFAULT_MEMORY_CAP",
]

DEFAULT_MEMORY_CAP = 2 * 1024**3
DEFAULT_CHUNK = 32


def normalization_constant(s: float) -> float:
    """Half of C(2, s) = 2^{2s} s Gamma(1+s) / (pi Gamma(1-s))."""
    s = kernels.check_order(s)
    return s * 2.0 ** (2 * s - 1) * math.gamma(1 + s) / (math.pi * math.gamma(1 - s))


def _eval_f(f, x, y):
    try:
        v = np.asarray(f(x, y), dtype=float)
        if v.shape == x.shape:
            return v
        if v.ndim == 0:
            return np.full(x.shape, float(v))
    except (TypeError, ValueError):
        pass
    return np.array([float(f(a, b)) for a, b in zip(x.ravel(), y.ravel())]).reshape(x.shape)


def load_element(vertices, f) -> np.ndarray:
    """Edge-midpoint rule for the integrals of f * phi_i over one triangle."""
    P = np.asarray(vertices, dtype=float).reshape(1, 3, 2)
    return _load_blocks(P, f)[0]


def _load_blocks(P, f):
    e1 = P[:, 1] - P[:, 0]
    e2 = P[:, 2] - P[:, 0]
    area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    # midpoint j sits on the edge opposite vertex j
    mid = 0.5 * (P[:, [1, 0, 0]] + P[:, [2, 2, 1]])
    fm = _eval_f(f, mid[..., 0], mid[..., 1])
    return (area / 6.0)[:, None] * (fm.sum(1, keepdims=True) - fm)


def load_vector(mesh: Mesh, f) -> np.ndarray:
    T = mesh.triangles[: mesh.n_domain]
    vals = _load_blocks(mesh.nodes[T], f)
    return np.bincount(T.ravel(), weights=vals.ravel(), minlength=mesh.n_nodes)


@dataclass(frozen=True, eq=False)
class StiffnessSystem:
    K: np.ndarray
    b: np.ndarray
    s: float
    cns: float
    mesh: Mesh
    normalized: bool = True
    timings: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def free(self) -> np.ndarray:
        return self.mesh.free_nodes

    def free_block(self):
        f = self.mesh.free_nodes
        return self.K[np.ix_(f, f)], self.b[f]


def _touching_layout(mesh: Mesh, lt, mt, cnt):
    """Local node orderings for touching pairs, split by case."""
    T = mesh.triangles
    vtx, edg = [], []
    for l, m, c in zip(lt.tolist(), mt.tolist(), cnt.tolist()):
        tl, tm = T[l].tolist(), T[m].tolist()
        if c == 1:
            v = [a for a in tl if a in tm][0]
            vtx.append([v] + [a for a in tl if a != v] + [a for a in tm if a != v])
        else:
            sh = [a for a in tl if a in tm]
            edg.append(sh + [a for a in tl if a not in tm] + [a for a in tm if a not in tl])
    return (np.array(vtx, dtype=np.int64).reshape(-1, 5),
            np.array(edg, dtype=np.int64).reshape(-1, 4))


def _scatter_blocks(K, order, blocks):
    k = order.shape[1]
    rows = np.repeat(order, k, axis=1).ravel()
    cols = np.tile(order, (1, k)).ravel()
    np.add.at(K, (rows, cols), blocks.ravel())


class _DisjointSweep:
    """Per-l vectorized evaluation of all disjoint pairs (l, m), m > l."""

    def __init__(self, mesh, s, tables, touch_l, touch_m):
        self.mesh = mesh
        self.s = s
        self.N = mesh.n_nodes
        B, off, self.area = (np.asarray(a) for a in _maps(mesh))
        self.QP = np.einsum("qa,nba->nqb", tables.p_T_6, B) + off[:, None, :]
        self.QPx = np.ascontiguousarray(self.QP[..., 0])
        self.QPy = np.ascontiguousarray(self.QP[..., 1])
        nq = tables.p_T_6.shape[0]
        stack = np.vstack([tables.phiA, tables.phiB, tables.phiD])
        # reorder columns a + nq*b into row-major (a, b) flattening
        perm = np.arange(nq * nq).reshape(nq, nq).T.ravel()
        self.PhiT = np.ascontiguousarray(stack[:, perm].T)
        self.touch_l, self.touch_m = touch_l, touch_m
        self.ptr = np.searchsorted(touch_l, np.arange(mesh.n_domain + 1))
        self.nq = nq

    def disjoint_of(self, l):
        nt = self.mesh.n_triangles
        mask = np.ones(nt - l - 1, dtype=bool)
        tm = self.touch_m[self.ptr[l]:self.ptr[l + 1]]
        mask[tm - l - 1] = False
        return np.flatnonzero(mask) + (l + 1)

    def run(self, l_range, want_min=False):
        """Contributions of the l in ``l_range``.

        Returns (rows, Brows, A, Dsum_idx, Dsum_val, min_dist):
        ``Brows`` (len(rows), N) holds the off-diagonal blocks placed in
        rows of l's nodes (the transposed copy is added later), ``A``
        (len(l_range), 9) the l-l blocks, and Dsum the m-m blocks summed
        per m.
        """
        T = self.mesh.triangles
        N = self.N
        rows = np.unique(T[list(l_range)])
        rowpos = np.full(N, -1, dtype=np.int64)
        rowpos[rows] = np.arange(len(rows))
        Brows = np.zeros((len(rows), N))
        A = np.zeros((len(l_range), 9))
        Dsum = np.zeros((self.mesh.n_triangles, 9))
        touched = np.zeros(self.mesh.n_triangles, dtype=bool)
        dmin = np.inf
        e = -1.0 - self.s
        for k, l in enumerate(l_range):
            disj = self.disjoint_of(l)
            if not len(disj):
                continue
            dx = self.QPx[l][None, :, None] - self.QPx[disj][:, None, :]
            dy = self.QPy[l][None, :, None] - self.QPy[disj][:, None, :]
            r2 = dx * dx + dy * dy
            if want_min:
                dmin = min(dmin, float(r2.min()))
            np.power(r2, e, out=r2)
            M = r2.reshape(len(disj), -1) @ self.PhiT
            M *= (8.0 * self.area[l] * self.area[disj])[:, None]
            A[k] = M[:, :9].sum(0)
            Bb = M[:, 9:18].reshape(-1, 3, 3)  # [m, j, i]
            cols = T[disj].ravel()
            nodl = T[l]
            for i in range(3):
                Brows[rowpos[nodl[i]]] += np.bincount(cols, weights=Bb[:, :, i].ravel(), minlength=N)
            Dsum[disj] += M[:, 18:27]
            touched[disj] = True
        idx = np.flatnonzero(touched)
        return rows, Brows, A, idx, Dsum[idx], math.sqrt(dmin) if np.isfinite(dmin) else np.inf


def _symmetrize_inplace(S: np.ndarray, bs: int = 512) -> np.ndarray:
    """S <- S + S^T without a second full-size buffer."""
    n = len(S)
    for i0 in range(0, n, bs):
        i1 = min(i0 + bs, n)
        d = S[i0:i1, i0:i1]
        d += d.T.copy()
        for j0 in range(i1, n, bs):
            j1 = min(j0 + bs, n)
            t = S[i0:i1, j0:j1] + S[j0:j1, i0:i1].T
            S[i0:i1, j0:j1] = t
            S[j0:j1, i0:i1] = t.T
    return S


def _average_inplace(S: np.ndarray, bs: int = 512) -> np.ndarray:
    """S <- (S + S^T)/2 blockwise; makes S exactly symmetric."""
    n = len(S)
    for i0 in range(0, n, bs):
        i1 = min(i0 + bs, n)
        d = S[i0:i1, i0:i1]
        d[...] = 0.5 * (d + d.T)
        for j0 in range(i1, n, bs):
            j1 = min(j0 + bs, n)
            t = 0.5 * (S[i0:i1, j0:j1] + S[j0:j1, i0:i1].T)
            S[i0:i1, j0:j1] = t
            S[j0:j1, i0:i1] = t.T
    return S


def _maps(mesh):
    from .mesh import element_maps
    return element_maps(mesh.nodes, mesh.triangles)


def assemble(
    mesh: Mesh,
    s: float,
    f=None,
    tables: QuadTables | None = None,
    *,
    threads: int = 1,
    deterministic: bool = True,
    chunk_size: int = DEFAULT_CHUNK,
    memory_cap: int = DEFAULT_MEMORY_CAP,
    normalize: bool = True,
    diagnostics: bool = False,
) -> StiffnessSystem:
    """Assemble K and b.

    With ``normalize`` (default) K is multiplied by C(2,s)/2, so that
    K u = b is the discrete problem itself.  ``f`` defaults to 1.
    ``deterministic`` fixes the reduction order of the per-chunk partial
    results, making K bit-identical for any thread count.
    """
    s = kernels.check_order(s)
    tables = tables or build_tables()
    if f is None:
        f = lambda x, y: np.ones_like(x)  # noqa: E731
    N = mesh.n_nodes
    need = N * N * 8
    if need > memory_cap:
        raise MemoryBudgetError(
            f"{N} nodes need about {need / 2**30:.2f} GiB for the dense matrix "
            f"(cap {memory_cap / 2**30:.2f} GiB)")
    threads = max(1, int(threads))
    timings = {}
    diag = {}
    T = mesh.triangles
    nd = mesh.n_domain

    t0 = time.perf_counter()
    patches = build_patches(mesh)
    lt, mt, cnt = touching_pairs(mesh, patches)
    timings["classify"] = time.perf_counter() - t0

    # disjoint pairs -----------------------------------------------------
    t0 = time.perf_counter()
    sweep = _DisjointSweep(mesh, s, tables, lt, mt)
    Kb = np.zeros((N, N))
    Dsum = np.zeros((mesh.n_triangles, 9))
    Aall = np.zeros((nd, 9))
    chunks = [range(a, min(a + chunk_size, nd)) for a in range(0, nd, chunk_size)]
    dmin = [np.inf]
    lock = threading.Lock()

    def merge(chunk, res):
        rows, Brows, A, idx, dval, dm = res
        Kb[rows] += Brows
        Aall[chunk.start:chunk.stop] += A
        Dsum[idx] += dval
        dmin[0] = min(dmin[0], dm)

    if threads == 1:
        for ch in chunks:
            merge(ch, sweep.run(ch, diagnostics))
    elif deterministic:
        with ThreadPoolExecutor(threads) as ex:
            for ch, res in zip(chunks, ex.map(lambda c: sweep.run(c, diagnostics), chunks)):
                merge(ch, res)
    else:
        def work(ch):
            res = sweep.run(ch, diagnostics)
            with lock:
                merge(ch, res)

        with ThreadPoolExecutor(threads) as ex:
            list(ex.map(work, chunks))
    K = _symmetrize_inplace(Kb)
    del Kb
    if nd:
        _scatter_blocks(K, T[:nd], Aall.reshape(-1, 3, 3).transpose(0, 2, 1))
    _scatter_blocks(K, T, Dsum.reshape(-1, 3, 3).transpose(0, 2, 1))
    timings["disjoint"] = time.perf_counter() - t0
    if diagnostics:
        diag["min_disjoint_distance"] = dmin[0]
        diag["disjoint_pairs"] = int(sum(mesh.n_triangles - l - 1 for l in range(nd)) - len(lt))

    # touching pairs -----------------------------------------------------
    t0 = time.perf_counter()
    vorder, eorder = _touching_layout(mesh, lt, mt, cnt)
    timings["classify"] += time.perf_counter() - t0
    t0 = time.perf_counter()
    if len(vorder):
        _scatter_blocks(K, vorder, 2.0 * kernels.vertex_blocks(mesh.nodes[vorder], s, tables))
    timings["vertex"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    if len(eorder):
        _scatter_blocks(K, eorder, 2.0 * kernels.edge_blocks(mesh.nodes[eorder], s, tables))
    timings["edge"] = time.perf_counter() - t0

    Pd = mesh.nodes[T[:nd]]
    t0 = time.perf_counter()
    if nd:
        _scatter_blocks(K, T[:nd], kernels.identical_blocks(Pd, s, tables))
    timings["identical"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    if nd:
        _scatter_blocks(K, T[:nd], kernels.complement_blocks(Pd, mesh.ball_radius, s, tables))
    timings["complement"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    b = load_vector(mesh, f)
    timings["load"] = time.perf_counter() - t0

    # the scatters above add K[i,j] and K[j,i] in different orders
    _average_inplace(K)
    cns = normalization_constant(s)
    if normalize:
        K *= cns
    if diagnostics:
        diag["vertex_pairs"] = len(vorder)
        diag["edge_pairs"] = len(eorder)
    return StiffnessSystem(K, b, s, cns, mesh, normalize, timings, diag)
