"""Probability measures on subsets of a finite ground set.

A measure over subsets of {0, ..., n-1} is stored as a dense table of
2**n probabilities indexed by bitmask (bit i set <=> element i in the
subset).  Dense tables keep every check exact and enumerable, which is
the point of this package; n is capped accordingly.

The covering relation used throughout: x covers y (written x |> y here)
iff x == y or x == y | (1 << i) for a single bit i missing from y.  A
measure p covers a measure q when some coupling of p (rows) and q
(columns) puts all its mass on covering pairs.  Coupling existence is
decided by max-flow on the bipartite support graph with float
capacities; comparisons use an absolute tolerance of 1e-10.

The stochastic covering property (SCP) asks that for every conditioning
set S and every pair of assignments x |> y on S, the conditional of the
measure given the smaller assignment covers the conditional given the
larger one.  ``scp_check`` decides this by brute force over all 3**n
conditioning events.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import networkx as nx
import numpy as np
from networkx.algorithms.flow import edmonds_karp

MASS_TOL = 1e-12
COUPLING_TOL = 1e-10
PROJECTION_TOL = 1e-8
STORAGE_LIMIT = 20  # dense tables up to 2**20 states
SCP_LIMIT = 14      # 3**n conditioning events beyond this is hopeless


class MeasureError(Exception):
    """Base class for measure construction and validation failures."""


class NegativeMass(MeasureError):
    pass


class NotNormalized(MeasureError):
    pass


class ZeroMassEvent(MeasureError):
    pass


class StateSpaceTooLarge(MeasureError):
    pass


class NotAProjection(MeasureError):
    pass


class DisconnectedGraph(MeasureError):
    pass


def popcount(masks):
    """Number of set bits, elementwise on an integer array (or scalar)."""
    return np.bitwise_count(np.asarray(masks, dtype=np.int64))


def covers(x: int, y: int) -> bool:
    """True iff x == y or x equals y with exactly one extra bit set."""
    return (x | y) == x and int(popcount(x ^ y)) <= 1


@dataclass(frozen=True)
class SubsetMeasure:
    """Dense probability table over subsets of an n-element ground set."""

    n: int
    probs: np.ndarray

    def __post_init__(self):
        if not (0 <= self.n <= STORAGE_LIMIT):
            raise StateSpaceTooLarge(
                f"n={self.n} outside supported range [0, {STORAGE_LIMIT}]")
        probs = np.ascontiguousarray(np.asarray(self.probs, dtype=float))
        if probs.shape != (1 << self.n,):
            raise ValueError(
                f"probability table has shape {probs.shape}, expected ({1 << self.n},)")
        object.__setattr__(self, "probs", probs)

    def support(self) -> np.ndarray:
        """Masks with strictly positive mass, ascending."""
        return np.flatnonzero(self.probs > 0.0).astype(np.int64)

    def mass(self, mask: int) -> float:
        return float(self.probs[mask])


def validate(m: SubsetMeasure) -> None:
    """Raise unless m is a normalized nonnegative measure with support."""
    lo = m.probs.min() if m.probs.size else 0.0
    if lo < 0.0:
        mask = int(np.argmin(m.probs))
        raise NegativeMass(f"mass {lo!r} at mask {mask:#x}")
    total = float(m.probs.sum())
    if abs(total - 1.0) > MASS_TOL:
        raise NotNormalized(f"total mass {total!r} deviates from 1 by {total - 1.0:.3e}")
    if not (m.probs > 0.0).any():
        raise ZeroMassEvent("measure has empty support")


def generating_polynomial(m: SubsetMeasure, z) -> float:
    """Evaluate sum_S mu(S) prod_{i in S} z_i at the point z."""
    z = np.asarray(z, dtype=float)
    if z.shape != (m.n,):
        raise ValueError(f"z has shape {z.shape}, expected ({m.n},)")
    masks = np.arange(1 << m.n, dtype=np.int64)
    factors = np.ones(1 << m.n)
    for i in range(m.n):
        hit = (masks >> i) & 1 == 1
        factors[hit] *= z[i]
    return float(m.probs @ factors)


def homogeneity_degree(m: SubsetMeasure) -> int | None:
    """Common cardinality of all support sets, or None if sizes mix."""
    sizes = popcount(m.support())
    if sizes.size == 0:
        raise ZeroMassEvent("measure has empty support")
    k = int(sizes[0])
    return k if bool((sizes == k).all()) else None


def condition(m: SubsetMeasure, coords, bits) -> SubsetMeasure:
    """Condition on X_c = b for (c, b) pairs; renormalize the rest.

    The surviving coordinates keep their relative order and are packed
    into a fresh cube of dimension n - len(coords).
    """
    coords = [int(c) for c in coords]
    bits = [int(b) for b in bits]
    if len(coords) != len(bits):
        raise ValueError("coords and bits must have equal length")
    if len(set(coords)) != len(coords):
        raise ValueError("repeated conditioning coordinate")
    for c in coords:
        if not 0 <= c < m.n:
            raise ValueError(f"coordinate {c} out of range for n={m.n}")
    if not coords:
        return SubsetMeasure(m.n, m.probs.copy())

    sel_mask = 0
    want = 0
    for c, b in zip(coords, bits):
        sel_mask |= 1 << c
        if b:
            want |= 1 << c
    masks = np.arange(1 << m.n, dtype=np.int64)
    keep = (masks & sel_mask) == want
    slice_probs = m.probs[keep]
    total = float(slice_probs.sum())
    if total <= 0.0:
        raise ZeroMassEvent(
            f"conditioning event coords={coords} bits={bits} has zero mass")

    rest = [c for c in range(m.n) if c not in coords]
    kept_masks = masks[keep]
    packed = np.zeros(kept_masks.shape, dtype=np.int64)
    for j, c in enumerate(rest):
        packed |= ((kept_masks >> c) & 1) << j
    out = np.zeros(1 << len(rest))
    out[packed] = slice_probs / total
    return SubsetMeasure(len(rest), out)


@dataclass(frozen=True)
class CouplingTable:
    """Joint table over rows x cols with declared marginals and support.

    mass[i, j] is the coupling weight on (rows[i], cols[j]); support is a
    boolean array of the same shape and all mass outside it is zero.
    """

    rows: np.ndarray
    cols: np.ndarray
    mass: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray
    support: np.ndarray

    def max_marginal_deviation(self) -> float:
        dr = np.abs(self.mass.sum(axis=1) - self.row_marginal).max(initial=0.0)
        dc = np.abs(self.mass.sum(axis=0) - self.col_marginal).max(initial=0.0)
        return float(max(dr, dc))

    def off_support_mass(self) -> float:
        off = self.mass[~self.support]
        return float(np.abs(off).max(initial=0.0))

    def transpose(self) -> "CouplingTable":
        return CouplingTable(self.cols.copy(), self.rows.copy(), self.mass.T.copy(),
                             self.col_marginal.copy(), self.row_marginal.copy(),
                             self.support.T.copy())


def feasible_coupling(row_masks, row_probs, col_masks, col_probs, allowed):
    """Transportation feasibility on an explicit bipartite support.

    Returns (CouplingTable or None, attained flow value).  Feasible means
    max-flow reaches 1 within COUPLING_TOL; the returned table is the
    flow itself, so marginal deviations are at the float-summation level.
    """
    row_masks = np.asarray(row_masks, dtype=np.int64)
    col_masks = np.asarray(col_masks, dtype=np.int64)
    row_probs = np.asarray(row_probs, dtype=float)
    col_probs = np.asarray(col_probs, dtype=float)
    allowed = np.asarray(allowed, dtype=bool)
    if not allowed.any():
        return None, 0.0

    g = nx.DiGraph()
    for i, p in enumerate(row_probs):
        g.add_edge("s", ("r", i), capacity=float(p))
    for j, q in enumerate(col_probs):
        g.add_edge(("c", j), "t", capacity=float(q))
    ii, jj = np.nonzero(allowed)
    for i, j in zip(ii.tolist(), jj.tolist()):
        g.add_edge(("r", i), ("c", j), capacity=2.0)
    value, flow = nx.maximum_flow(g, "s", "t", flow_func=edmonds_karp)
    if value < 1.0 - COUPLING_TOL:
        return None, float(value)

    mass = np.zeros((row_masks.size, col_masks.size))
    for i in range(row_masks.size):
        for dst, f in flow.get(("r", i), {}).items():
            if f > 0.0:
                mass[i, dst[1]] = f
    return CouplingTable(row_masks, col_masks, mass, row_probs.copy(),
                         col_probs.copy(), allowed.copy()), float(value)


def measure_covers(p: SubsetMeasure, q: SubsetMeasure) -> CouplingTable | None:
    """Coupling of p (rows) and q (columns) on covering pairs, or None."""
    if p.n != q.n:
        raise ValueError(f"measures live on different cubes: n={p.n} vs n={q.n}")
    rows = p.support()
    cols = q.support()
    allowed = np.zeros((rows.size, cols.size), dtype=bool)
    for i, x in enumerate(rows.tolist()):
        for j, y in enumerate(cols.tolist()):
            allowed[i, j] = covers(x, y)
    table, _ = feasible_coupling(rows, p.probs[rows], cols, q.probs[cols], allowed)
    return table


@dataclass(frozen=True)
class ScpResult:
    satisfied: bool
    # (coords, x_bits, y_bits) of the first violated conditioning, or None
    witness: tuple | None

    def __bool__(self) -> bool:
        return self.satisfied


def scp_check(m: SubsetMeasure, limit: int = SCP_LIMIT) -> ScpResult:
    """Brute-force SCP decision over all conditioning events.

    For every coordinate set S, every assignment y on S, and every i in S
    with y_i = 0, checks that the conditional given y covers the
    conditional given y + e_i (both restricted to the free coordinates).
    Events where either conditional has zero mass are skipped.
    """
    validate(m)
    if m.n > limit:
        raise StateSpaceTooLarge(f"n={m.n} exceeds scp_check limit {limit}")
    for r in range(1, m.n + 1):
        for coords in itertools.combinations(range(m.n), r):
            for assign in itertools.product((0, 1), repeat=r):
                for pos in range(r):
                    if assign[pos] == 1:
                        continue
                    upper = list(assign)
                    upper[pos] = 1
                    try:
                        cond_low = condition(m, coords, assign)
                        cond_high = condition(m, coords, upper)
                    except ZeroMassEvent:
                        continue
                    if measure_covers(cond_low, cond_high) is None:
                        return ScpResult(False, (coords, tuple(upper), tuple(assign)))
    return ScpResult(True, None)


# ---------------------------------------------------------------------------
# constructive families


def make_uniform_k_subsets(n: int, k: int) -> SubsetMeasure:
    """Uniform measure on all k-element subsets of an n-element set."""
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    masks = np.arange(1 << n, dtype=np.int64)
    hit = popcount(masks) == k
    probs = np.where(hit, 1.0 / math.comb(n, k), 0.0)
    return SubsetMeasure(n, probs)


def make_bernoulli_product(ps) -> SubsetMeasure:
    """Independent inclusion of element i with probability ps[i]."""
    ps = np.asarray(ps, dtype=float)
    if ((ps < 0) | (ps > 1)).any():
        raise ValueError("inclusion probabilities must lie in [0, 1]")
    n = ps.size
    masks = np.arange(1 << n, dtype=np.int64)
    probs = np.ones(1 << n)
    for i in range(n):
        bit = ((masks >> i) & 1).astype(bool)
        probs *= np.where(bit, ps[i], 1.0 - ps[i])
    return SubsetMeasure(int(n), probs)


def make_projection_dpp(kernel) -> SubsetMeasure:
    """Determinantal measure of an orthogonal projection kernel.

    mu(S) = det(K_S) over subsets of size rank(K); the table is
    renormalized to kill the tiny float drift in the determinants.
    """
    k_mat = np.asarray(kernel, dtype=float)
    if k_mat.ndim != 2 or k_mat.shape[0] != k_mat.shape[1]:
        raise ValueError(f"kernel must be square, got shape {k_mat.shape}")
    n = k_mat.shape[0]
    if n > STORAGE_LIMIT:
        raise StateSpaceTooLarge(f"kernel on {n} elements exceeds limit {STORAGE_LIMIT}")
    scale = max(1.0, float(np.abs(k_mat).max()))
    if np.abs(k_mat - k_mat.T).max() > PROJECTION_TOL * scale:
        raise NotAProjection("kernel is not symmetric")
    if np.abs(k_mat @ k_mat - k_mat).max() > PROJECTION_TOL * scale:
        raise NotAProjection("kernel is not idempotent within 1e-8")
    rank = int(round(float(np.trace(k_mat))))

    probs = np.zeros(1 << n)
    for bits in itertools.combinations(range(n), rank):
        mask = 0
        for b in bits:
            mask |= 1 << b
        idx = np.fromiter(bits, dtype=int) if bits else np.empty(0, dtype=int)
        sub = k_mat[np.ix_(idx, idx)]
        det = float(np.linalg.det(sub)) if rank else 1.0
        probs[mask] = max(det, 0.0)
    total = probs.sum()
    if total <= 0.0:
        raise ZeroMassEvent("projection kernel produced an empty measure")
    return SubsetMeasure(n, probs / total)


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[ra] = rb
        return True


def is_spanning_tree(edge_mask: int, edges, vertices: int) -> bool:
    """True iff the selected edges form a spanning tree on all vertices."""
    chosen = [e for i, e in enumerate(edges) if (edge_mask >> i) & 1]
    if len(chosen) != vertices - 1:
        return False
    uf = _UnionFind(vertices)
    for u, v in chosen:
        if not uf.union(u, v):
            return False
    return True


def make_spanning_tree_measure(edges, vertices: int | None = None) -> SubsetMeasure:
    """Uniform measure on spanning trees, ground set = the edge list."""
    edges = [(int(u), int(v)) for u, v in edges]
    if vertices is None:
        vertices = 1 + max(max(u, v) for u, v in edges)
    for u, v in edges:
        if u == v:
            raise ValueError(f"self-loop ({u},{v}) cannot appear in a tree")
        if not (0 <= u < vertices and 0 <= v < vertices):
            raise ValueError(f"edge ({u},{v}) out of range for {vertices} vertices")
    n = len(edges)
    if n > STORAGE_LIMIT:
        raise StateSpaceTooLarge(f"{n} edges exceeds limit {STORAGE_LIMIT}")
    uf = _UnionFind(vertices)
    for u, v in edges:
        uf.union(u, v)
    roots = {uf.find(w) for w in range(vertices)}
    if len(roots) != 1:
        raise DisconnectedGraph(f"graph has {len(roots)} components")

    masks = np.arange(1 << n, dtype=np.int64)
    candidates = masks[popcount(masks) == vertices - 1]
    probs = np.zeros(1 << n)
    hits = [int(msk) for msk in candidates if is_spanning_tree(int(msk), edges, vertices)]
    for msk in hits:
        probs[msk] = 1.0
    if not hits:
        raise DisconnectedGraph("no spanning tree found")
    return SubsetMeasure(n, probs / len(hits))


# ---------------------------------------------------------------------------
# JSON interchange


def measure_to_json(m: SubsetMeasure) -> dict:
    support = m.support()
    return {
        "n": int(m.n),
        "entries": [{"mask": int(msk), "p": float(m.probs[msk])} for msk in support],
    }


def measure_from_json(obj: dict) -> SubsetMeasure:
    n = int(obj["n"])
    probs = np.zeros(1 << n)
    for entry in obj["entries"]:
        probs[int(entry["mask"])] = float(entry["p"])
    m = SubsetMeasure(n, probs)
    validate(m)
    return m


def graph_from_json(obj: dict) -> tuple[int, list[tuple[int, int]]]:
    vertices = int(obj["vertices"])
    edges = [(int(u), int(v)) for u, v in obj["edges"]]
    return vertices, edges
