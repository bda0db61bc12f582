"""Matrix-valued observables and Poincare-form checks.

Convention used everywhere for the Dirichlet form of a reversible
generator Q with stationary law pi:

    E_Q(F, F) = (1/2) sum_{x,y} pi(x) Q(x, y) (F(x) - F(y))^2 ,

which for scalar F equals <f, -Qf>_pi, so the matrix Poincare constant
obtained from lambda * Var <= E coincides with the spectral gap of the
additive symmetrization of Q in L^2(pi).  Variance is
Var_pi[F] = E[F^2] - E[F]^2.

The numeric core functions take plain weight/value arrays; a MatrixFn
carries the (state mask -> matrix) table and aligns itself to a state
list via ``gather``, raising DomainMismatch for missing states.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .chains import Decomposition, Generator
from .matrix_core import random_symmetric, require_symmetric, spectral_norm


class FunctionalError(Exception):
    pass


class DomainMismatch(FunctionalError):
    pass


class Reducible(FunctionalError):
    def __init__(self, components: int):
        super().__init__(f"chain splits into {components} communicating classes")
        self.components = components


@dataclass(frozen=True)
class MatrixFn:
    """Symmetric d x d matrix attached to each state mask."""

    states: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.int64)
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 3 or values.shape[0] != states.size \
                or values.shape[1] != values.shape[2]:
            raise ValueError(f"values have shape {values.shape}, "
                             f"expected ({states.size}, d, d)")
        values = (values + values.transpose(0, 2, 1)) / 2.0
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def gather(self, states) -> np.ndarray:
        """Value stack aligned to the given state list."""
        lookup = {int(s): i for i, s in enumerate(self.states)}
        idx = []
        for s in np.asarray(states, dtype=np.int64):
            i = lookup.get(int(s))
            if i is None:
                raise DomainMismatch(f"function undefined at state {int(s):#x}")
            idx.append(i)
        return self.values[idx]

    @staticmethod
    def constant(states, mat) -> "MatrixFn":
        mat = require_symmetric(mat)
        states = np.asarray(states, dtype=np.int64)
        return MatrixFn(states, np.broadcast_to(mat, (states.size, *mat.shape)).copy())

    @staticmethod
    def from_table(table: dict) -> "MatrixFn":
        states = np.array(sorted(table), dtype=np.int64)
        return MatrixFn(states, np.stack([np.asarray(table[int(s)], dtype=float)
                                          for s in states]))


def random_matrix_fn(states, d: int, seed: int,
                     norm_bound: float = 1.0) -> MatrixFn:
    """Independent random symmetric value at every state."""
    rng = np.random.default_rng(seed)
    states = np.asarray(states, dtype=np.int64)
    vals = np.stack([random_symmetric(rng, d, norm_bound) for _ in states])
    return MatrixFn(states, vals)


def random_linear_matrix_fn(n: int, states, d: int, lipschitz: float,
                            seed: int) -> tuple["MatrixFn", float]:
    """F(x) = sum_i x_i A_i with ||A_i|| <= lipschitz.

    Returns the function and max_i ||A_i||, its Lipschitz constant in
    Hamming distance (adjacent cube states differ in at most two bits,
    so oscillation over flip-swap pairs is at most twice this).
    """
    rng = np.random.default_rng(seed)
    states = np.asarray(states, dtype=np.int64)
    coeffs = []
    worst = 0.0
    for _ in range(n):
        a = random_symmetric(rng, d)
        nrm = spectral_norm(a)
        if nrm > 0:
            a *= lipschitz * rng.uniform(0.5, 1.0) / nrm
        coeffs.append(a)
        worst = max(worst, spectral_norm(a))
    vals = np.zeros((states.size, d, d))
    for i in range(n):
        hit = ((states >> i) & 1).astype(bool)
        vals[hit] += coeffs[i]
    return MatrixFn(states, vals), worst


def matrix_mean(weights, values) -> np.ndarray:
    weights = np.asarray(weights, dtype=float)
    return np.einsum("x,xij->ij", weights, np.asarray(values, dtype=float))


def matrix_variance(weights, values) -> np.ndarray:
    """E[F^2] - E[F]^2 under the given weights."""
    values = np.asarray(values, dtype=float)
    mean = matrix_mean(weights, values)
    second = np.einsum("x,xij,xjk->ik", np.asarray(weights, dtype=float),
                       values, values)
    return second - mean @ mean


def dirichlet_form(rates, weights, values) -> np.ndarray:
    """(1/2) sum_{x,y} pi(x) Q(x,y) (F(x) - F(y))^2."""
    rates = np.asarray(rates, dtype=float)
    weights = np.asarray(weights, dtype=float)
    values = np.asarray(values, dtype=float)
    flows = weights[:, None] * rates
    np.fill_diagonal(flows, 0.0)
    diff = values[:, None, :, :] - values[None, :, :, :]
    return 0.5 * np.einsum("xy,xyij,xyjk->ik", flows, diff, diff)


def project_fn(dec: Decomposition, fn: MatrixFn) -> MatrixFn:
    """Conditional means of fn per part, indexed by part label."""
    vals = []
    for part, restriction in zip(dec.parts, dec.restrictions):
        vals.append(matrix_mean(restriction.pi, fn.gather(part)))
    return MatrixFn(np.arange(len(dec.parts), dtype=np.int64), np.stack(vals))


@dataclass(frozen=True)
class DecompositionResiduals:
    variance_residual: float
    dirichlet_residual: float
    scale: float


def check_decompositions(dec: Decomposition, fn: MatrixFn) -> DecompositionResiduals:
    """Max-norm defects of the two-level variance and Dirichlet identities.

    Var_pi[F] = sum_i pihat(i) Var_{pi_i}[F] + Var_pihat[Fhat]
    E_Q(F,F)  = sum_i pihat(i) E_{Q_i}(F,F)
                + (1/2) sum_{i != j} sum_{x in part i, y in part j}
                        pi(x) Q(x,y) (F(x) - F(y))^2
    """
    gen = dec.source
    vals = fn.gather(gen.states)
    pihat = dec.projection.pi
    fhat = project_fn(dec, fn)

    total_var = matrix_variance(gen.pi, vals)
    within = sum(pihat[i] * matrix_variance(dec.restrictions[i].pi,
                                            fn.gather(dec.parts[i]))
                 for i in range(len(dec.parts)))
    across = matrix_variance(pihat, fhat.values)
    var_res = float(np.abs(total_var - within - across).max())

    total_dir = dirichlet_form(gen.rates, gen.pi, vals)
    within_dir = sum(pihat[i] * dirichlet_form(dec.restrictions[i].rates,
                                               dec.restrictions[i].pi,
                                               fn.gather(dec.parts[i]))
                     for i in range(len(dec.parts)))
    pos = {int(s): a for a, s in enumerate(gen.states)}
    cross = np.zeros((fn.dim, fn.dim))
    for i in range(len(dec.parts)):
        for j in range(len(dec.parts)):
            if i == j:
                continue
            xi = np.array([pos[int(s)] for s in dec.parts[i]])
            yj = np.array([pos[int(s)] for s in dec.parts[j]])
            flows = gen.pi[xi, None] * gen.rates[np.ix_(xi, yj)]
            diff = vals[xi][:, None, :, :] - vals[yj][None, :, :, :]
            cross += 0.5 * np.einsum("xy,xyij,xyjk->ik", flows, diff, diff)
    dir_res = float(np.abs(total_dir - within_dir - cross).max())

    scale = max(1.0, spectral_norm(total_var), spectral_norm(total_dir))
    return DecompositionResiduals(var_res, dir_res, scale)


def scalar_spectral_gap(gen: Generator) -> float:
    """Smallest nonzero eigenvalue of the symmetrized negative generator.

    Symmetrize D^{1/2} Q D^{-1/2} (D = diag pi); the gap is the second
    smallest eigenvalue of its negation.  Raises Reducible when the rate
    support graph is disconnected; a single-state chain has gap +inf.
    """
    m = gen.states.size
    if m == 1:
        return float("inf")
    adj = (np.abs(gen.rates) > 0.0)
    np.fill_diagonal(adj, False)
    ncomp, _ = connected_components(csr_matrix(adj), directed=False)
    if ncomp > 1:
        raise Reducible(int(ncomp))
    root = np.sqrt(gen.pi)
    sym = (root[:, None] / root[None, :]) * gen.rates
    sym = -(sym + sym.T) / 2.0
    eig = np.linalg.eigvalsh(sym)
    return float(eig[1])


@dataclass(frozen=True)
class PoincareReport:
    lambda_claimed: float
    min_eig_slack: float
    scale: float
    tol: float
    passed: bool
    witness: MatrixFn | None


def check_matrix_poincare(gen: Generator, fn: MatrixFn, lam: float,
                          tol: float = 1e-8) -> PoincareReport:
    """Does lambda * Var_pi[F] <= E_Q(F, F) hold in the PSD order?"""
    vals = fn.gather(gen.states)
    energy = dirichlet_form(gen.rates, gen.pi, vals)
    var = matrix_variance(gen.pi, vals)
    slack = float(np.linalg.eigvalsh(energy - lam * var).min())
    scale = max(1.0, spectral_norm(energy), abs(lam) * spectral_norm(var))
    passed = slack >= -tol * scale
    return PoincareReport(float(lam), slack, scale, tol, passed,
                          None if passed else fn)


def _pencil_min(energy, var, cutoff: float = 1e-12) -> float:
    """min of v'Ev / v'Vv over the range of V; +inf when V vanishes."""
    lam, vec = np.linalg.eigh(var)
    top = lam.max(initial=0.0)
    if top <= 0.0:
        return float("inf")
    keep = lam > cutoff * top
    if not keep.any():
        return float("inf")
    basis = vec[:, keep] / np.sqrt(lam[keep])
    reduced = basis.T @ energy @ basis
    return float(np.linalg.eigvalsh(reduced).min())


def _rayleigh(gen: Generator, vals) -> float:
    energy = dirichlet_form(gen.rates, gen.pi, vals)
    var = matrix_variance(gen.pi, vals)
    return _pencil_min(energy, var)


def adversarial_lambda_search(gen: Generator, d: int, budget: int = 8,
                              seed: int = 0, sweeps: int = 2) -> float:
    """Smallest matrix Rayleigh quotient found by restarts plus descent.

    One restart starts from the scalar witness (the eigenvector of the
    symmetrized generator attached to the gap, embedded as g(x) * I), the
    rest from random tables.  Deterministic for fixed (seed, budget).
    """
    m = gen.states.size
    if m < 2:
        return float("inf")
    root = np.sqrt(gen.pi)
    sym = (root[:, None] / root[None, :]) * gen.rates
    sym = -(sym + sym.T) / 2.0
    _, vec = np.linalg.eigh(sym)
    fiedler = vec[:, 1] / root

    best = np.inf
    for restart in range(max(1, int(budget))):
        rng = np.random.default_rng([seed, restart])
        if restart == 0:
            vals = np.einsum("x,ij->xij", fiedler, np.eye(d))
        else:
            vals = np.stack([random_symmetric(rng, d) for _ in range(m)])
        current = _rayleigh(gen, vals)
        step = 0.5
        for _ in range(max(0, int(sweeps))):
            for x in range(m):
                for i in range(d):
                    for j in range(i, d):
                        for sign in (1.0, -1.0):
                            trial = vals.copy()
                            trial[x, i, j] += sign * step
                            trial[x, j, i] = trial[x, i, j]
                            val = _rayleigh(gen, trial)
                            if val < current:
                                vals, current = trial, val
            step *= 0.5
        best = min(best, current)
    return float(best)


def matrix_fn_to_json(fn: MatrixFn) -> dict:
    return {
        "d": int(fn.dim),
        "values": [{"mask": int(s), "rows": [[float(v) for v in row] for row in mat]}
                   for s, mat in zip(fn.states, fn.values)],
    }


def matrix_fn_from_json(obj: dict) -> MatrixFn:
    d = int(obj["d"])
    states = []
    mats = []
    for entry in obj["values"]:
        states.append(int(entry["mask"]))
        mat = np.asarray(entry["rows"], dtype=float)
        if mat.shape != (d, d):
            raise ValueError(f"value at mask {entry['mask']} has shape {mat.shape}")
        mats.append(mat)
    return MatrixFn(np.asarray(states, dtype=np.int64), np.stack(mats))
