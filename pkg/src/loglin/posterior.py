"""Posterior inference on log-linear parameters.

`gibbs_sampler` is the blocked Gibbs sampler (Bayesian iterative
proportional fitting): for each generator a it draws the a-marginal means
from independent Gammas and solves for the block of parameters supported
inside a.  `find_post_mean` / `find_post_cov` give the exact moments for
decomposable models from digamma/trigamma sums over cliques and separators.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.special import digamma, polygamma

from .graph import JunctionTree
from .model import GeneratingClass, InteractionBasis, Model, PriorSpec
from .score import decomposable_tree
from .table import ContingencyTable, FactorSpec, cell_index_array, marginal_vector


@dataclass
class SampleMatrix:
    column_names: tuple[str, ...]
    rows: np.ndarray

    def mean(self, burn_in: int = 0) -> np.ndarray:
        return self.rows[burn_in:].mean(axis=0)

    def cov(self, burn_in: int = 0) -> np.ndarray:
        return np.atleast_2d(np.cov(self.rows[burn_in:], rowvar=False, ddof=1))

    def var(self, burn_in: int = 0) -> np.ndarray:
        return self.rows[burn_in:].var(axis=0, ddof=1)

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(self.column_names)
        for row in self.rows:
            w.writerow([repr(float(x)) for x in row])
        return out.getvalue()


@dataclass
class Block:
    generator: tuple[str, ...]
    cell_block: np.ndarray      # marginal cell index of every full cell
    n_marginal: int
    inside: np.ndarray          # columns j with S(j) inside the generator
    outside: np.ndarray
    M: np.ndarray
    M_inv: np.ndarray
    X_out: np.ndarray           # design columns outside the generator


@dataclass
class BlockPlan:
    model: Model
    blocks: list[Block] = field(default_factory=list)


def _marginal_index(cells: np.ndarray, shape, positions) -> np.ndarray:
    if not positions:
        return np.zeros(cells.shape[0], dtype=int)
    return np.ravel_multi_index(tuple(cells[:, p] for p in positions),
                                tuple(shape[p] for p in positions))


def build_block_plan(gc: GeneratingClass, factors: tuple[FactorSpec, ...],
                     model: Model | None = None) -> BlockPlan:
    model = model or Model(gc, factors)
    X = model.X
    names = [f.name for f in factors]
    shape = [f.size for f in factors]
    cells = cell_index_array(factors)
    supports = model.basis.supports()
    plan = BlockPlan(model)
    for gen in gc.sorted_generators():
        pos = sorted(names.index(v) for v in gen)
        inside = np.array([k for k, s in enumerate(supports) if set(s) <= set(pos)])
        outside = np.array([k for k, s in enumerate(supports) if not set(s) <= set(pos)],
                           dtype=int)
        blk = _marginal_index(cells, shape, pos)
        n_marg = int(np.prod([shape[p] for p in pos]))
        block_size = X.shape[0] // n_marg
        chi = np.zeros((X.shape[0], n_marg))
        chi[np.arange(X.shape[0]), blk] = 1.0
        M = chi.T @ X[:, inside] / block_size
        if M.shape[0] != M.shape[1] or not np.all((M == 0) | (M == 1)):
            raise AssertionError(f"block matrix for {gen} is not square 0/1")
        plan.blocks.append(Block(tuple(gen), blk, n_marg, inside, outside,
                                 M, np.linalg.inv(M), X[:, outside]))
    return plan


def log_gamma_variates(shape: np.ndarray, rate: float, rng: np.random.Generator) -> np.ndarray:
    """log of independent Gamma(shape, rate) draws, stable for tiny shapes."""
    small = shape < 1
    if not small.any():
        return np.log(rng.gamma(shape)) - np.log(rate)
    # Gamma(k) = Gamma(k + 1) * U^(1/k) keeps log draws finite when k << 1
    out = np.log(rng.gamma(np.where(small, shape + 1, shape)))
    u = rng.random(shape.shape)
    return np.where(small, out + np.log(u) / shape, out) - np.log(rate)


def block_offsets(block: Block, theta: np.ndarray) -> np.ndarray:
    """log(chi^T exp(X_out theta_out)) with per-cell max-subtraction."""
    off = block.X_out @ theta[block.outside]
    top = np.full(block.n_marginal, -np.inf)
    np.maximum.at(top, block.cell_block, off)
    sums = np.bincount(block.cell_block, weights=np.exp(off - top[block.cell_block]),
                       minlength=block.n_marginal)
    return np.log(sums) + top


def gibbs_sweep(plan: BlockPlan, theta: np.ndarray, shapes: list[np.ndarray],
                rate: float, rng: np.random.Generator) -> np.ndarray:
    """One pass over all blocks; `shapes[k]` are the Gamma shapes of block k."""
    theta = theta.copy()
    for block, shape in zip(plan.blocks, shapes):
        log_m = log_gamma_variates(shape, rate, rng)
        theta[block.inside] = block.M_inv @ (log_m - block_offsets(block, theta))
    return theta


def gamma_shapes(plan: BlockPlan, counts, prior: PriorSpec) -> list[np.ndarray]:
    w = np.asarray(counts, dtype=float) + prior.alpha * prior.y
    shapes = [np.bincount(b.cell_block, weights=w, minlength=b.n_marginal) for b in plan.blocks]
    if any(np.any(sh <= 0) for sh in shapes):
        raise AssertionError("Gamma shape must be positive")
    return shapes


def gibbs_sampler(gc: GeneratingClass, table: ContingencyTable, alpha: float = 1.0,
                  n_samples: int = 15000, seed=None, theta_init=None,
                  prior: PriorSpec | None = None) -> SampleMatrix:
    """Draw `n_samples` sweeps from the posterior of theta under model `gc`.

    Marginal means are drawn as Gamma(n(i_a) + alpha y(i_a), rate 1 + alpha).
    Every sweep is recorded; burn-in is left to the caller.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    prior = prior or PriorSpec.uniform(alpha, table.n_cells)
    plan = build_block_plan(gc, table.factors)
    shapes = gamma_shapes(plan, table.counts, prior)
    rate = 1.0 + prior.alpha
    rng = np.random.default_rng(seed)
    k = len(plan.model.basis)
    theta = np.zeros(k) if theta_init is None else np.asarray(theta_init, dtype=float).copy()
    if theta.shape != (k,):
        raise ValueError(f"theta_init must have length {k}")
    rows = np.empty((n_samples, k))
    for s in range(n_samples):
        theta = gibbs_sweep(plan, theta, shapes, rate, rng)
        rows[s] = theta
    if not np.all(np.isfinite(rows)):
        raise FloatingPointError("non-finite value in Gibbs samples")
    return SampleMatrix(plan.model.names, rows)


def marginal_derivatives(vertices, basis: InteractionBasis,
                         factors: tuple[FactorSpec, ...]) -> np.ndarray:
    """Rows d y(i_a) / d r for the cells i_a of the marginal on `vertices`.

    Only the coordinates with support inside `vertices` are nonzero; there
    the map is the inverse transpose of the saturated design on I_a.
    """
    names = [f.name for f in factors]
    pos = sorted(names.index(v) for v in vertices)
    sub = [factors[p] for p in pos]
    cols = [k for k, s in enumerate(basis.supports()) if set(s) <= set(pos)]
    sub_cells = cell_index_array(sub) if sub else np.zeros((1, 0), dtype=int)
    local = {p: q for q, p in enumerate(pos)}
    Xs = np.ones((sub_cells.shape[0], len(cols)))
    for c, k in enumerate(cols):
        for p, lv in basis.terms[k]:
            Xs[:, c] *= sub_cells[:, local[p]] == lv
    D = np.zeros((sub_cells.shape[0], len(basis)))
    D[:, cols] = np.linalg.inv(Xs.T)
    return D


def _moment_pieces(gc: GeneratingClass, factors: tuple[FactorSpec, ...], w: np.ndarray):
    jt: JunctionTree = decomposable_tree(gc)
    model = Model(gc, factors)
    names = [f.name for f in factors]
    shape = [f.size for f in factors]

    def piece(vertices):
        pos = sorted(names.index(v) for v in vertices)
        marg = marginal_vector(w, shape, pos) if pos else np.array([w.sum()])
        return marg, marginal_derivatives(vertices, model.basis, factors)

    cliques = [piece(c) for c in jt.cliques]
    seps = [(nu, *piece(s)) for s, nu in jt.separators]
    return model, cliques, seps


def exact_mean(gc: GeneratingClass, factors: tuple[FactorSpec, ...],
               weights, alpha_prime: float) -> np.ndarray:
    """Mean of theta under exp(<X^T w, theta> - alpha' sum_i exp<f_i, theta>).

    `weights` is the cell vector alpha' y; the model must be decomposable.
    """
    model, cliques, seps = _moment_pieces(gc, factors, np.asarray(weights, dtype=float))
    mean = np.zeros(len(model.basis))
    mean[0] = -np.log(alpha_prime)
    for marg, D in cliques:
        mean += digamma(marg) @ D
    for nu, marg, D in seps:
        mean -= nu * (digamma(marg) @ D)
    return mean


def exact_cov(gc: GeneratingClass, factors: tuple[FactorSpec, ...], weights) -> np.ndarray:
    model, cliques, seps = _moment_pieces(gc, factors, np.asarray(weights, dtype=float))
    k = len(model.basis)
    cov = np.zeros((k, k))
    for marg, D in cliques:
        cov += (D.T * polygamma(1, marg)) @ D
    for nu, marg, D in seps:
        cov -= nu * ((D.T * polygamma(1, marg)) @ D)
    return (cov + cov.T) / 2


def find_post_mean(gc: GeneratingClass, table: ContingencyTable, alpha: float = 1.0,
                   prior: PriorSpec | None = None) -> np.ndarray:
    """Exact posterior mean of theta for a decomposable model."""
    prior = prior or PriorSpec.uniform(alpha, table.n_cells)
    w = table.counts + prior.alpha * prior.y
    return exact_mean(gc, table.factors, w, 1.0 + prior.alpha)


def find_post_cov(gc: GeneratingClass, table: ContingencyTable, alpha: float = 1.0,
                  prior: PriorSpec | None = None) -> np.ndarray:
    """Exact posterior covariance of theta for a decomposable model."""
    prior = prior or PriorSpec.uniform(alpha, table.n_cells)
    return exact_cov(gc, table.factors, table.counts + prior.alpha * prior.y)
