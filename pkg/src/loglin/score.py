"""Normalizing constants of the conjugate log-linear prior and the model
scores derived from them.

For a design matrix X, weight alpha > 0 and r in the relative interior of
cone{f_i}, the normalizing constant is

    I(r, alpha) = int exp(alpha <r, theta> - alpha sum_i exp<f_i, theta>) dtheta.

Decomposable models have it in closed form as a ratio of gamma functions
over cliques and separators; every other model uses a Laplace
approximation around the mode found by safeguarded Newton iteration.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .graph import (JunctionTree, NotDecomposableError, interaction_graph,
                    is_graphical, junction_tree)
from .model import GeneratingClass, Model, PriorSpec, format_model
from .table import ContingencyTable, FactorSpec, marginal_vector

MODES = ("hierarchical", "graphical", "decomposable")


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModeResult:
    theta_hat: np.ndarray
    fitted: np.ndarray
    log_exponent_at_mode: float
    gradient_norm: float
    iterations: int


@dataclass(frozen=True)
class ModelScore:
    log_marg_lik: float
    method: str


def _exponent(X, r, alpha, theta):
    eta = X @ theta
    return alpha * (r @ theta - np.exp(eta).sum())


def find_mode(X: np.ndarray, r_prime, alpha_prime: float,
              max_iter: int = 200, max_halvings: int = 40) -> ModeResult:
    """Maximize alpha'(<r', theta> - sum_i exp<f_i, theta>) by Newton's method."""
    r = np.asarray(r_prime, dtype=float)
    a = float(alpha_prime)
    if a <= 0:
        raise ValueError("alpha must be positive")
    n_cells, n_terms = X.shape
    theta = np.zeros(n_terms)
    theta[0] = math.log(r[0] / n_cells)
    tol = 1e-8 * a * max(1.0, np.abs(r).max())
    g = _exponent(X, r, a, theta)
    for it in range(max_iter + 1):
        m = np.exp(X @ theta)
        grad = a * (r - X.T @ m)
        gnorm = np.abs(grad).max()
        if gnorm <= tol:
            return ModeResult(theta, m, g, gnorm, it)
        if it == max_iter:
            break
        hess = a * (X.T * m) @ X
        L = np.linalg.cholesky(hess)
        step = np.linalg.solve(L.T, np.linalg.solve(L, grad))
        t = 1.0
        for _ in range(max_halvings):
            cand = theta + t * step
            g_new = _exponent(X, r, a, cand)
            if g_new >= g - 1e-13 * max(1.0, abs(g)):
                break
            t *= 0.5
        theta, g = cand, g_new
    raise ConvergenceError(
        f"Newton iteration did not converge in {max_iter} steps (|grad| = {gnorm:.3g})")


def log_det_spd(A: np.ndarray) -> float:
    L = np.linalg.cholesky(A)
    return 2.0 * float(np.log(np.diag(L)).sum())


def log_norm_const_laplace(X: np.ndarray, r_prime, alpha_prime: float) -> float:
    mode = find_mode(X, r_prime, alpha_prime)
    hess = alpha_prime * (X.T * mode.fitted) @ X
    k = X.shape[1]
    return 0.5 * k * math.log(2 * math.pi) - 0.5 * log_det_spd(hess) + mode.log_exponent_at_mode


def log_norm_const_decomposable(jt: JunctionTree, y, alpha_prime: float,
                                factors: tuple[FactorSpec, ...]) -> float:
    """Closed-form log I for a decomposable model given cell pseudo-data y."""
    y = np.asarray(y, dtype=float)
    names = [f.name for f in factors]
    shape = [f.size for f in factors]
    a = float(alpha_prime)

    def term(vertices):
        pos = [k for k, n in enumerate(names) if n in vertices]
        marg = marginal_vector(y, shape, pos) if pos else np.array([y.sum()])
        return float(gammaln(a * marg).sum())

    out = -a * y.sum() * math.log(a)
    out += sum(term(c) for c in jt.cliques)
    out -= sum(nu * term(s) for s, nu in jt.separators)
    return out


def decomposable_tree(gc: GeneratingClass) -> JunctionTree:
    if not is_graphical(gc):
        raise NotDecomposableError(
            f"{format_model(gc)} is not graphical: its generators differ from "
            "the cliques of its independence graph")
    return junction_tree(interaction_graph(gc))


def log_marginal_likelihood(gc: GeneratingClass, table: ContingencyTable,
                            prior: PriorSpec, mode: str = "hierarchical") -> ModelScore:
    """log I(r_post, 1 + alpha) - log I(r, alpha), r_post = (t + alpha r)/(1 + alpha).

    Exact for mode "decomposable", Laplace otherwise.  Values are only
    comparable within one mode.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    alpha = prior.alpha
    n = table.counts.astype(float)
    if mode == "decomposable":
        jt = decomposable_tree(gc)
        y_post = (n + alpha * prior.y) / (1 + alpha)
        val = (log_norm_const_decomposable(jt, y_post, 1 + alpha, table.factors)
               - log_norm_const_decomposable(jt, prior.y, alpha, table.factors))
        return ModelScore(val, "exact")
    X = Model(gc, table.factors).X
    t = X.T @ n
    r = X.T @ prior.y
    r_post = (t + alpha * r) / (1 + alpha)
    val = (log_norm_const_laplace(X, r_post, 1 + alpha)
           - log_norm_const_laplace(X, r, alpha))
    return ModelScore(val, "laplace")


def log_bayes_factor(gc1: GeneratingClass, gc2: GeneratingClass,
                     table: ContingencyTable, prior: PriorSpec,
                     mode: str = "hierarchical") -> float:
    return (log_marginal_likelihood(gc1, table, prior, mode).log_marg_lik
            - log_marginal_likelihood(gc2, table, prior, mode).log_marg_lik)


class ModelScorer:
    """Memoized log marginal likelihoods keyed by canonical model string.

    Safe to share between threads: values are deterministic, so a race
    only costs a duplicate evaluation.
    """

    def __init__(self, table: ContingencyTable, prior: PriorSpec, mode: str):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        self.table = table
        self.prior = prior
        self.mode = mode
        self._cache: dict[str, float] = {}
        self._lock = threading.Lock()

    def __call__(self, gc: GeneratingClass) -> float:
        key = format_model(gc)
        val = self._cache.get(key)
        if val is None:
            val = log_marginal_likelihood(gc, self.table, self.prior, self.mode).log_marg_lik
            with self._lock:
                self._cache[key] = val
        return val

    def __len__(self):
        return len(self._cache)
