"""Hierarchical log-linear models: generating classes, formula parsing,
the baseline-constrained interaction basis and its binary design matrix."""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .table import FactorSpec, cell_index_array


class ModelError(ValueError):
    """Raised for malformed or inconsistent model specifications."""


def maximal_sets(sets: Iterable[frozenset]) -> frozenset[frozenset]:
    """Inclusion-maximal members of `sets`."""
    uniq = {frozenset(s) for s in sets}
    return frozenset(s for s in uniq if not any(s < o for o in uniq))


def downward_closure(generators: Iterable[frozenset]) -> frozenset[frozenset]:
    """All subsets of all generators, the empty set included."""
    out = {frozenset()}
    for g in generators:
        g = sorted(g)
        for k in range(1, len(g) + 1):
            out.update(frozenset(c) for c in itertools.combinations(g, k))
    return frozenset(out)


def _gen_key(g) -> tuple[str, ...]:
    return tuple(sorted(g))


@dataclass(frozen=True)
class GeneratingClass:
    """Maximal interaction terms of a hierarchical model over `variables`."""

    generators: frozenset[frozenset[str]]
    variables: tuple[str, ...]

    def __post_init__(self):
        gens = frozenset(frozenset(g) for g in self.generators)
        if not gens or any(not g for g in gens):
            raise ModelError("a model needs at least one nonempty generator")
        unknown = set().union(*gens) - set(self.variables)
        if unknown:
            raise ModelError(f"unknown factor(s): {', '.join(sorted(unknown))}")
        if maximal_sets(gens) != gens:
            raise ModelError("generators must be pairwise incomparable")
        missing = set(self.variables) - set().union(*gens)
        if missing:
            raise ModelError(
                f"model does not mention factor(s): {', '.join(sorted(missing))}")
        object.__setattr__(self, "generators", gens)
        object.__setattr__(self, "variables", tuple(self.variables))

    @classmethod
    def from_terms(cls, terms: Iterable[Iterable[str]],
                   variables: Sequence[str]) -> GeneratingClass:
        """Build from arbitrary terms; non-maximal ones are absorbed."""
        return cls(maximal_sets(frozenset(t) for t in terms if t), tuple(variables))

    @classmethod
    def independence(cls, variables: Sequence[str]) -> GeneratingClass:
        return cls(frozenset(frozenset([v]) for v in variables), tuple(variables))

    @classmethod
    def saturated(cls, variables: Sequence[str]) -> GeneratingClass:
        return cls(frozenset([frozenset(variables)]), tuple(variables))

    def sorted_generators(self) -> list[tuple[str, ...]]:
        return sorted(_gen_key(g) for g in self.generators)

    def closure(self) -> frozenset[frozenset[str]]:
        return downward_closure(self.generators)

    def __str__(self) -> str:
        return format_model(self)


def format_model(gc: GeneratingClass) -> str:
    return "".join("[" + ",".join(g) + "]" for g in gc.sorted_generators())


_BRACKET_RE = re.compile(r"\[([^\[\]]*)\]")


def parse_bracket_notation(text: str, variables: Sequence[str]) -> GeneratingClass:
    s = "".join(text.split())
    if not s:
        raise ModelError("empty model string")
    groups = _BRACKET_RE.findall(s)
    if "".join(f"[{g}]" for g in groups) != s:
        raise ModelError(f"malformed bracket notation: {text!r}")
    terms = []
    for g in groups:
        names = g.split(",")
        if any(not n for n in names):
            raise ModelError(f"empty factor name in [{g}]")
        terms.append(names)
    return GeneratingClass.from_terms(terms, variables)


def parse_formula(text: str, variables: Sequence[str],
                  response: str = "freq") -> GeneratingClass:
    """Parse `freq ~ a*c*e + b*c + ...`; only `+` and `*` are supported."""
    if "~" not in text:
        raise ModelError("formula needs a '~'")
    lhs, rhs = text.split("~", 1)
    lhs = lhs.strip()
    if lhs and lhs != response:
        raise ModelError(f"formula response {lhs!r} is not {response!r}")
    rhs = rhs.strip()
    if not rhs:
        raise ModelError("empty formula")
    terms = []
    for term in rhs.split("+"):
        names = [n.strip() for n in term.split("*")]
        if any(not n or not re.fullmatch(r"[A-Za-z_.][\w.]*", n) for n in names):
            raise ModelError(f"malformed term {term.strip()!r}")
        terms.append(names)
    return GeneratingClass.from_terms(terms, variables)


def parse_model(text: str, variables: Sequence[str]) -> GeneratingClass:
    """Accept either a formula or bracket notation."""
    if "~" in text:
        return parse_formula(text, variables)
    return parse_bracket_notation(text, variables)


@dataclass(frozen=True)
class InteractionBasis:
    """The ordered interaction cells J.

    Each term is a tuple of (factor position, level index) pairs with
    nonzero levels, sorted by position; the intercept is the empty tuple
    and always comes first.
    """

    terms: tuple[tuple[tuple[int, int], ...], ...]
    names: tuple[str, ...]

    def __len__(self):
        return len(self.terms)

    def supports(self) -> list[tuple[int, ...]]:
        return [tuple(p for p, _ in t) for t in self.terms]

    def index(self, name: str) -> int:
        return self.names.index(name)


def term_name(term, factors: Sequence[FactorSpec]) -> str:
    if not term:
        return "(Intercept)"
    return ":".join(factors[p].name + factors[p].levels[lv] for p, lv in term)


def interaction_basis(gc: GeneratingClass,
                      factors: Sequence[FactorSpec]) -> InteractionBasis:
    pos = {f.name: k for k, f in enumerate(factors)}
    if set(gc.variables) != set(pos):
        raise ModelError("model variables do not match the table factors")
    supports = sorted((tuple(sorted(pos[v] for v in d)) for d in gc.closure()),
                      key=lambda s: (len(s), s))
    terms = []
    for s in supports:
        for lv in itertools.product(*(range(1, factors[p].size) for p in s)):
            terms.append(tuple(zip(s, lv)))
    terms = tuple(terms)
    return InteractionBasis(terms, tuple(term_name(t, factors) for t in terms))


def design_matrix(basis: InteractionBasis,
                  factors: Sequence[FactorSpec]) -> np.ndarray:
    """Binary |I| x |J| matrix with X[i, j] = 1 iff cell i agrees with j on S(j)."""
    cells = cell_index_array(factors)
    X = np.ones((cells.shape[0], len(basis)), dtype=float)
    for col, term in enumerate(basis.terms):
        for p, lv in term:
            X[:, col] *= cells[:, p] == lv
    if np.linalg.matrix_rank(X) != X.shape[1]:
        raise AssertionError("design matrix is not of full column rank")
    return X


def sufficient_statistic(X: np.ndarray, counts) -> np.ndarray:
    counts = np.asarray(counts, dtype=float)
    if counts.shape != (X.shape[0],):
        raise ModelError(f"counts have shape {counts.shape}, expected ({X.shape[0]},)")
    return X.T @ counts


@dataclass(frozen=True, eq=False)
class PriorSpec:
    """Conjugate prior hyperparameters: weight alpha and pseudo-data y > 0."""

    alpha: float
    y: np.ndarray

    def __post_init__(self):
        if not self.alpha > 0:
            raise ModelError("alpha must be positive")
        y = np.asarray(self.y, dtype=float)
        if y.ndim != 1 or np.any(y <= 0):
            raise ModelError("pseudo-data y must be a positive vector")
        object.__setattr__(self, "y", y)

    @classmethod
    def uniform(cls, alpha: float, n_cells: int) -> PriorSpec:
        return cls(alpha, np.full(n_cells, 1.0 / n_cells))


def prior_vector(X: np.ndarray, alpha: float, y=None) -> tuple[np.ndarray, np.ndarray]:
    """Return (y, r) with r = X^T y; y defaults to 1/|I| in every cell."""
    if y is None:
        prior = PriorSpec.uniform(alpha, X.shape[0])
    else:
        prior = PriorSpec(alpha, y)
    if prior.y.shape != (X.shape[0],):
        raise ModelError("pseudo-data length does not match the number of cells")
    return prior.y, X.T @ prior.y


class Model:
    """A generating class bound to a table layout, with its basis and design."""

    def __init__(self, gc: GeneratingClass, factors: Sequence[FactorSpec]):
        self.gc = gc
        self.factors = tuple(factors)
        self.basis = interaction_basis(gc, self.factors)
        self.X = design_matrix(self.basis, self.factors)

    @property
    def names(self) -> tuple[str, ...]:
        return self.basis.names

    def __repr__(self):
        return f"Model({format_model(self.gc)})"
