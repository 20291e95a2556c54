import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loglin.model import (GeneratingClass, Model, ModelError, PriorSpec, design_matrix,
                          format_model, interaction_basis, parse_bracket_notation,
                          parse_formula, prior_vector, sufficient_statistic)
from loglin.table import FactorSpec, cell_index_array

V6 = tuple("abcdef")


def gens(gc):
    return {"".join(sorted(g)) for g in gc.generators}


def binary(names):
    return tuple(FactorSpec(n, ("0", "1")) for n in names)


def test_parse_formula_examples():
    gc = parse_formula("freq ~ a*c*e + b*c + d*e + f", V6)
    assert gens(gc) == {"ace", "bc", "de", "f"}
    assert gens(parse_formula("freq ~ a + b + a*b", "ab")) == {"ab"}
    assert gens(parse_formula("freq ~ a + b", "ab")) == {"a", "b"}


@pytest.mark.parametrize("text", ["freq ~ a + z", "freq ~ ", "freq ~ a", "freq a + b",
                                  "count ~ a + b", "freq ~ a + * b"])
def test_parse_formula_errors(text):
    with pytest.raises(ModelError):
        parse_formula(text, "ab")


def test_bracket_roundtrip():
    gc = GeneratingClass.from_terms(["ace", "bc", "de", "f"], V6)
    assert format_model(gc) == "[a,c,e][b,c][d,e][f]"
    assert format_model(parse_bracket_notation("[b,a]", "ab")) == "[a,b]"
    assert format_model(GeneratingClass.from_terms(["ab", "bc"], "abc")) == "[a,b][b,c]"
    for s in ["[a,c,e][b,c][d,e][f]", "[a,c][a,d,e][b,c][b,e][f]"]:
        assert format_model(parse_bracket_notation(s, V6)) == s


@pytest.mark.parametrize("text", ["[a,b", "a,b]", "[a,,b]", "[a][z]", "[a]x[b]", ""])
def test_bracket_errors(text):
    with pytest.raises(ModelError):
        parse_bracket_notation(text, "ab")


def test_generating_class_invariants():
    with pytest.raises(ModelError):
        GeneratingClass(frozenset([frozenset("ab"), frozenset("a")]), ("a", "b"))
    with pytest.raises(ModelError):
        GeneratingClass.from_terms(["a"], "ab")


def test_basis_examples():
    f = binary("ab")
    sat = interaction_basis(GeneratingClass.saturated("ab"), f)
    assert sat.names == ("(Intercept)", "a1", "b1", "a1:b1")
    ind = interaction_basis(GeneratingClass.independence("ab"), f)
    assert ind.names == ("(Intercept)", "a1", "b1")
    czech = interaction_basis(parse_formula("freq ~ a*c*e + b*c + d*e + f", V6), binary(V6))
    assert len(czech) == 13
    assert set(czech.names) == {"(Intercept)", "a1", "b1", "c1", "d1", "e1", "f1", "a1:c1",
                                "a1:e1", "b1:c1", "c1:e1", "d1:e1", "a1:c1:e1"}


def test_basis_size_formula_multilevel():
    f = (FactorSpec("a", ("0", "1", "2")), FactorSpec("b", ("0", "1")),
         FactorSpec("c", ("x", "y", "z", "w")))
    gc = GeneratingClass.from_terms(["ab", "bc"], "abc")
    basis = interaction_basis(gc, f)
    # subsets {}, a, b, c, ab, bc
    assert len(basis) == 1 + 2 + 1 + 3 + 2 * 1 + 1 * 3
    assert basis.names[1:3] == ("a1", "a2")


def test_design_matrix_examples():
    f = binary("ab")
    X = design_matrix(interaction_basis(GeneratingClass.saturated("ab"), f), f)
    assert X.tolist() == [[1, 0, 0, 0], [1, 0, 1, 0], [1, 1, 0, 0], [1, 1, 1, 1]]
    Xi = design_matrix(interaction_basis(GeneratingClass.independence("ab"), f), f)
    assert Xi.tolist() == [row[:3] for row in X.tolist()]


def test_sufficient_statistic():
    f = binary("ab")
    X = design_matrix(interaction_basis(GeneratingClass.saturated("ab"), f), f)
    assert sufficient_statistic(X, [1, 2, 3, 4]).tolist() == [10, 7, 6, 4]
    assert sufficient_statistic(X, [0, 0, 0, 0]).tolist() == [0, 0, 0, 0]
    with pytest.raises(ModelError):
        sufficient_statistic(X, [1, 2, 3])


def test_czech_sufficient_statistic_intercept(czech):
    for text in ["freq ~ a*c*e + b*c + d*e + f", "freq ~ a + b + c + d + e + f"]:
        m = Model(parse_formula(text, czech.names), czech.factors)
        assert sufficient_statistic(m.X, czech.counts)[0] == 1841


def test_prior_vector():
    m = Model(GeneratingClass.saturated(V6), binary(V6))
    y, r = prior_vector(m.X, 1.0)
    assert np.allclose(y, 1 / 64) and r[0] == pytest.approx(1.0)
    m1 = Model(GeneratingClass.saturated("a"), binary("a"))
    assert prior_vector(m1.X, 1.0)[1].tolist() == [1.0, 0.5]
    mi = Model(GeneratingClass.independence("ab"), binary("ab"))
    assert prior_vector(mi.X, 1.0)[1].tolist() == [1.0, 0.5, 0.5]
    with pytest.raises(ModelError):
        prior_vector(m1.X, 0.0)
    with pytest.raises(ModelError):
        prior_vector(m1.X, 1.0, y=[0.5, 0.0])
    with pytest.raises(ModelError):
        PriorSpec(-1.0, [1.0])


@st.composite
def models(draw, max_vars=6):
    n = draw(st.integers(1, max_vars))
    names = "abcdef"[:n]
    terms = draw(st.lists(st.sets(st.sampled_from(names), min_size=1), max_size=6))
    terms = [t for t in terms] + [{v} for v in names]
    sizes = draw(st.lists(st.integers(2, 3), min_size=n, max_size=n))
    factors = tuple(FactorSpec(v, tuple(str(k) for k in range(s)))
                    for v, s in zip(names, sizes))
    return GeneratingClass.from_terms(terms, names), factors


@settings(max_examples=60, deadline=None)
@given(models())
def test_hierarchy_rank_and_split(layout):
    gc, factors = layout
    m = Model(gc, factors)
    X = m.X
    assert np.all(X[:, 0] == 1)
    assert set(np.unique(X)) <= {0.0, 1.0}
    np.linalg.cholesky(X.T @ X)
    # every sub-interaction of a term is present
    terms = set(m.basis.terms)
    for t in m.basis.terms:
        for k in range(len(t)):
            for sub in itertools.combinations(t, k):
                assert sub in terms
    # the generator part of f_i depends on i_a only; the remainder depends on
    # i_{a^c} only when no outside term straddles a and its complement
    cells = cell_index_array(factors)
    shape = [f.size for f in factors]
    names = [f.name for f in factors]
    for gen in gc.generators:
        pos = [names.index(v) for v in gen]
        inside = [k for k, s in enumerate(m.basis.supports()) if set(s) <= set(pos)]
        outside = [k for k in range(len(m.basis)) if k not in inside]
        assert 0 in inside and 0 not in outside
        straddles = any(set(m.basis.supports()[k]) & set(pos) for k in outside)
        split_ok = True
        for i, cell in enumerate(cells):
            keep = np.array([c if p in pos else 0 for p, c in enumerate(cell)])
            drop = np.array([0 if p in pos else c for p, c in enumerate(cell)])
            ia = np.ravel_multi_index(tuple(keep), shape)
            ic = np.ravel_multi_index(tuple(drop), shape)
            assert np.array_equal(X[i, inside], X[ia, inside])
            split_ok &= np.array_equal(X[i, outside], X[ic, outside])
        assert split_ok == (not straddles)
