"""Formula generation, counting, satisfiability, and exact marginals."""

import io
import math
from fractions import Fraction

import numpy as np
import pytest

from twosatlab import (
    Formula,
    ResourceLimitError,
    count_solutions,
    empirical_marginal_measure,
    exact_marginals,
    generate_formula,
    is_satisfiable,
    marginals_to_json,
    read_formula,
    write_formula,
)

CONTRADICTION = Formula(
    n=2,
    clauses=[[1, 1, 2, 1], [1, 1, 2, -1], [1, -1, 2, 1], [1, -1, 2, -1]],
)


def test_clause_universe_n2():
    seen = set()
    for seed in range(40):
        f = generate_formula(2, 2.0, seed)
        for i, si, j, sj in f.clauses:
            assert {i, j} == {1, 2}
            key = (si, sj) if i < j else (sj, si)
            seen.add(key)
    assert len(seen) == 4


def test_generator_determinism():
    a = generate_formula(10, 1.0, seed=77)
    b = generate_formula(10, 1.0, seed=77)
    assert a.n == b.n and np.array_equal(a.clauses, b.clauses)
    c = generate_formula(10, 1.0, seed=78)
    assert not np.array_equal(a.clauses, c.clauses)


def test_generator_poisson_mean():
    # m ~ Poisson(dn/2); mean of 200 draws within 3*sqrt(500/200) of 500
    ms = [generate_formula(1000, 1.0, seed=s).m for s in range(200)]
    assert abs(np.mean(ms) - 500.0) <= 3.0 * math.sqrt(500.0 / 200.0)


def test_generator_validates():
    with pytest.raises(ValueError):
        generate_formula(1, 1.0, seed=0)
    with pytest.raises(ValueError):
        generate_formula(10, -0.5, seed=0)


def test_formula_invariants_enforced():
    with pytest.raises(ValueError):
        Formula(n=2, clauses=[[1, 1, 1, 1]])
    with pytest.raises(ValueError):
        Formula(n=2, clauses=[[1, 1, 3, 1]])
    with pytest.raises(ValueError):
        Formula(n=2, clauses=[[1, 2, 2, 1]])


def test_count_empty_formula():
    stats = count_solutions(Formula(n=2, clauses=np.empty((0, 4), dtype=np.int64)))
    assert stats.count == 4
    assert stats.true_counts == [2, 2]


def test_count_single_clause():
    stats = count_solutions(Formula(n=2, clauses=[[1, 1, 2, 1]]))
    assert stats.count == 3
    assert stats.true_counts == [2, 2]
    assert stats.marginal(1) == Fraction(2, 3)


def test_count_contradiction():
    stats = count_solutions(CONTRADICTION)
    assert stats.count == 0
    assert stats.true_counts == [0, 0]


def test_count_cap_error():
    f = generate_formula(200, 1.5, seed=1)
    with pytest.raises(ResourceLimitError, match="cap"):
        count_solutions(f, cap=28)


def test_satisfiability_examples():
    assert is_satisfiable(Formula(n=3, clauses=np.empty((0, 4), dtype=np.int64)))
    assert not is_satisfiable(CONTRADICTION)


def test_satisfiability_matches_enumeration():
    for seed in range(120):
        f = generate_formula(12, 2.0, seed=seed)
        assert is_satisfiable(f) == (count_solutions(f).count > 0)


def test_marginals_isolated_variable():
    f = Formula(n=3, clauses=[[1, 1, 2, 1]])
    marg = exact_marginals(f)
    assert marg[3] == Fraction(1, 2)
    assert marg[1] == marg[2] == Fraction(2, 3)


def test_marginals_disjoint_copies():
    f = Formula(n=4, clauses=[[1, 1, 2, 1], [3, 1, 4, 1]])
    marg = exact_marginals(f)
    assert all(marg[v] == Fraction(2, 3) for v in range(1, 5))


def test_marginals_unsat_marker():
    assert exact_marginals(CONTRADICTION) is None
    assert empirical_marginal_measure(CONTRADICTION) is None


def test_marginals_match_enumeration():
    # elimination path against the exhaustive oracle, satisfiable and not
    for seed in range(60):
        f = generate_formula(11, 1.8, seed=300 + seed)
        stats = count_solutions(f)
        marg = exact_marginals(f)
        if stats.count == 0:
            assert marg is None
        else:
            for v in range(1, f.n + 1):
                assert marg[v] == Fraction(stats.true_counts[v - 1], stats.count)


def test_component_independence():
    # marginals on a union of variable-disjoint blocks equal the blocks' own
    a = generate_formula(8, 1.2, seed=5)
    b = generate_formula(8, 1.2, seed=6)
    shifted = b.clauses.copy()
    shifted[:, 0] += 8
    shifted[:, 2] += 8
    merged = Formula(n=16, clauses=np.vstack([a.clauses, shifted]))
    ma, mb, mm = exact_marginals(a), exact_marginals(b), exact_marginals(merged)
    if ma is None or mb is None:
        assert mm is None
    else:
        for v in range(1, 9):
            assert mm[v] == ma[v]
            assert mm[v + 8] == mb[v]


def test_component_cap_error():
    f = generate_formula(5000, 0.8, seed=3)
    with pytest.raises(ResourceLimitError, match="component"):
        exact_marginals(f, component_cap=10)


def test_tree_component_marginals_interior():
    # satisfiable tree-shaped components keep marginals strictly inside (0,1)
    from twosatlab.acceptance import random_tree
    from twosatlab.treebp import to_formula
    from twosatlab.util import substream

    rng = substream(99, 0)
    for _ in range(30):
        f = to_formula(random_tree(rng, 25))
        marg = exact_marginals(f)
        assert all(0 < q < 1 for q in marg.values())


def test_empirical_measure_examples():
    empty = Formula(n=3, clauses=np.empty((0, 4), dtype=np.int64))
    pop = empirical_marginal_measure(empty)
    assert np.array_equal(pop.samples, [0.5, 0.5, 0.5])
    one = Formula(n=2, clauses=[[1, 1, 2, 1]])
    pop = empirical_marginal_measure(one)
    assert np.allclose(pop.samples, 2.0 / 3.0)


def test_empirical_measure_mass_at_half():
    pop = empirical_marginal_measure(generate_formula(5000, 0.8, seed=11), d=0.8)
    assert pop.mass_at(0.5) >= math.exp(-0.8) - 0.02


def test_text_roundtrip():
    f = generate_formula(30, 1.5, seed=9)
    buf = io.StringIO()
    write_formula(f, buf)
    text = buf.getvalue()
    assert text.startswith(f"p 2sat 30 {f.m}\n")
    g = read_formula(io.StringIO(text))
    assert g.n == f.n and np.array_equal(g.clauses, f.clauses)
    buf2 = io.StringIO()
    write_formula(g, buf2)
    assert buf2.getvalue() == text


def test_text_literal_convention():
    f = read_formula(io.StringIO("p 2sat 7 1\n-3 7\n"))
    assert f.clauses.tolist() == [[3, -1, 7, 1]]


def test_marginal_json_shape():
    f = Formula(n=2, clauses=[[1, 1, 2, 1]])
    payload = marginals_to_json(f.n, exact_marginals(f))
    assert payload["n"] == 2
    assert payload["marginals"][0] == {"var": 1, "num": "2", "den": "3"}
    assert marginals_to_json(2, None)["unsat"] is True
