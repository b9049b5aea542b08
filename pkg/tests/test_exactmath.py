import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quasiholo.exactmath import (Poly, RatMatrix, UsageError, bareiss_echelon, exact_nullspace,
                                 exact_rank, integer_content_vector, is_prime, nullspace,
                                 parse_poly, poly_eval, poly_to_str, primes_below, random_prime,
                                 rank_mod_prime, rat_from_str, rat_to_str)

VARS = ("m", "n1", "n2")

small = st.integers(-4, 4)
exps = st.tuples(st.integers(0, 2), st.integers(0, 2), st.integers(0, 2))
polys = st.dictionaries(exps, st.fractions(min_value=-5, max_value=5, max_denominator=4), max_size=4).map(
    lambda d: Poly(VARS, d))
points = st.tuples(small, small, small)


def test_rational_strings():
    assert rat_to_str(Fraction(3, 1)) == "3"
    assert rat_to_str(Fraction(-5, 6)) == "-5/6"
    assert rat_from_str("-5/6") == Fraction(-5, 6)
    with pytest.raises(ZeroDivisionError):
        rat_from_str("1/0")


@given(polys, polys, points)
def test_ring_ops_match_evaluation(p, q, pt):
    at = dict(zip(VARS, pt))
    assert poly_eval(p + q, at) == poly_eval(p, at) + poly_eval(q, at)
    assert poly_eval(p * q, at) == poly_eval(p, at) * poly_eval(q, at)
    assert poly_eval(p - p, at) == 0


@given(polys, polys, polys)
def test_ring_axioms(p, q, r):
    assert p * q == q * p
    assert (p * q) * r == p * (q * r)
    assert p * (q + r) == p * q + p * r


@given(polys, points, points)
def test_shift_is_substitution(p, off, pt):
    at = dict(zip(VARS, pt))
    moved = {v: x + o for v, x, o in zip(VARS, pt, off)}
    assert poly_eval(p.shift(off), at) == poly_eval(p, moved)


@given(polys)
def test_print_parse_roundtrip(p):
    assert parse_poly(poly_to_str(p), VARS) == p
    assert Poly.from_json(p.to_json()) == p


def test_degree_and_leading():
    m, n1 = Poly.var("m", VARS), Poly.var("n1", VARS)
    p = 3 * m**2 * n1 - m + 7
    assert p.degree() == 3
    assert p.degree("m") == 2
    assert p.leading_coefficient() == 3
    assert p.constant_term() == 7
    assert Poly(VARS).degree() == -1


def test_parse_rejects_unknown_variable():
    with pytest.raises(UsageError):
        parse_poly("x + 1", VARS)


def test_eval_arrays_is_exact():
    p = parse_poly("m^5*n1 + 1/3", VARS)
    m = np.array([10**4, 2], dtype=object)
    n1 = np.array([7, 3], dtype=object)
    out = p.eval_arrays([m, n1, np.zeros(2, dtype=object)])
    assert out[0] == Fraction(10**20 * 7) + Fraction(1, 3)


def _random_int_matrix(rng, rows, cols, rank):
    a = [[rng.randint(-6, 6) for _ in range(rank)] for _ in range(rows)]
    b = [[rng.randint(-6, 6) for _ in range(cols)] for _ in range(rank)]
    return [[sum(a[i][k] * b[k][j] for k in range(rank)) for j in range(cols)] for i in range(rows)]


@pytest.mark.parametrize("seed", range(20))
def test_nullspace_properties(seed):
    rng = random.Random(seed)
    rows, cols = rng.randint(1, 8), rng.randint(1, 8)
    rank = rng.randint(0, min(rows, cols))
    m = RatMatrix(_random_int_matrix(rng, rows, cols, rank), cols=cols)
    basis = nullspace(m)
    r = exact_rank(m)
    assert len(basis) == cols - r
    for v in basis:
        assert not any(m.apply(v))
    # the modular pre-pass must agree with plain elimination
    assert [list(v) for v in basis] == [list(v) for v in exact_nullspace(m)]


def test_nullspace_full_rank_is_empty():
    assert nullspace(RatMatrix([[1, 2], [3, 4]])) == []


def test_nullspace_rational_entries():
    m = RatMatrix([[Fraction(1, 2), Fraction(1, 3)], [1, Fraction(2, 3)]])
    (v,) = nullspace(m)
    assert list(m.apply(v)) == [0, 0]
    assert integer_content_vector(v) in ([2, -3], [-2, 3])


def test_bareiss_rank_of_hilbert_like_matrix():
    h = [[Fraction(1, i + j + 1) for j in range(6)] for i in range(6)]
    assert exact_rank(RatMatrix(h)) == 6
    _, pivots = bareiss_echelon(RatMatrix(h).integer_rows())
    assert pivots == list(range(6))


def test_rank_mod_prime_lower_bound():
    rng = random.Random(3)
    m = RatMatrix(_random_int_matrix(rng, 7, 9, 5), cols=9)
    for p in primes_below(2**31, 3) + [random_prime(62, random.Random(1))]:
        assert rank_mod_prime(m, p) <= exact_rank(m)
    assert rank_mod_prime(m, primes_below(2**31, 1)[0]) == 5


def test_primes():
    assert [n for n in range(30) if is_prime(n)] == [2, 3, 5, 7, 11, 13, 17, 19, 23, 29]
    assert is_prime(2**61 - 1)
    assert not is_prime(3215031751)  # strong pseudoprime to bases 2, 3, 5, 7
    p = random_prime(62, random.Random(5))
    assert is_prime(p) and p.bit_length() == 62
    assert all(is_prime(q) and q < 2**31 for q in primes_below(2**31, 5))


@settings(max_examples=40)
@given(st.lists(st.lists(st.integers(-3, 3), min_size=4, max_size=4), min_size=1, max_size=5))
def test_nullspace_hypothesis(rows):
    m = RatMatrix(rows, cols=4)
    for v in nullspace(m):
        assert not any(m.apply(v))
        assert any(v)


@pytest.mark.parametrize("seed", range(5))
def test_rank_mod_62bit_primes_reaches_exact_rank(seed):
    rng = random.Random(100 + seed)
    rows, cols, rank = 9, 8, 6
    a = [[rng.randint(-1000, 1000) for _ in range(rank)] for _ in range(rows)]
    b = [[rng.randint(-1000, 1000) for _ in range(cols)] for _ in range(rank)]
    m = RatMatrix([[sum(x * y for x, y in zip(row, col)) for col in zip(*b)] for row in a], cols=cols)
    exact = exact_rank(m)
    ranks = [rank_mod_prime(m, random_prime(62, rng)) for _ in range(3)]
    assert all(r <= exact for r in ranks)
    assert exact in ranks
