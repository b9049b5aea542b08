import warnings
from fractions import Fraction

import numpy as np
import pytest

from oracles import catalan
from quasiholo.exactmath import UsageError
from quasiholo.guess import (REFUTED, VERIFIED, Ansatz, Candidate, SequenceData, build_fit_system,
                             detect_period, fit_quasi, fit_univariate, guess_return_sequence,
                             guess_univariate, required_length, resolvable_points, specialize,
                             split_window, verify_heldout)
from quasiholo.opalgebra import ShiftOperator, parse_operator
from quasiholo.walks import GESSEL, KREWERAS, enumerate_walks

CATALAN_OP = parse_operator("(n + 2)*N + (-4*n - 2)", ("n",))


def perturbations(op):
    """Every operator obtained by adding +1 or -1 to a single coefficient."""
    for e, p in op.terms.items():
        for mono in p.terms:
            for d in (1, -1):
                terms = dict(op.terms)
                q = dict(p.terms)
                q[mono] = q[mono] + d
                terms[e] = type(p)(p.variables, q)
                yield ShiftOperator(op.index_vars, terms)


def test_catalan_roundtrip():
    c = fit_univariate([catalan(n) for n in range(14)], 1, 1)
    assert c.status == VERIFIED
    assert c.operator == CATALAN_OP


def test_short_data_is_a_usage_error():
    with pytest.raises(UsageError, match="needs at least"):
        fit_univariate([catalan(n) for n in range(8)], 1, 1)
    assert required_length(1, 1) == 10


def test_no_recurrence_returns_none():
    # 2^(n^2) satisfies nothing of order 1, degree 1
    assert fit_univariate([2 ** (n * n) for n in range(14)], 1, 1) is None


def test_windows_do_not_overlap():
    pts = np.arange(20).reshape(-1, 1)
    fit, held = split_window(pts)
    assert fit[:, 0].max() < held[:, 0].min()
    assert len(held) == 5


def test_heldout_overlap_rejected():
    data = SequenceData([catalan(n) for n in range(14)])
    c = fit_univariate(data, 1, 1)
    with pytest.raises(UsageError):
        verify_heldout(c, data, c.fit_window[:2])


def test_empty_heldout_warns():
    data = SequenceData([catalan(n) for n in range(14)])
    c = fit_univariate(data, 1, 1)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        assert verify_heldout(c, data, np.zeros((0, 1), dtype=np.int64)) == VERIFIED
    assert w and "empty" in str(w[0].message)


def test_detect_period():
    assert detect_period([1, 0, 0, 2, 0, 0, 16]) == 3
    assert detect_period([1, 1, 2]) == 1
    assert detect_period([1, 0, 0, 0]) == 1


def test_kreweras_return_sequence():
    seq = enumerate_walks(KREWERAS, "quadrant", 36).returns
    c = guess_return_sequence(seq, 1, 2)
    assert c.status == VERIFIED and c.period == 3
    assert c.operator == parse_operator("(2*n^2 + 7*n + 6)*N + (-54*n^2 - 54*n - 12)", ("n",))
    # held-out points reach the end of the enumerated data (n = 12, i.e. m = 36)
    assert c.heldout_window[:, 0].max() == 11


def test_gessel_return_sequence():
    seq = enumerate_walks(GESSEL, "quadrant", 40).returns
    c = guess_return_sequence(seq, 2, 3)
    assert c is not None and c.status == VERIFIED
    assert c.order == 1 and c.degree == 2


def test_guess_report_records_skips():
    report = []
    guess_univariate([catalan(n) for n in range(9)], 2, 2, report=report)
    assert any(r["result"].startswith("skipped") for r in report)


@pytest.mark.parametrize("name,seq_fn,order,degree,period", [
    ("catalan", lambda: [catalan(n) for n in range(16)], 1, 1, 1),
    ("kreweras", lambda: enumerate_walks(KREWERAS, "quadrant", 36).returns, 1, 2, 3),
    ("gessel", lambda: enumerate_walks(GESSEL, "quadrant", 40).returns, 1, 2, 2),
])
def test_mutations_are_refuted(name, seq_fn, order, degree, period):
    seq = seq_fn()
    sub = seq[::period]
    c = fit_univariate(sub, order, degree)
    assert c.status == VERIFIED
    data = SequenceData(sub)
    everything = resolvable_points(data, c.ansatz)
    for bad in perturbations(c.operator):
        m = Candidate(bad, c.ansatz, np.zeros((0, 1), dtype=np.int64), everything)
        assert verify_heldout(m, data) == REFUTED
        point, value = m.witness
        assert value != 0 and 0 <= point[0] < len(sub)


def test_fit_system_modular_matches_exact():
    t = enumerate_walks("-1;1", "halfline", 10, retain=True)
    a = Ansatz.quasi(t.index_vars, 1, 1)
    pts = resolvable_points(t, a)[:30]
    exact = build_fit_system(t, a, pts)
    p = 2147483629
    mod = build_fit_system(t, a, pts, modulus=p)
    ref = np.array([[int(x) % p for x in row] for row in exact.entries], dtype=np.int64)
    assert np.array_equal(mod, ref)


def test_quasi_ansatz_shape():
    a = Ansatz.quasi(("m", "n"), 1, 1)
    for e, mono in a.unknowns():
        if not any(mono[1:]):
            assert not any(e[1:])
    with pytest.raises(UsageError):
        Ansatz(("m", "n"), ((0, -1),), 1, "quasi")


def test_quasi_dyck():
    t = enumerate_walks("-1;1", "halfline", 30, retain=True)
    c = fit_quasi(t, Ansatz.quasi(t.index_vars, 2, 2))
    assert c is not None and c.status == VERIFIED
    r0 = specialize(c)
    # R0 annihilates the return sequence (Catalan numbers at even times)
    from quasiholo.opalgebra import apply
    assert apply(r0.rename(("m",)).embed(t.index_vars), t, "origin", negative_time_zero=False).ok
    for bad in perturbations(c.operator):
        m = Candidate(bad, c.ansatz, np.zeros((0, 2), dtype=np.int64), resolvable_points(t, c.ansatz))
        assert verify_heldout(m, t) == REFUTED
    assert fit_quasi(t, Ansatz.quasi(t.index_vars, 1, 1)) is None


def test_quasi_is_deterministic():
    t = enumerate_walks("-1;1", "halfline", 24, retain=True)
    a = Ansatz.quasi(t.index_vars, 2, 2)
    assert fit_quasi(t, a).operator == fit_quasi(t, a).operator


def test_quasi_needs_retained_table():
    t = enumerate_walks("-1;1", "halfline", 10)
    with pytest.raises(UsageError):
        fit_quasi(t, Ansatz.quasi(("m", "n"), 1, 1))


def test_specialize_rejects_non_quasi():
    with pytest.raises(UsageError):
        specialize(ShiftOperator.shift((0, 1), ("m", "n"), Fraction(1)))


def test_3d_extended_search_finds_nothing():
    # 21 nonzero terms instead of 7: every (order, degree) <= 6 the data supports is tried
    from quasiholo.walks import KREWERAS_3D
    seq = enumerate_walks(KREWERAS_3D, "octant3d", 80).returns
    sub = seq[::detect_period(seq)]
    report = []
    assert guess_univariate(sub, 6, 6, report=report) is None
    assert sum(r["result"] == "none" for r in report) == 25


def test_seven_catalan_terms_give_one_dimensional_nullspace():
    from quasiholo.exactmath import nullspace
    from quasiholo.guess import operator_from_vector
    data = SequenceData([1, 1, 2, 5, 14, 42, 132])
    a = Ansatz.univariate(1, 1)
    basis = nullspace(build_fit_system(data, a, resolvable_points(data, a)))
    assert len(basis) == 1
    assert operator_from_vector(a, basis[0]) == CATALAN_OP


def test_catalan_candidate_on_later_terms():
    c = fit_univariate([catalan(n) for n in range(10)], 1, 1)
    data = SequenceData([catalan(n) for n in range(21)])
    window = np.arange(8, 20).reshape(-1, 1)
    assert verify_heldout(c, data, window) == VERIFIED
