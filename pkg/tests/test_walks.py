import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_walks, chamber, kreweras_formula, quadrant
from quasiholo import walks
from quasiholo.exactmath import UsageError
from quasiholo.walks import (GESSEL, GESSEL_REFINED, KREWERAS, KREWERAS_REFINED, ParseError, Region,
                             ResourceError, StepSet, WalkTable, derive_box, enumerate_walks,
                             gessel_G, refine, refined_enumerate, total_count)


def table_matches_brute(table, brute):
    """Every in-box cell equals the brute-force count (0 where brute force saw nothing)."""
    for m, cnt in brute.items():
        sl = table.slice(m)
        assert sum(int(v) for v in np.ravel(sl)) == sum(cnt.values())
        for pt, v in cnt.items():
            assert table.count(m, *pt) == v, (m, pt)


def test_step_parse_roundtrip():
    s = StepSet.parse(KREWERAS)
    assert s.steps == ((-1, 0), (0, -1), (1, 1))
    assert StepSet.parse(str(s)) == s
    assert s.dim == 2 and len(s) == 3


@pytest.mark.parametrize("text", ["", "1,0;1", "1,0;1,0", "1,x"])
def test_step_parse_errors(text):
    with pytest.raises(UsageError):
        StepSet.parse(text)


def test_parse_error_carries_position():
    with pytest.raises(ParseError) as info:
        StepSet.parse("1,0;0,y")
    assert info.value.position == 4  # character offset of the bad tuple


def test_region_presets():
    assert Region.parse("quadrant") == Region.orthant(2)
    assert Region.parse("halfline").dim == 1
    b = Region.parse("ballot:3")
    assert b.contains((2, 1, 0)) and not b.contains((1, 2, 0)) and not b.contains((1, 1, -1))
    assert Region.parse("1,-1>=0;0,1>=0").contains((3, 2))
    with pytest.raises(UsageError):
        Region.parse("quadrant", dim=3)
    with pytest.raises(UsageError):
        Region.parse("1,0>=1")  # origin outside
    with pytest.raises(ParseError):
        Region.parse("1,0=>0")


def test_box_derivation():
    steps = StepSet.parse(KREWERAS)
    assert derive_box(steps, Region.orthant(2), 5) == ((0, 5), (0, 5))
    assert derive_box(steps, Region.unrestricted(2), 4) == ((-4, 4), (-4, 4))
    assert derive_box(StepSet.parse("1,0;0,1"), Region.orthant(2), 3) == ((0, 3), (0, 3))


def test_kreweras_small_values(backend):
    t = enumerate_walks(KREWERAS, "quadrant", 12, backend=backend)
    assert t.returns == [1, 0, 0, 2, 0, 0, 16, 0, 0, 192, 0, 0, 2816]
    assert t.returns[::3] == [kreweras_formula(n) for n in range(5)]


def test_m_zero_is_the_origin_only(backend):
    t = enumerate_walks(GESSEL, "quadrant", 0, retain=True, backend=backend)
    assert t.returns == [1]
    assert t.count(0, 0, 0) == 1
    assert sum(np.ravel(t.slice(0))) == 1


@pytest.mark.parametrize("steps,region,inside", [
    (KREWERAS, "quadrant", quadrant),
    (GESSEL, "quadrant", quadrant),
    ("-1;1", "halfline", quadrant),
    ("1,0;0,1;-1,-1", "none", lambda p: True),
    ("1,0,0;0,1,0;0,0,1", "ballot:3", chamber),
])
def test_brute_force_equivalence(steps, region, inside, backend):
    t = enumerate_walks(steps, region, 6, retain=True, backend=backend)
    table_matches_brute(t, brute_walks(StepSet.parse(steps).steps, inside, 6))


def test_unrestricted_total_is_power():
    t = enumerate_walks(GESSEL, "none", 7, retain=True)
    for m in range(8):
        assert sum(int(v) for v in np.ravel(t.slice(m))) == total_count(GESSEL, m)


def test_backends_agree_past_int64():
    # 4^40 > 2^63: forces the multi-prime path on the numba side
    a = enumerate_walks(GESSEL, "quadrant", 40, retain=True, backend="numpy")
    b = enumerate_walks(GESSEL, "quadrant", 40, retain=True, backend="numba")
    assert a.returns == b.returns
    assert all(np.array_equal(x, y) for x, y in zip(a.slices, b.slices))
    assert a.returns[40] > 2**63


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.integers(-2, 2), st.integers(-2, 2)), min_size=1, max_size=5, unique=True),
       st.integers(0, 5))
def test_random_step_sets_match_brute_force(steps, m):
    t = enumerate_walks(StepSet(tuple(steps)), "quadrant", m, retain=True, backend="numpy")
    table_matches_brute(t, brute_walks(steps, quadrant, m))


def test_lookup_zero_extension():
    t = enumerate_walks(KREWERAS, "quadrant", 6, retain=True)
    pts = np.array([[3, 0, 0], [-1, 0, 0], [2, -1, 0], [2, 50, 0], [6, 2, 2]])
    assert list(t.lookup(pts)) == [2, 0, 0, 0, t.count(6, 2, 2)]
    with pytest.raises(UsageError):
        t.lookup(np.array([[7, 0, 0]]))


def test_not_retained_slices():
    t = enumerate_walks(KREWERAS, "quadrant", 6)
    assert t.returns[6] == 16
    with pytest.raises(UsageError):
        t.slice(3)


def test_json_roundtrip():
    t = enumerate_walks(GESSEL, "quadrant", 8, retain=True)
    obj = json.loads(json.dumps(t.to_json()))
    assert all(isinstance(v, str) for v in obj["returns"])
    u = WalkTable.from_json(obj)
    assert u.returns == t.returns and u.box == t.box
    assert all(np.array_equal(x, y) for x, y in zip(u.slices, t.slices))


def test_memory_budget():
    with pytest.raises(ResourceError):
        enumerate_walks(KREWERAS, "quadrant", 200, retain=True, memory_budget=10**5)
    assert isinstance(ResourceError("x"), MemoryError)


def test_refine_regions():
    r, reg = refine(KREWERAS_REFINED, "quadrant")
    assert r == 3
    # prefix condition: a2 - a1 >= 0 and a3 - a1 >= 0
    assert reg.contains((1, 1, 1)) and not reg.contains((1, 0, 1))


def test_refined_counts_match_brute_force():
    from oracles import refined_brute
    rt = refined_enumerate(KREWERAS_REFINED, "quadrant", 6)
    brute = refined_brute(StepSet.parse(KREWERAS_REFINED).steps, quadrant, 6)
    for counts, v in brute.items():
        assert rt.f(*counts) == v
    assert rt.f(0, 0, 0) == 1
    assert rt.f(-1, 0, 0) == 0


def test_refined_diagonal_and_G():
    rt = refined_enumerate(KREWERAS_REFINED, "quadrant", 15)
    ret = enumerate_walks(KREWERAS_REFINED, "quadrant", 15).returns
    assert [rt.f(n, n, n) for n in range(6)] == ret[::3]
    g = refined_enumerate(GESSEL_REFINED, "quadrant", 12)
    gret = enumerate_walks(GESSEL, "quadrant", 12).returns
    assert [gessel_G(g, n) for n in range(7)] == gret[::2]
    with pytest.raises(UsageError):
        gessel_G(g, 7)


def test_default_backend_env(monkeypatch):
    monkeypatch.setenv("QUASIHOLO_NUMBA", "0")
    from quasiholo import _kernels
    assert _kernels.backend_name() == "numpy"
    assert walks.enumerate_walks(KREWERAS, "quadrant", 6).returns[6] == 16
