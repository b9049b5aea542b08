"""Guessing annihilating operators from enumerated data.

Two ansatz shapes: univariate recurrences ``sum_i p_i(n) f(n+i) = 0`` for
return sequences, and the structured quasi-holonomic operator
``R0(n, N) + a*R1 + b*R2`` (R0 nonzero) on a full walk table.
"""

import itertools
import random
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from math import gcd

import numpy as np

from . import _kernels
from .exactmath import (Poly, RatMatrix, UsageError, exact_nullspace, grlex_key, nullspace,
                        primes_below)
from .opalgebra import ShiftOperator, apply, region_domain
from .walks import WalkTable

NONE = "none"
QUASI = "quasi"

FITTED = "FITTED"
VERIFIED = "VERIFIED"
REFUTED = "REFUTED"

MARGIN = 5
HOLDOUT_FRACTION = 0.25
_SEED = 20071214


# ---------------------------------------------------------------------------
# data sources
# ---------------------------------------------------------------------------

class SequenceData:
    """A finite sequence seen as a table over one index (zero before index 0)."""

    def __init__(self, values, var="n"):
        self.values = [int(v) if not isinstance(v, Fraction) else v for v in values]
        self.index_vars = (var,)
        self.m_max = len(self.values) - 1
        self._arr = np.array(self.values, dtype=object)

    def __len__(self):
        return len(self.values)

    def lookup(self, points, negative_time_zero=True):
        pts = np.asarray(points, dtype=np.int64).reshape(-1)
        if pts.size and pts.max() > self.m_max:
            raise UsageError(f"index {int(pts.max())} beyond the sequence (length {len(self)})")
        out = np.zeros(pts.shape[0], dtype=object)
        ok = pts >= 0
        out[ok] = self._arr[pts[ok]]
        return out


def as_data(t):
    if isinstance(t, (SequenceData, WalkTable)) or hasattr(t, "lookup"):
        return t
    return SequenceData(list(t))


# ---------------------------------------------------------------------------
# ansatz
# ---------------------------------------------------------------------------

def _monomials(nvars, degree, var_degrees=None):
    out = []
    for exps in itertools.product(range(degree + 1), repeat=nvars):
        if sum(exps) > degree:
            continue
        if var_degrees and any(e > b for e, b in zip(exps, var_degrees)):
            continue
        out.append(exps)
    return sorted(out, key=grlex_key)


@dataclass(frozen=True)
class Ansatz:
    index_vars: tuple
    support: tuple
    degree: int
    structure: str = NONE
    var_degrees: tuple = None

    def __post_init__(self):
        support = tuple(sorted({tuple(int(x) for x in e) for e in self.support}, key=grlex_key))
        if not support:
            raise UsageError("ansatz support must be nonempty")
        if self.degree < 0:
            raise UsageError("degree bound must be nonnegative")
        if any(len(e) != len(self.index_vars) for e in support):
            raise UsageError("support exponents must match the index variables")
        if self.structure not in (NONE, QUASI):
            raise UsageError(f"unknown structure {self.structure!r}")
        if self.structure == QUASI:
            if any(x < 0 for e in support for x in e):
                raise UsageError("quasi ansatz uses nonnegative shifts only")
            if not any(not any(e[1:]) for e in support):
                raise UsageError("quasi ansatz needs at least one pure time shift")
        object.__setattr__(self, "support", support)

    @classmethod
    def univariate(cls, order, degree, var="n"):
        return cls((var,), tuple((i,) for i in range(order + 1)), degree)

    @classmethod
    def quasi(cls, index_vars, shift_degree, degree):
        """Every shift with each exponent <= shift_degree, coefficients of total degree <= degree."""
        k = len(index_vars)
        support = tuple(itertools.product(range(shift_degree + 1), repeat=k))
        return cls(tuple(index_vars), support, degree, QUASI)

    @property
    def order(self):
        return max(e[0] for e in self.support)

    def allowed(self, shift, mono):
        if self.structure != QUASI:
            return True
        # a coefficient free of the spatial variables may only sit on a pure time shift
        return any(mono[1:]) or not any(shift[1:])

    def unknowns(self):
        monos = _monomials(len(self.index_vars), self.degree, self.var_degrees)
        return [(e, mono) for e in self.support for mono in monos if self.allowed(e, mono)]

    def pure_mask(self, unknowns=None):
        """Unknowns belonging to R0: pure time shift, coefficient in time only."""
        unknowns = self.unknowns() if unknowns is None else unknowns
        return np.array([not any(e[1:]) and not any(mono[1:]) for e, mono in unknowns], dtype=bool)

    def to_json(self):
        return {
            "index_vars": list(self.index_vars),
            "support": [list(e) for e in self.support],
            "degree": self.degree,
            "structure": self.structure,
        }


def operator_from_vector(ansatz, vec, unknowns=None):
    unknowns = ansatz.unknowns() if unknowns is None else unknowns
    terms = {}
    for (e, mono), c in zip(unknowns, vec):
        if c:
            terms.setdefault(e, {})[mono] = Fraction(c)
    op = ShiftOperator(ansatz.index_vars,
                       {e: Poly(ansatz.index_vars, t) for e, t in terms.items()})
    return op.normalized()


def vector_from_operator(ansatz, op, unknowns=None):
    unknowns = ansatz.unknowns() if unknowns is None else unknowns
    vec = []
    for e, mono in unknowns:
        p = op.terms.get(e)
        vec.append(p.terms.get(mono, Fraction(0)) if p is not None else Fraction(0))
    return vec


def cost_key(ansatz_unknown):
    e, mono = ansatz_unknown
    return (e[0], sum(mono), sum(e), grlex_key(e), grlex_key(mono))


# ---------------------------------------------------------------------------
# fit systems
# ---------------------------------------------------------------------------

def resolvable_points(t, ansatz):
    """Candidate rows: every point whose shifted references all resolve."""
    tmax = max(e[0] for e in ansatz.support)
    if isinstance(t, SequenceData):
        return np.arange(0, len(t) - tmax, dtype=np.int64).reshape(-1, 1)
    if isinstance(t, WalkTable):
        if t.m_max - tmax < 0:
            return np.zeros((0, t.dim + 1), dtype=np.int64)
        return region_domain(t, 0, t.m_max - tmax)
    raise UsageError(f"cannot derive fit points for {type(t).__name__}")


def split_window(points, holdout=HOLDOUT_FRACTION):
    """Earliest indices fit, latest ``holdout`` fraction (by time coordinate) held out."""
    times = np.unique(points[:, 0])
    nheld = int(round(len(times) * holdout))
    if nheld == 0 and len(times) > 1:
        nheld = 1
    cutoff = times[len(times) - nheld] if nheld else times.max() + 1
    fit = points[points[:, 0] < cutoff]
    held = points[points[:, 0] >= cutoff]
    return fit, held


def _point_columns(points):
    return [points[:, i] for i in range(points.shape[1])]


def build_fit_system(t, ansatz, window, modulus=None):
    """One row per window point, one column per unknown coefficient.

    Exact RatMatrix by default; with ``modulus`` an int64 array of residues.
    """
    t = as_data(t)
    pts = np.asarray(window, dtype=np.int64).reshape(-1, len(ansatz.index_vars))
    unknowns = ansatz.unknowns()
    monos = sorted({mono for _, mono in unknowns}, key=grlex_key)
    cols = _point_columns(pts)
    mono_vals = {}
    for mono in monos:
        v = np.ones(len(pts), dtype=object)
        for c, e in zip(cols, mono):
            if e:
                v = v * c.astype(object) ** e
        mono_vals[mono] = v
    shift_vals = {}
    for e in ansatz.support:
        shift_vals[e] = t.lookup(pts + np.asarray(e, dtype=np.int64))
    if modulus:
        p = int(modulus)
        mv = {k: (v % p).astype(np.int64) for k, v in mono_vals.items()}
        sv = {k: (v % p).astype(np.int64) for k, v in shift_vals.items()}
        out = np.empty((len(pts), len(unknowns)), dtype=np.int64)
        for j, (e, mono) in enumerate(unknowns):
            out[:, j] = mv[mono] * sv[e] % p
        return out
    out = np.empty((len(pts), len(unknowns)), dtype=object)
    for j, (e, mono) in enumerate(unknowns):
        out[:, j] = mono_vals[mono] * shift_vals[e]
    return RatMatrix(out, cols=len(unknowns))


# ---------------------------------------------------------------------------
# candidates
# ---------------------------------------------------------------------------

@dataclass
class Candidate:
    operator: ShiftOperator
    ansatz: Ansatz
    fit_window: np.ndarray
    heldout_window: np.ndarray
    status: str = FITTED
    witness: tuple = None
    period: int = 1
    nullity: int = 1
    notes: list = field(default_factory=list)

    @property
    def order(self):
        return max((e[0] for e in self.operator.terms), default=0)

    @property
    def degree(self):
        return self.operator.coefficient_degree()

    def to_json(self):
        def window(w):
            w = np.asarray(w)
            if w.size == 0:
                return {"count": 0}
            return {"count": int(len(w)), "time_range": [int(w[:, 0].min()), int(w[:, 0].max())]}

        return {
            "operator": str(self.operator),
            "operator_json": self.operator.to_json(),
            "status": self.status,
            "ansatz": self.ansatz.to_json(),
            "fit_window": window(self.fit_window),
            "heldout_window": window(self.heldout_window),
            "period": self.period,
            "nullity": self.nullity,
            "witness": None if self.witness is None else
            {"point": list(self.witness[0]), "value": str(self.witness[1])},
            "notes": list(self.notes),
        }


def verify_heldout(c, t, window=None):
    """Apply the candidate to held-out points; sets and returns the status."""
    t = as_data(t)
    window = c.heldout_window if window is None else np.asarray(window, dtype=np.int64)
    window = np.asarray(window, dtype=np.int64).reshape(-1, len(c.operator.index_vars))
    if len(window) and len(c.fit_window):
        fit_set = {tuple(p) for p in np.asarray(c.fit_window).tolist()}
        if any(tuple(p) in fit_set for p in window.tolist()):
            raise UsageError("held-out window overlaps the fit window")
    if len(window) == 0:
        warnings.warn("empty held-out window: candidate verified vacuously", stacklevel=2)
        c.notes.append("verified on an empty held-out window")
        c.status = VERIFIED
        return c.status
    op = c.operator if c.operator.index_vars == t.index_vars else c.operator.rename(t.index_vars)
    report = apply(op, t, window)
    if report.skipped:
        c.notes.append(f"{report.skipped} held-out points unresolvable")
    c.status = VERIFIED if report.ok else REFUTED
    c.witness = report.witness
    return c.status


def _rref_rows(vectors, column_order):
    """Reduced row echelon form (exact) of the vectors with columns taken in the given order."""
    rows = [[Fraction(v[j]) for j in column_order] for v in vectors]
    r = 0
    ncols = len(column_order)
    for c in range(ncols):
        piv = next((i for i in range(r, len(rows)) if rows[i][c]), None)
        if piv is None:
            continue
        rows[r], rows[piv] = rows[piv], rows[r]
        lead = rows[r][c]
        rows[r] = [x / lead for x in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][c]:
                f = rows[i][c]
                rows[i] = [x - f * y for x, y in zip(rows[i], rows[r])]
        r += 1
    inv = [0] * ncols
    for pos, j in enumerate(column_order):
        inv[j] = pos
    return [[row[inv[j]] for j in range(ncols)] for row in rows[:r]]


def minimal_vector(basis, unknowns):
    """Nullspace element using the cheapest unknowns (lowest order, then degree, then fewest terms)."""
    order = sorted(range(len(unknowns)), key=lambda j: cost_key(unknowns[j]), reverse=True)
    reduced = _rref_rows(basis, order)
    return reduced[-1]


def required_length(order, degree):
    return (order + 1) * (degree + 1) + order + MARGIN


def fit_univariate(seq, order, degree, var="n"):
    """Fit ``sum_{i<=order} p_i(n) f(n+i) = 0`` with deg p_i <= degree.

    Fits on the earliest rows, verifies on the latest quarter.  Returns a
    Candidate (VERIFIED or REFUTED) or None when the nullspace is trivial.
    """
    data = seq if isinstance(seq, SequenceData) else SequenceData(list(seq), var)
    need = required_length(order, degree)
    if len(data) < need:
        raise UsageError(f"order {order}, degree {degree} needs at least {need} terms, got {len(data)}")
    ansatz = Ansatz.univariate(order, degree, data.index_vars[0])
    pts = resolvable_points(data, ansatz)
    fit, held = split_window(pts)
    basis = nullspace(build_fit_system(data, ansatz, fit))
    if not basis:
        return None
    unknowns = ansatz.unknowns()
    vec = minimal_vector(basis, unknowns)
    cand = Candidate(operator_from_vector(ansatz, vec, unknowns), ansatz, fit, held,
                     nullity=len(basis))
    verify_heldout(cand, data)
    return cand


def detect_period(seq):
    """gcd of the gaps between nonzero terms (starting from index 0)."""
    idx = [i for i, v in enumerate(seq) if v]
    if not idx or idx[0] != 0 or len(idx) == 1:
        return 1
    return reduce(gcd, (b - a for a, b in zip(idx, idx[1:])), 0) or 1


def guess_univariate(seq, max_order, max_degree, var="n", report=None):
    """Smallest (order, then degree) VERIFIED recurrence, skipping ansätze the data cannot support."""
    data = seq if isinstance(seq, SequenceData) else SequenceData(list(seq), var)
    for order in range(max_order + 1):
        for degree in range(max_degree + 1):
            if len(data) < required_length(order, degree):
                if report is not None:
                    report.append({"order": order, "degree": degree, "result": "skipped: too few terms"})
                continue
            cand = fit_univariate(data, order, degree)
            if report is not None:
                report.append({"order": order, "degree": degree,
                               "result": "none" if cand is None else cand.status})
            if cand is not None and cand.status == VERIFIED:
                return cand
    return None


def guess_return_sequence(seq, max_order, max_degree, var="n", report=None):
    """Re-index to the nonzero subsequence, then ``guess_univariate``."""
    p = detect_period(seq)
    sub = list(seq)[::p]
    cand = guess_univariate(sub, max_order, max_degree, var, report)
    if cand is not None:
        cand.period = p
    return cand


# ---------------------------------------------------------------------------
# quasi-holonomic ansatz
# ---------------------------------------------------------------------------

@dataclass
class QuasiSearch:
    """Bookkeeping from one fit_quasi run."""

    unknowns: int
    rows: int
    rank: int = 0
    free_r0: list = field(default_factory=list)
    primes: list = field(default_factory=list)
    tried: int = 0

    def to_json(self):
        return {"unknowns": self.unknowns, "rows": self.rows, "rank": self.rank,
                "free_r0_columns": len(self.free_r0), "primes": self.primes, "tried": self.tried}


def _modular_echelon(t, ansatz, pts, column_order, p, rng, chunk=None):
    ncols = len(column_order)
    chunk = chunk or max(2 * ncols, 256)
    order = rng.permutation(len(pts))
    chosen = np.zeros(0, dtype=np.int64)
    rank, pivots = 0, np.zeros(0, dtype=np.int64)
    for start in range(0, len(order), chunk):
        idx = np.concatenate([chosen, order[start:start + chunk]])
        block = build_fit_system(t, ansatz, pts[idx], modulus=p)[:, column_order]
        nz = block.any(axis=1)
        idx, block = idx[nz], block[nz]
        rank, sel, pivots = _kernels.echelon_mod(block, p)
        chosen = idx[sel]
        if rank == ncols:
            break
    return rank, chosen, pivots


def fit_quasi(t, ansatz, window=None, max_candidates=8, search=None):
    """Fit R = R0(n,N) + a*R1 + b*R2 with R0 != 0 on a walk table.

    ``window`` is ``(fit_points, heldout_points)``; default splits by time.
    Existence of a fit with nonzero R0 is decided from the pivot structure
    modulo two primes (R0 columns eliminated last); any survivor is solved
    exactly and checked on the held-out window.
    """
    if ansatz.structure != QUASI:
        raise UsageError("fit_quasi needs a QUASI ansatz")
    if not isinstance(t, WalkTable) or not t.retained:
        raise UsageError("fit_quasi needs a walk table with all slices retained")
    if len(ansatz.index_vars) != t.dim + 1:
        raise UsageError("ansatz index variables do not match the table")
    if window is None:
        fit, held = split_window(resolvable_points(t, ansatz))
    else:
        fit, held = (np.asarray(w, dtype=np.int64).reshape(-1, t.dim + 1) for w in window)
    unknowns = ansatz.unknowns()
    pure = ansatz.pure_mask(unknowns)
    # spatial part first (costly first), then R0 columns, cheapest last
    rest = sorted(np.flatnonzero(~pure), key=lambda j: cost_key(unknowns[j]), reverse=True)
    r0 = sorted(np.flatnonzero(pure), key=lambda j: cost_key(unknowns[j]), reverse=True)
    column_order = np.array(rest + r0, dtype=np.int64)
    info = QuasiSearch(unknowns=len(unknowns), rows=len(fit))
    if search is not None:
        search.append(info)
    if len(fit) == 0:
        return None

    rng = np.random.default_rng(_SEED)
    prime_rng = random.Random(_SEED)
    pool = primes_below(_kernels.MODULUS_LIMIT, 64)
    results = []
    for _ in range(2):
        p = prime_rng.choice(pool)
        rank, chosen, pivots = _modular_echelon(t, ansatz, fit, column_order, p, rng)
        info.primes.append(p)
        results.append((rank, chosen, pivots))
    # mod-p rank is a lower bound; keep the run with the larger rank
    rank, chosen, pivots = max(results, key=lambda r: r[0])
    info.rank = rank
    pivot_set = {int(x) for x in pivots}
    nrest = len(rest)
    free_r0 = [pos for pos in range(nrest, len(column_order)) if pos not in pivot_set]
    info.free_r0 = free_r0
    if not free_r0:
        return None

    # exact solve on the independent rows, restricted to pivot columns + one free R0 column
    exact = build_fit_system(t, ansatz, fit[np.sort(chosen)]).entries[:, column_order]
    piv_sorted = sorted(pivot_set)
    verified = []
    for pos in reversed(free_r0[-max_candidates:]):
        info.tried += 1
        cols = piv_sorted + [pos]
        basis = exact_nullspace(RatMatrix(exact[:, cols]))
        for b in basis:
            vec = [Fraction(0)] * len(unknowns)
            for c, val in zip(cols, b):
                vec[column_order[c]] = val
            if not any(vec[j] for j in np.flatnonzero(pure)):
                continue
            op = operator_from_vector(ansatz, vec, unknowns)
            cand = Candidate(op, ansatz, fit, held, nullity=len(free_r0))
            # the exact fit must hold on every fit row, not only the chosen ones
            if not apply(op, t, fit).ok:
                cand.status = REFUTED
                continue
            if verify_heldout(cand, t) == VERIFIED:
                verified.append(cand)
    if not verified:
        return None
    return min(verified, key=lambda c: (c.order, c.degree, len(c.operator.terms)))


def specialize(c):
    """Set every spatial index to 0: R(a=0, b=0) = R0(n, N) on the return sequence."""
    ansatz = c.ansatz if isinstance(c, Candidate) else None
    op = c.operator if isinstance(c, Candidate) else c
    if ansatz is not None and ansatz.structure != QUASI:
        raise UsageError("specialize needs a QUASI candidate")
    names = op.index_vars
    at_origin = op.substitute({v: 0 for v in names[1:]})
    for e, p in at_origin.terms.items():
        if any(e[1:]):
            raise UsageError(f"term with shift {e} survives the substitution; not QUASI-shaped")
    out = at_origin.restrict(names[:1])
    if out.is_zero():
        raise UsageError("specialized operator is zero")
    return out.normalized()
