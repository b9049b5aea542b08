"""Exact arithmetic: rationals, sparse multivariate polynomials, nullspaces.

Rationals are ``fractions.Fraction`` (always reduced, positive denominator).
"""

import random
import re
from fractions import Fraction
from functools import reduce
from math import comb, gcd

import numpy as np

from . import _kernels


class UsageError(ValueError):
    """Caller violated a precondition (mismatched shapes, variables, ...)."""


class RetryableError(ArithmeticError):
    """The chosen prime divides a denominator; pick another prime."""


# ---------------------------------------------------------------------------
# rationals
# ---------------------------------------------------------------------------

def rat(x):
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return rat_from_str(x)
    return Fraction(x)


def rat_to_str(x):
    x = Fraction(x)
    if x.denominator == 1:
        return str(x.numerator)
    return f"{x.numerator}/{x.denominator}"


def rat_from_str(s):
    s = s.strip()
    if "/" in s:
        num, den = s.split("/")
        return Fraction(int(num), int(den))
    return Fraction(int(s))


def lcm(a, b):
    return a // gcd(a, b) * b if a and b else max(a, b)


# ---------------------------------------------------------------------------
# polynomials
# ---------------------------------------------------------------------------

def grlex_key(exps):
    """Sort key for graded lexicographic order (ascending)."""
    return (sum(exps), tuple(exps))


class Poly:
    """Sparse polynomial with Fraction coefficients over named variables.

    ``terms`` maps exponent tuples to nonzero coefficients.  Instances are
    treated as immutable.
    """

    __slots__ = ("variables", "terms")

    def __init__(self, variables, terms=None):
        self.variables = tuple(variables)
        nv = len(self.variables)
        clean = {}
        for exps, c in (terms or {}).items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != nv:
                raise UsageError(f"exponent vector {exps} does not match variables {self.variables}")
            if any(e < 0 for e in exps):
                raise UsageError(f"negative exponent in {exps}")
            c = rat(c)
            if c:
                clean[exps] = clean.get(exps, 0) + c
                if not clean[exps]:
                    del clean[exps]
        self.terms = clean

    # -- constructors -----------------------------------------------------

    @classmethod
    def const(cls, c, variables):
        return cls(variables, {(0,) * len(tuple(variables)): c})

    @classmethod
    def var(cls, name, variables):
        variables = tuple(variables)
        if name not in variables:
            raise UsageError(f"unknown variable {name!r}")
        exps = tuple(1 if v == name else 0 for v in variables)
        return cls(variables, {exps: 1})

    @classmethod
    def monomial(cls, exps, variables, coeff=1):
        return cls(variables, {tuple(exps): coeff})

    # -- basic protocol ---------------------------------------------------

    def _check(self, other):
        if self.variables != other.variables:
            raise UsageError(f"variable lists differ: {self.variables} vs {other.variables}")

    def _coerce(self, other):
        if isinstance(other, Poly):
            self._check(other)
            return other
        return Poly.const(other, self.variables)

    def __eq__(self, other):
        if isinstance(other, Poly):
            return self.variables == other.variables and self.terms == other.terms
        try:
            return self == Poly.const(other, self.variables)
        except (TypeError, ValueError):
            return NotImplemented

    def __hash__(self):
        return hash((self.variables, frozenset(self.terms.items())))

    def __bool__(self):
        return bool(self.terms)

    def is_zero(self):
        return not self.terms

    def is_constant(self):
        return all(not any(e) for e in self.terms)

    def constant_term(self):
        return self.terms.get((0,) * len(self.variables), Fraction(0))

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0) + c
        return Poly(self.variables, out)

    __radd__ = __add__

    def __neg__(self):
        return Poly(self.variables, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, Poly):
            c = rat(other)
            return Poly(self.variables, {e: c * v for e, v in self.terms.items()})
        return poly_mul(self, other)

    __rmul__ = __mul__

    def __pow__(self, k):
        out = Poly.const(1, self.variables)
        for _ in range(k):
            out = out * self
        return out

    def degree(self, var=None):
        """Total degree, or degree in one variable; -1 for the zero polynomial."""
        if not self.terms:
            return -1
        if var is None:
            return max(sum(e) for e in self.terms)
        i = self.variables.index(var)
        return max(e[i] for e in self.terms)

    def sorted_terms(self, descending=True):
        return sorted(self.terms.items(), key=lambda kv: grlex_key(kv[0]), reverse=descending)

    def leading_coefficient(self):
        if not self.terms:
            return Fraction(0)
        return self.sorted_terms()[0][1]

    # -- evaluation and substitution ---------------------------------------

    def __call__(self, *point):
        return poly_eval(self, point)

    def shift(self, offsets):
        """p(v + offsets) as a polynomial in the same variables."""
        offsets = tuple(int(o) for o in offsets)
        if len(offsets) != len(self.variables):
            raise UsageError("shift vector length does not match variables")
        if not any(offsets):
            return self
        out = {}
        for exps, c in self.terms.items():
            # expand prod (v_i + o_i)^e_i
            partial = {(): c}
            for e, o in zip(exps, offsets):
                nxt = {}
                if o == 0:
                    for k, v in partial.items():
                        nxt[k + (e,)] = v
                else:
                    for k, v in partial.items():
                        for j in range(e + 1):
                            key = k + (j,)
                            nxt[key] = nxt.get(key, 0) + v * comb(e, j) * o ** (e - j)
                partial = nxt
            for k, v in partial.items():
                out[k] = out.get(k, 0) + v
        return Poly(self.variables, out)

    def substitute(self, values):
        """Substitute numbers for some variables (dict name -> value); keeps the variable list."""
        idx = {self.variables.index(k): rat(v) for k, v in values.items()}
        out = {}
        for exps, c in self.terms.items():
            factor = c
            new = list(exps)
            for i, v in idx.items():
                factor *= v ** exps[i]
                new[i] = 0
            key = tuple(new)
            out[key] = out.get(key, 0) + factor
        return Poly(self.variables, out)

    def with_variables(self, variables):
        """Re-express over another variable list containing every used variable."""
        variables = tuple(variables)
        pos = []
        for i, v in enumerate(self.variables):
            if v in variables:
                pos.append(variables.index(v))
            elif any(e[i] for e in self.terms):
                raise UsageError(f"variable {v!r} is used and missing from {variables}")
            else:
                pos.append(None)
        out = {}
        for exps, c in self.terms.items():
            new = [0] * len(variables)
            for i, e in enumerate(exps):
                if pos[i] is not None:
                    new[pos[i]] = e
            out[tuple(new)] = c
        return Poly(variables, out)

    def eval_arrays(self, arrays):
        """Evaluate on parallel numpy arrays (one per variable); exact, object dtype."""
        if len(arrays) != len(self.variables):
            raise UsageError("need one array per variable")
        shape = np.broadcast(*arrays).shape if arrays else ()
        total = np.zeros(shape, dtype=object)
        objs = [np.asarray(a).astype(object) for a in arrays]
        for exps, c in self.terms.items():
            term = np.full(shape, int(c) if c.denominator == 1 else c, dtype=object)
            for a, e in zip(objs, exps):
                if e:
                    term = term * a ** e
            total = total + term
        return total

    # -- content / normalization -------------------------------------------

    def denominator_lcm(self):
        return reduce(lcm, (c.denominator for c in self.terms.values()), 1)

    def numerator_gcd(self):
        return reduce(gcd, (c.numerator for c in self.terms.values()), 0)

    # -- text / json -------------------------------------------------------

    def __str__(self):
        return poly_to_str(self)

    def __repr__(self):
        return f"Poly({self.variables}, {poly_to_str(self)!r})"

    def to_json(self):
        return {
            "variables": list(self.variables),
            "terms": [[list(e), rat_to_str(c)] for e, c in self.sorted_terms()],
        }

    @classmethod
    def from_json(cls, obj):
        return cls(obj["variables"], {tuple(e): rat_from_str(c) for e, c in obj["terms"]})


def poly_mul(p, q):
    """Product of two polynomials over the same variable list."""
    if not isinstance(p, Poly) or not isinstance(q, Poly):
        raise UsageError("poly_mul expects two Poly instances")
    p._check(q)
    out = {}
    for e1, c1 in p.terms.items():
        for e2, c2 in q.terms.items():
            e = tuple(a + b for a, b in zip(e1, e2))
            out[e] = out.get(e, 0) + c1 * c2
    return Poly(p.variables, out)


def poly_eval(p, point):
    """Evaluate at a point given as a sequence or as {variable: value}."""
    if isinstance(point, dict):
        point = [point.get(v, 0) for v in p.variables]
    point = [rat(x) for x in point]
    if len(point) != len(p.variables):
        raise UsageError(f"point has {len(point)} coordinates, polynomial has {len(p.variables)} variables")
    total = Fraction(0)
    for exps, c in p.terms.items():
        t = c
        for x, e in zip(point, exps):
            if e:
                t *= x ** e
        total += t
    return total


def _mono_str(exps, variables):
    parts = []
    for v, e in zip(variables, exps):
        if e == 1:
            parts.append(v)
        elif e > 1:
            parts.append(f"{v}^{e}")
    return "*".join(parts)


def poly_to_str(p):
    if not p.terms:
        return "0"
    out = []
    for exps, c in p.sorted_terms():
        mono = _mono_str(exps, p.variables)
        sign = "-" if c < 0 else "+"
        a = abs(c)
        if not mono:
            body = rat_to_str(a)
        elif a == 1:
            body = mono
        else:
            body = f"{rat_to_str(a)}*{mono}"
        out.append((sign, body))
    first_sign, first = out[0]
    text = ("-" if first_sign == "-" else "") + first
    for sign, body in out[1:]:
        text += f" {sign} {body}"
    return text


_TERM_RE = re.compile(r"\s*([+-])?\s*([^+-]+)")


def parse_poly(text, variables):
    """Parse the output of ``poly_to_str`` (and similar hand-written input)."""
    variables = tuple(variables)
    text = text.strip()
    if not text:
        raise UsageError("empty polynomial text")
    terms = {}
    pos = 0
    while pos < len(text):
        m = _TERM_RE.match(text, pos)
        if not m:
            raise UsageError(f"cannot parse polynomial at position {pos}: {text!r}")
        sign = -1 if m.group(1) == "-" else 1
        coeff = Fraction(sign)
        exps = [0] * len(variables)
        for factor in m.group(2).split("*"):
            factor = factor.strip()
            if not factor:
                raise UsageError(f"empty factor in {text!r}")
            if factor[0].isdigit():
                coeff *= rat_from_str(factor)
                continue
            name, _, power = factor.partition("^")
            name = name.strip()
            if name not in variables:
                raise UsageError(f"unknown variable {name!r} in {text!r}")
            exps[variables.index(name)] += int(power) if power else 1
        key = tuple(exps)
        terms[key] = terms.get(key, 0) + coeff
        pos = m.end()
    return Poly(variables, terms)


# ---------------------------------------------------------------------------
# matrices
# ---------------------------------------------------------------------------

class RatMatrix:
    """Dense matrix of rationals (ints allowed as entries) on a numpy object array."""

    def __init__(self, entries, cols=None):
        arr = np.array(entries, dtype=object)
        if arr.ndim == 1 and arr.size == 0:
            arr = arr.reshape(0, cols or 0)
        if arr.ndim != 2:
            raise UsageError("matrix entries must form a 2-d grid")
        self.entries = arr

    @classmethod
    def zeros(cls, rows, cols):
        return cls(np.zeros((rows, cols), dtype=object))

    @property
    def shape(self):
        return self.entries.shape

    @property
    def rows(self):
        return self.entries.shape[0]

    @property
    def cols(self):
        return self.entries.shape[1]

    def __getitem__(self, ij):
        return self.entries[ij]

    def apply(self, vec):
        v = np.array([rat(x) for x in vec], dtype=object)
        if v.shape[0] != self.cols:
            raise UsageError("vector length does not match column count")
        if self.rows == 0:
            return np.zeros(0, dtype=object)
        return self.entries.dot(v)

    def integer_rows(self):
        """Each row scaled by the lcm of its denominators; returns an object array of ints."""
        out = np.empty(self.entries.shape, dtype=object)
        for i, row in enumerate(self.entries):
            den = reduce(lcm, (Fraction(x).denominator for x in row), 1)
            out[i] = [int(Fraction(x) * den) for x in row]
        return out

    def rank(self):
        _, pivots = bareiss_echelon(self.integer_rows())
        return len(pivots)

    def nullspace(self):
        return nullspace(self)

    def __repr__(self):
        return f"RatMatrix({self.rows}x{self.cols})"


def bareiss_echelon(a):
    """Fraction-free row echelon form of an integer matrix (object array).

    Returns ``(U, pivots)``; U's first ``len(pivots)`` rows are the echelon rows.
    """
    a = np.array(a, dtype=object, copy=True)
    nrows, ncols = a.shape
    r = 0
    prev = 1
    pivots = []
    for c in range(ncols):
        if r == nrows:
            break
        nz = [i for i in range(r, nrows) if a[i, c] != 0]
        if not nz:
            continue
        i0 = nz[0]
        if i0 != r:
            a[[r, i0]] = a[[i0, r]]
        piv = a[r, c]
        if r + 1 < nrows:
            below = a[r + 1:, c].copy()
            block = a[r + 1:, c + 1:]
            a[r + 1:, c + 1:] = (piv * block - np.outer(below, a[r, c + 1:])) // prev
            a[r + 1:, c] = 0
        prev = piv
        pivots.append(c)
        r += 1
    return a, pivots


def _back_substitute(u, pivots, ncols):
    free = [c for c in range(ncols) if c not in set(pivots)]
    basis = []
    for f in free:
        x = [Fraction(0)] * ncols
        x[f] = Fraction(1)
        for k in range(len(pivots) - 1, -1, -1):
            pc = pivots[k]
            s = Fraction(0)
            row = u[k]
            for j in range(pc + 1, ncols):
                if x[j] and row[j]:
                    s += row[j] * x[j]
            x[pc] = -s / row[pc]
        basis.append(normalize_first(x))
    return basis


def normalize_first(vec):
    """Scale so the first nonzero entry is 1."""
    for v in vec:
        if v:
            return [Fraction(x) / v for x in vec]
    return [Fraction(x) for x in vec]


def exact_nullspace(m):
    """Nullspace by fraction-free elimination over all rows (no modular pass)."""
    m = m if isinstance(m, RatMatrix) else RatMatrix(m)
    if m.rows == 0:
        return [[Fraction(int(i == j)) for i in range(m.cols)] for j in range(m.cols)]
    u, pivots = bareiss_echelon(m.integer_rows())
    return _back_substitute(u, pivots, m.cols)


# ---------------------------------------------------------------------------
# primes and modular rank
# ---------------------------------------------------------------------------

_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def is_prime(n):
    """Deterministic Miller-Rabin, exact for n < 3.3e24."""
    if n < 2:
        return False
    for p in _MR_BASES:
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def random_prime(bits, rng=None):
    rng = rng or random.Random()
    while True:
        n = rng.getrandbits(bits) | (1 << (bits - 1)) | 1
        while n < (1 << bits):
            if is_prime(n):
                return n
            n += 2


def primes_below(limit, count):
    """The ``count`` largest primes below ``limit``, descending."""
    out = []
    n = limit - 1 if limit % 2 == 0 else limit - 2
    while len(out) < count:
        if is_prime(n):
            out.append(n)
        n -= 2
    return out


def matrix_mod(m, p):
    """Entries of a RatMatrix reduced mod p as Python ints (object array)."""
    out = np.empty(m.shape, dtype=object)
    for idx, x in np.ndenumerate(m.entries):
        x = Fraction(x)
        if x.denominator % p == 0:
            raise RetryableError(f"prime {p} divides the denominator of entry {idx}")
        out[idx] = x.numerator * pow(x.denominator, -1, p) % p
    return out


def _echelon_mod_python(a, p):
    """Streaming reduced echelon form mod p on Python ints; any prime size."""
    nrows, ncols = a.shape
    basis = []
    pivots = []
    chosen = []
    for i in range(nrows):
        if len(pivots) == ncols:
            break
        row = [int(x) % p for x in a[i]]
        for b, pc in zip(basis, pivots):
            c = row[pc]
            if c:
                row = [(x - c * y) % p for x, y in zip(row, b)]
        piv = next((j for j, x in enumerate(row) if x), None)
        if piv is None:
            continue
        inv = pow(row[piv], -1, p)
        row = [x * inv % p for x in row]
        for k, b in enumerate(basis):
            c = b[piv]
            if c:
                basis[k] = [(x - c * y) % p for x, y in zip(b, row)]
        basis.append(row)
        pivots.append(piv)
        chosen.append(i)
    return len(pivots), chosen, pivots


def rank_mod_prime(m, p):
    """Rank of ``m`` over GF(p); never exceeds the rank over the rationals."""
    m = m if isinstance(m, RatMatrix) else RatMatrix(m)
    if not is_prime(p):
        raise UsageError(f"{p} is not prime")
    a = matrix_mod(m, p)
    if m.rows == 0 or m.cols == 0:
        return 0
    if p < _kernels.MODULUS_LIMIT:
        rank, _, _ = _kernels.echelon_mod(a.astype(np.int64), p)
        return rank
    return _echelon_mod_python(a, p)[0]


# fixed seed: nullspace() output must not depend on the run
_PREPASS_SEED = 20071205


def nullspace(m, prime=None):
    """Basis of the right nullspace of ``m``.

    A rank pass modulo one 62-bit prime runs first: full column rank there
    proves the nullspace is trivial.  Otherwise the exact solve uses only the
    rows that were independent mod p, and every basis vector is checked
    against all rows; a failed check falls back to full elimination.
    """
    m = m if isinstance(m, RatMatrix) else RatMatrix(m)
    if m.cols == 0:
        return []
    if m.rows == 0:
        return exact_nullspace(m)
    rng = random.Random(_PREPASS_SEED)
    for _ in range(5):
        p = prime or random_prime(62, rng)
        try:
            a = matrix_mod(m, p)
            break
        except RetryableError:
            if prime:
                raise
    else:  # pragma: no cover - astronomically unlikely
        return exact_nullspace(m)
    rank, chosen, _ = _echelon_mod_python(a, p)
    if rank == m.cols:
        return []
    sub = RatMatrix(m.entries[sorted(chosen)]) if chosen else RatMatrix.zeros(0, m.cols)
    basis = exact_nullspace(sub)
    if all(not any(m.apply(v)) for v in basis):
        return basis
    return exact_nullspace(m)


def exact_rank(m):
    m = m if isinstance(m, RatMatrix) else RatMatrix(m)
    return m.rank()


def integer_content_vector(vec):
    """Clear denominators and divide out the gcd, keeping the sign."""
    vec = [Fraction(x) for x in vec]
    den = reduce(lcm, (x.denominator for x in vec), 1)
    ints = [int(x * den) for x in vec]
    g = reduce(gcd, ints, 0)
    if g == 0:
        return ints
    return [x // g for x in ints]
