"""Shift operators with polynomial coefficients, commutator chains, certification.

An operator is a finite sum ``p(v) * S^e`` with every coefficient to the left
of its shift monomial.  ``S^e`` shifts index ``v_i`` by ``e_i``; generator
names are the upper-cased index names (m -> M, n1 -> N1, a -> A).
"""

import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from math import gcd

import numpy as np

from .exactmath import Poly, UsageError, grlex_key, lcm, parse_poly, poly_to_str
from .walks import as_region, as_steps, enumerate_walks, index_names


def generator_name(var):
    return var.upper()


class ShiftOperator:
    __slots__ = ("index_vars", "terms")

    def __init__(self, index_vars, terms=None):
        self.index_vars = tuple(index_vars)
        clean = {}
        for e, p in (terms or {}).items():
            e = tuple(int(x) for x in e)
            if len(e) != len(self.index_vars):
                raise UsageError(f"shift {e} does not match index variables {self.index_vars}")
            if not isinstance(p, Poly):
                p = Poly.const(p, self.index_vars)
            elif p.variables != self.index_vars:
                p = p.with_variables(self.index_vars)
            if e in clean:
                p = clean[e] + p
            if p.is_zero():
                clean.pop(e, None)
            else:
                clean[e] = p
        self.terms = clean

    # -- constructors -----------------------------------------------------

    @classmethod
    def zero(cls, index_vars):
        return cls(index_vars)

    @classmethod
    def one(cls, index_vars):
        return cls.const(1, index_vars)

    @classmethod
    def const(cls, c, index_vars):
        index_vars = tuple(index_vars)
        return cls(index_vars, {(0,) * len(index_vars): c})

    @classmethod
    def shift(cls, exps, index_vars, coeff=1):
        return cls(index_vars, {tuple(exps): coeff})

    @classmethod
    def coefficient(cls, poly):
        return cls(poly.variables, {(0,) * len(poly.variables): poly})

    @classmethod
    def var(cls, name, index_vars):
        return cls.coefficient(Poly.var(name, index_vars))

    @property
    def generators(self):
        return tuple(generator_name(v) for v in self.index_vars)

    # -- arithmetic -------------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, ShiftOperator):
            if other.index_vars != self.index_vars:
                raise UsageError(f"index variables differ: {self.index_vars} vs {other.index_vars}")
            return other
        if isinstance(other, Poly):
            return ShiftOperator.coefficient(other.with_variables(self.index_vars))
        return ShiftOperator.const(other, self.index_vars)

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self.terms)
        for e, p in other.terms.items():
            out[e] = out[e] + p if e in out else p
        return ShiftOperator(self.index_vars, out)

    __radd__ = __add__

    def __neg__(self):
        return ShiftOperator(self.index_vars, {e: -p for e, p in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        return op_multiply(self, self._coerce(other))

    def __rmul__(self, other):
        return op_multiply(self._coerce(other), self)

    def __pow__(self, k):
        out = ShiftOperator.one(self.index_vars)
        for _ in range(k):
            out = out * self
        return out

    def __eq__(self, other):
        if not isinstance(other, ShiftOperator):
            try:
                other = self._coerce(other)
            except UsageError:
                return False
        return self.index_vars == other.index_vars and self.terms == other.terms

    def __hash__(self):
        return hash((self.index_vars, frozenset(self.terms.items())))

    def is_zero(self):
        return not self.terms

    def __bool__(self):
        return bool(self.terms)

    def coefficient_degree(self):
        """Largest total degree among coefficients; -1 for the zero operator."""
        return max((p.degree() for p in self.terms.values()), default=-1)

    def has_constant_coefficients(self):
        return all(p.is_constant() for p in self.terms.values())

    def sorted_terms(self):
        return sorted(self.terms.items(), key=lambda kv: grlex_key(kv[0]), reverse=True)

    def shift_support(self):
        return sorted(self.terms, key=grlex_key)

    # -- transformations ----------------------------------------------------

    def substitute(self, values):
        """Substitute numbers for index variables in every coefficient."""
        return ShiftOperator(self.index_vars,
                             {e: p.substitute(values) for e, p in self.terms.items()})

    def restrict(self, index_vars):
        """Drop index variables that neither coefficients nor shifts use."""
        index_vars = tuple(index_vars)
        keep = [self.index_vars.index(v) for v in index_vars]
        out = {}
        for e, p in self.terms.items():
            if any(x for i, x in enumerate(e) if i not in keep):
                raise UsageError(f"shift {e} uses a dropped generator")
            out[tuple(e[i] for i in keep)] = p.with_variables(index_vars)
        return ShiftOperator(index_vars, out)

    def embed(self, index_vars):
        """Re-express over more index variables, matching positionally by name."""
        index_vars = tuple(index_vars)
        out = {}
        for e, p in self.terms.items():
            new = [0] * len(index_vars)
            for v, x in zip(self.index_vars, e):
                new[index_vars.index(v)] = x
            out[tuple(new)] = p.with_variables(index_vars)
        return ShiftOperator(index_vars, out)

    def rename(self, index_vars):
        """Same operator with the index variables renamed positionally."""
        index_vars = tuple(index_vars)
        if len(index_vars) != len(self.index_vars):
            raise UsageError("rename needs the same number of variables")
        return ShiftOperator(index_vars, {e: Poly(index_vars, p.terms) for e, p in self.terms.items()})

    def normalized(self):
        """Integer coefficients, content 1, positive leading coefficient."""
        if not self.terms:
            return self
        den = reduce(lcm, (p.denominator_lcm() for p in self.terms.values()), 1)
        g = reduce(gcd, (int(c * den) for p in self.terms.values() for c in p.terms.values()), 0)
        scale = Fraction(den, g)
        lead = self.sorted_terms()[0][1].leading_coefficient()
        if lead < 0:
            scale = -scale
        return ShiftOperator(self.index_vars, {e: p * scale for e, p in self.terms.items()})

    # -- text / json ------------------------------------------------------

    def __str__(self):
        return op_to_text(self)

    def __repr__(self):
        return f"ShiftOperator({self.index_vars}, {op_to_text(self)!r})"

    def to_json(self):
        return {
            "index_vars": list(self.index_vars),
            "terms": [{"shift": list(e), "coeff": p.to_json()["terms"]} for e, p in self.sorted_terms()],
        }

    @classmethod
    def from_json(cls, obj):
        index_vars = tuple(obj["index_vars"])
        terms = {}
        for t in obj["terms"]:
            terms[tuple(t["shift"])] = Poly.from_json({"variables": index_vars, "terms": t["coeff"]})
        return cls(index_vars, terms)


def op_multiply(x, y):
    """Product in normal form: ``S^e p(v) = p(v + e) S^e``."""
    if x.index_vars != y.index_vars:
        raise UsageError(f"index variables differ: {x.index_vars} vs {y.index_vars}")
    out = {}
    for e, p in x.terms.items():
        for f, q in y.terms.items():
            key = tuple(a + b for a, b in zip(e, f))
            term = p * q.shift(e)
            out[key] = out[key] + term if key in out else term
    return ShiftOperator(x.index_vars, out)


def commutator(x, y):
    return op_multiply(x, y) - op_multiply(y, x)


def is_good(x):
    """True iff no term has a negative exponent in a spatial shift (time is exempt)."""
    return all(all(v >= 0 for v in e[1:]) for e in x.terms)


def transfer_operator(steps):
    """Q = 1 - M^-1 * sum_s N^-s, annihilating F on the region for m >= 1."""
    steps = as_steps(steps)
    names = index_names(steps.dim)
    q = ShiftOperator.one(names)
    for s in steps:
        q = q - ShiftOperator.shift((-1,) + tuple(-x for x in s), names)
    return q


def lift_period(op, period, time_var="m"):
    """Operator on a(n) = f(period*n) turned into an operator on f itself.

    Substitutes n = m/period and N -> M^period.  Annihilates f when f vanishes
    off the multiples of ``period``.
    """
    if len(op.index_vars) != 1:
        raise UsageError("lift_period needs a univariate operator")
    names = (time_var,)
    out = {}
    for (k,), p in op.terms.items():
        terms = {}
        for (d,), c in p.terms.items():
            terms[(d,)] = c / Fraction(period) ** d
        out[(k * period,)] = Poly(names, terms)
    return ShiftOperator(names, out).normalized()


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------

def op_to_text(op):
    if not op.terms:
        return "0"
    parts = []
    for e, p in op.sorted_terms():
        s = f"({poly_to_str(p)})"
        for g, x in zip(op.generators, e):
            if x == 1:
                s += f"*{g}"
            elif x:
                s += f"*{g}^{x}"
        parts.append(s)
    return " + ".join(parts)


_SHIFT_RE = re.compile(r"\*\s*([A-Za-z][A-Za-z0-9_]*)\s*(?:\^\s*(-?\d+))?")


def parse_operator(text, index_vars):
    """Inverse of ``op_to_text``."""
    index_vars = tuple(index_vars)
    gens = [generator_name(v) for v in index_vars]
    text = text.strip()
    if text == "0":
        return ShiftOperator.zero(index_vars)
    terms = {}
    pos = 0
    n = len(text)
    while pos < n:
        while pos < n and text[pos] in " +":
            pos += 1
        if pos >= n:
            break
        if text[pos] != "(":
            raise UsageError(f"expected '(' at position {pos} in operator text")
        depth, end = 0, pos
        while end < n:
            if text[end] == "(":
                depth += 1
            elif text[end] == ")":
                depth -= 1
                if depth == 0:
                    break
            end += 1
        if end >= n:
            raise UsageError(f"unbalanced parenthesis at position {pos}")
        poly = parse_poly(text[pos + 1:end], index_vars)
        pos = end + 1
        exps = [0] * len(index_vars)
        while True:
            m = _SHIFT_RE.match(text, pos)
            if not m:
                break
            g = m.group(1)
            if g not in gens:
                raise UsageError(f"unknown generator {g!r} at position {pos}")
            exps[gens.index(g)] += int(m.group(2)) if m.group(2) is not None else 1
            pos = m.end()
        key = tuple(exps)
        terms[key] = terms[key] + poly if key in terms else poly
    return ShiftOperator(index_vars, terms)


# ---------------------------------------------------------------------------
# applying operators to tables
# ---------------------------------------------------------------------------

@dataclass
class ResidualReport:
    checked: int
    nonzero: list
    skipped: int = 0

    @property
    def ok(self):
        return not self.nonzero

    @property
    def witness(self):
        return self.nonzero[0] if self.nonzero else None

    def to_json(self, limit=20):
        return {
            "checked": self.checked,
            "skipped": self.skipped,
            "nonzero_count": len(self.nonzero),
            "nonzero": [{"point": list(p), "value": str(v)} for p, v in self.nonzero[:limit]],
        }


def region_domain(table, m_min=0, m_max=None):
    """Every (m, n) with n in the table box and the region."""
    m_max = table.m_max if m_max is None else m_max
    axes = [np.arange(lo, hi + 1) for lo, hi in table.box]
    grid = np.meshgrid(*axes, indexing="ij")
    mask = table.region.mask(grid)
    cells = np.stack([g[mask] for g in grid], axis=1) if table.dim else np.zeros((1, 0))
    ms = np.arange(m_min, m_max + 1)
    pts = np.concatenate([np.repeat(ms, len(cells))[:, None], np.tile(cells, (len(ms), 1))], axis=1)
    return pts.astype(np.int64)


def origin_domain(table, m_min=0, m_max=None):
    m_max = table.m_max if m_max is None else m_max
    ms = np.arange(m_min, m_max + 1, dtype=np.int64)
    return np.concatenate([ms[:, None], np.zeros((len(ms), table.dim), dtype=np.int64)], axis=1)


def boundary_domain(table, m_min=0, m_max=None):
    """Cells one step outside the region (in the box grown by one), all times."""
    m_max = table.m_max if m_max is None else m_max
    axes = [np.arange(lo - 1, hi + 2) for lo, hi in table.box]
    grid = np.meshgrid(*axes, indexing="ij")
    inside = table.region.mask(grid)
    near = np.zeros_like(inside)
    for axis in range(table.dim):
        for d in (-1, 1):
            near |= np.roll(inside, d, axis=axis)
    mask = near & ~inside
    cells = np.stack([g[mask] for g in grid], axis=1)
    ms = np.arange(m_min, m_max + 1)
    if len(cells) == 0:
        return np.zeros((0, table.dim + 1), dtype=np.int64)
    pts = np.concatenate([np.repeat(ms, len(cells))[:, None], np.tile(cells, (len(ms), 1))], axis=1)
    return pts.astype(np.int64)


def apply(op, table, domain=None, negative_time_zero=True):
    """Residuals of ``op`` applied to the table's function at the domain points.

    ``domain`` is an array of points, ``"region"`` (default), ``"origin"`` or
    ``"boundary"``.  Points whose references leave the table in time are
    skipped (and, with ``negative_time_zero=False``, so are references
    before time 0).
    """
    if len(op.index_vars) != len(table.index_vars):
        raise UsageError(f"operator has {len(op.index_vars)} indices, table has {len(table.index_vars)}")
    if domain is None or isinstance(domain, str):
        kind = domain or "region"
        builder = {"region": region_domain, "origin": origin_domain, "boundary": boundary_domain}
        if kind not in builder:
            raise UsageError(f"unknown domain {kind!r}")
        pts = builder[kind](table)
    else:
        pts = np.asarray(domain, dtype=np.int64).reshape(-1, len(op.index_vars))
    if not op.terms:
        return ResidualReport(len(pts), [])
    total = len(pts)
    shifts = np.array(list(op.terms), dtype=np.int64)
    tmax = pts[:, 0] + shifts[:, 0].max()
    keep = tmax <= table.m_max
    if not negative_time_zero:
        keep &= pts[:, 0] + shifts[:, 0].min() >= 0
    pts = pts[keep]
    acc = np.zeros(len(pts), dtype=object)
    cols = [pts[:, i] for i in range(pts.shape[1])]
    for e, p in op.terms.items():
        vals = table.lookup(pts + np.asarray(e, dtype=np.int64))
        acc = acc + p.eval_arrays(cols) * vals
    bad = [i for i, v in enumerate(acc) if v != 0]
    nonzero = [(tuple(int(x) for x in pts[i]), acc[i]) for i in bad]
    return ResidualReport(len(pts), nonzero, skipped=total - len(pts))


# ---------------------------------------------------------------------------
# reduction chains and certificates
# ---------------------------------------------------------------------------

class ChainError(RuntimeError):
    """Commutator chain failed to terminate within the degree bound."""


@dataclass
class ReductionChain:
    Q: ShiftOperator
    pairs: list  # (P_i, R_i)
    final: ShiftOperator
    goodness: list = field(default_factory=list)

    @property
    def depth(self):
        """d such that P_{d+1} = 0."""
        return len(self.pairs) - 1

    @property
    def first_bad(self):
        for i, g in enumerate(self.goodness):
            if not g:
                return i
        return None

    def identities_hold(self):
        ops = [p for p, _ in self.pairs] + [self.final]
        for i, (p, r) in enumerate(self.pairs):
            if op_multiply(self.Q, p) != op_multiply(r, self.Q) + ops[i + 1]:
                return False
        return self.final.is_zero()


def reduction_chain(Q, P, require_good=False):
    """P_0 = P, R_i = P_i, P_{i+1} = [Q, P_i] until zero."""
    if not Q.has_constant_coefficients():
        raise UsageError("Q must have constant coefficients")
    limit = max(P.coefficient_degree(), 0) + 1
    pairs = []
    current = P
    while True:
        if len(pairs) > limit:
            raise ChainError(f"chain did not terminate within {limit} steps")
        nxt = commutator(Q, current)
        pairs.append((current, current))
        if nxt.is_zero():
            break
        if nxt.coefficient_degree() >= current.coefficient_degree():
            raise ChainError("commutator with Q did not lower the coefficient degree")
        current = nxt
    goodness = [is_good(r) for _, r in pairs]
    return ReductionChain(Q, pairs, ShiftOperator.zero(P.index_vars), goodness)


@dataclass
class Certificate:
    chain: ReductionChain
    identities: bool
    residuals: list  # ResidualReport per P_i on the domain
    required: list  # which residual reports must vanish
    boundary: list  # informational: P_i F just outside the region
    initial_ok: bool
    transfer: ResidualReport  # Q F on region, m >= 1
    delta: object  # (Q F)(0; origin)
    domain: str
    m_max: int

    @property
    def valid(self):
        return (self.identities and self.initial_ok and self.transfer.ok
                and all(r.ok for r, req in zip(self.residuals, self.required) if req))

    @property
    def status(self):
        return "VALID" if self.valid else "INVALID"

    @property
    def witness(self):
        for r, req in zip(self.residuals, self.required):
            if req and not r.ok:
                return r.witness
        if not self.transfer.ok:
            return self.transfer.witness
        return None

    def to_json(self):
        return {
            "status": self.status,
            "domain": self.domain,
            "m_max": self.m_max,
            "Q": op_to_text(self.chain.Q),
            "chain": [
                {"P": op_to_text(p), "R_good": g, "required": req, "residual": res.to_json(),
                 "boundary": b.to_json()}
                for (p, _), g, req, res, b in zip(self.chain.pairs, self.chain.goodness,
                                                  self.required, self.residuals, self.boundary)
            ],
            "depth": self.chain.depth,
            "identities_hold": self.identities,
            "initial_condition_ok": self.initial_ok,
            "transfer_residual": self.transfer.to_json(),
            "delta_at_origin": str(self.delta),
            "witness": None if self.witness is None else
            {"point": list(self.witness[0]), "value": str(self.witness[1])},
        }


def certify(P, steps, region, m_max, domain="region", table=None):
    """Chain, exact identities, and empirical residuals of every P_i on the table.

    ``domain="region"`` requires every P_i to vanish on the region;
    ``domain="origin"`` is for operators acting on the return sequence only,
    where just P_0 must vanish along the origin fiber.
    """
    steps = as_steps(steps)
    region = as_region(region, steps.dim)
    if table is None:
        table = enumerate_walks(steps, region, m_max, retain=True)
    names = table.index_vars
    if P.index_vars != names:
        if len(P.index_vars) == 1:
            P = P.rename(names[:1]).embed(names)
        elif len(P.index_vars) == len(names):
            P = P.rename(names)
        else:
            raise UsageError(f"operator indices {P.index_vars} do not fit table indices {names}")
    Q = transfer_operator(steps)
    chain = reduction_chain(Q, P)
    identities = chain.identities_hold()
    residuals, required, boundary = [], [], []
    for i, (p, _) in enumerate(chain.pairs):
        residuals.append(apply(p, table, domain, negative_time_zero=False))
        required.append(domain == "region" or i == 0)
        boundary.append(apply(p, table, "boundary", negative_time_zero=False))
    s0 = table.slice(0)
    origin_idx = tuple(-lo for lo, _ in table.box)
    initial_ok = int(s0[origin_idx]) == 1 and sum(int(v) for v in s0.ravel()) == 1
    transfer = apply(Q, table, region_domain(table, m_min=1), negative_time_zero=False)
    delta = apply(Q, table, origin_domain(table, 0, 0), negative_time_zero=True)
    delta_val = delta.witness[1] if delta.nonzero else 0
    return Certificate(chain, identities, residuals, required, boundary, initial_ok, transfer,
                       delta_val, domain, m_max)
