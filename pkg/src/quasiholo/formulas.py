"""Closed forms for return counts and the ballot (standard Young tableaux) formula.

The closed forms live in ``data/catalog.json``; this module only evaluates
and compares them.
"""

import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from math import comb, factorial, prod

from .exactmath import UsageError, rat_from_str
from .walks import StepSet, enumerate_walks

ZERO = "zero"
HYPERGEOMETRIC = "hypergeometric"
BALLOT = "ballot"


class IntegrityError(ArithmeticError):
    """A closed form produced a non-integer (transcription bug)."""


def pochhammer(a, n):
    """Rising factorial (a)_n = a (a+1) ... (a+n-1); (a)_0 = 1."""
    if n < 0:
        raise UsageError("pochhammer index must be nonnegative")
    a = Fraction(a)
    out = Fraction(1)
    for i in range(n):
        out *= a + i
    return out


def _poch_items(items):
    out = []
    for it in items:
        if isinstance(it, (list, tuple)):
            out.append((rat_from_str(str(it[0])), int(it[1])))
        else:
            out.append((rat_from_str(str(it)), 0))
    return tuple(out)


@dataclass(frozen=True)
class ClosedForm:
    key: str
    kind: str
    steps: StepSet = None
    region: str = "quadrant"
    period: int = 1
    shift: int = 0
    prefactor: Fraction = Fraction(1)
    base: Fraction = Fraction(1)
    num: tuple = ()
    den: tuple = ()
    binomials: tuple = ()
    linear_den: tuple = ()
    raw: dict = field(default=None, compare=False, repr=False)

    @classmethod
    def from_json(cls, key, obj):
        steps = StepSet.parse(obj["steps"]) if "steps" in obj else None
        period = int(obj.get("period", 1))
        if period < 1:
            raise UsageError(f"entry {key}: period must be >= 1")
        return cls(
            key=str(key),
            kind=obj["kind"],
            steps=steps,
            region=obj.get("region", "quadrant"),
            period=period,
            shift=int(obj.get("shift", 0)),
            prefactor=rat_from_str(obj.get("prefactor", "1")),
            base=rat_from_str(obj.get("base", "1")),
            num=_poch_items(obj.get("num", [])),
            den=_poch_items(obj.get("den", [])),
            binomials=tuple(tuple(b) for b in obj.get("binomials", [])),
            linear_den=tuple(tuple(b) for b in obj.get("linear_den", [])),
            raw=obj,
        )


@lru_cache(maxsize=None)
def _load_default():
    text = resources.files("quasiholo").joinpath("data/catalog.json").read_text(encoding="utf-8")
    return json.loads(text)


def load_catalog(path=None):
    """Catalog entries keyed "1".."11", "kreweras", "gessel", "ballot"."""
    if path is None:
        data = _load_default()
    else:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    return {k: ClosedForm.from_json(k, v) for k, v in data["entries"].items()}


TABLE_ROWS = tuple(str(i) for i in range(1, 12))


def get_entry(key, catalog=None):
    catalog = catalog or load_catalog()
    key = str(key)
    if key not in catalog:
        raise UsageError(f"no catalog entry {key!r}; known: {', '.join(catalog)}")
    return catalog[key]


def eval_closed_form(cf, n):
    """Value of the closed form at index n, i.e. F(period * n; origin)."""
    if cf.kind == BALLOT:
        raise UsageError("the ballot entry is evaluated with ballot_count(shape)")
    if n < 0:
        raise UsageError("n must be nonnegative")
    if cf.kind == ZERO:
        return 1 if n == 0 else 0
    if cf.kind != HYPERGEOMETRIC:
        raise UsageError(f"unknown closed-form kind {cf.kind!r}")
    if n < cf.shift:
        # formula starts at n = shift; below that only the empty walk remains
        if n == 0:
            return 1
        raise UsageError(f"entry {cf.key} undefined at n={n}")
    k = n - cf.shift
    val = cf.prefactor * cf.base ** k
    for a, j in cf.num:
        val *= pochhammer(a, k + j)
    for a, j in cf.den:
        val /= pochhammer(a, k + j)
    for top, bottom in cf.binomials:
        val *= comb(top * k, bottom * k)
    for c, d in cf.linear_den:
        val /= c * k + d
    if val.denominator != 1:
        raise IntegrityError(f"entry {cf.key} at n={n} gives non-integer {val}")
    return int(val)


def return_counts(cf, m_max, backend=None):
    """F(m; origin) for m = 0..m_max by enumeration."""
    t = enumerate_walks(cf.steps, cf.region, m_max, backend=backend)
    return t.return_sequence()


def verify_entry(key, table, n_max=None, catalog=None):
    """Compare a catalog entry with enumerated return counts.

    ``table`` is a WalkTable or a plain return sequence.  For zero rows every
    length 1..m_max must give 0; otherwise F(period*n) must equal the formula
    for n = 0..n_max and every other length must give 0.
    """
    cf = key if isinstance(key, ClosedForm) else get_entry(key, catalog)
    seq = table.return_sequence() if hasattr(table, "return_sequence") else list(table)
    m_max = len(seq) - 1
    if n_max is None:
        n_max = m_max // cf.period
    if cf.period * n_max > m_max:
        raise UsageError(f"entry {cf.key} needs walk length {cf.period * n_max}, table has {m_max}")
    mismatches = []
    compared = []
    if cf.kind == ZERO:
        for m in range(1, m_max + 1):
            compared.append((m, 0, seq[m]))
            if seq[m] != 0:
                mismatches.append({"m": m, "expected": 0, "enumerated": seq[m]})
        if seq[0] != 1:
            mismatches.append({"m": 0, "expected": 1, "enumerated": seq[0]})
    else:
        for n in range(n_max + 1):
            m = cf.period * n
            expected = eval_closed_form(cf, n)
            compared.append((m, expected, seq[m]))
            if expected != seq[m]:
                mismatches.append({"m": m, "n": n, "expected": expected, "enumerated": seq[m]})
        for m in range(min(m_max, cf.period * n_max) + 1):
            if m % cf.period and seq[m] != 0:
                mismatches.append({"m": m, "expected": 0, "enumerated": seq[m]})
    return {
        "key": cf.key,
        "steps": str(cf.steps),
        "period": cf.period,
        "n_max": n_max,
        "m_max": m_max,
        "compared": len(compared),
        "mismatches": mismatches,
        "ok": not mismatches,
    }


def ballot_count(shape):
    """Number of standard Young tableaux of the given shape (hook-free product form)."""
    shape = [int(x) for x in shape]
    if any(x < 0 for x in shape) or any(a < b for a, b in zip(shape, shape[1:])):
        raise UsageError(f"shape {shape} must be weakly decreasing and nonnegative")
    d = len(shape)
    vandermonde = prod(shape[i] - shape[j] + j - i for i in range(d) for j in range(i + 1, d))
    num = vandermonde * factorial(sum(shape))
    den = prod(factorial(shape[i] + d - 1 - i) for i in range(d))
    if num % den:
        raise IntegrityError(f"ballot formula non-integer at {shape}")
    return num // den
