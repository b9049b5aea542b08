"""Lattice walks confined to regions cut out by integer linear inequalities.

``enumerate_walks`` fills F(m; n) by forward dynamic programming over time
slices.  All counts are exact Python integers.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .exactmath import UsageError, primes_below

KREWERAS = "-1,0;0,-1;1,1"
GESSEL = "-1,0;1,0;-1,-1;1,1"
# step orders used by refined counting
KREWERAS_REFINED = "-1,-1;1,0;0,1"
GESSEL_REFINED = "1,1;-1,-1;1,0;-1,0"
KREWERAS_3D = "-1,-1,-1;1,0,0;0,1,0;0,0,1"

DEFAULT_MEMORY_BUDGET = int(os.environ.get("QUASIHOLO_MEMORY_BUDGET", 4 * 2**30))
INT64_MAX = 2**63 - 1


class ResourceError(MemoryError):
    """Requested table does not fit the memory budget."""


class ParseError(UsageError):
    def __init__(self, message, text, position):
        super().__init__(f"{message} at position {position} in {text!r}")
        self.text = text
        self.position = position


# ---------------------------------------------------------------------------
# step sets and regions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepSet:
    steps: tuple

    def __post_init__(self):
        steps = tuple(tuple(int(x) for x in s) for s in self.steps)
        if not steps:
            raise UsageError("step set must be nonempty")
        d = len(steps[0])
        if d == 0 or any(len(s) != d for s in steps):
            raise UsageError("all steps must have the same positive dimension")
        if len(set(steps)) != len(steps):
            raise UsageError("steps must be pairwise distinct")
        object.__setattr__(self, "steps", steps)

    @property
    def dim(self):
        return len(self.steps[0])

    def __len__(self):
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    def __str__(self):
        return ";".join(",".join(str(x) for x in s) for s in self.steps)

    @classmethod
    def parse(cls, text):
        steps = []
        pos = 0
        for chunk in text.split(";"):
            try:
                steps.append(tuple(int(x) for x in chunk.split(",")))
            except ValueError:
                raise ParseError("bad step tuple", text, pos) from None
            pos += len(chunk) + 1
        return cls(tuple(steps))


def as_steps(steps):
    if isinstance(steps, StepSet):
        return steps
    if isinstance(steps, str):
        return StepSet.parse(steps)
    return StepSet(tuple(steps))


@dataclass(frozen=True)
class Region:
    """Conjunction of constraints ``c . n >= bound``."""

    dim: int
    constraints: tuple = ()

    def __post_init__(self):
        cons = tuple((tuple(int(x) for x in c), int(b)) for c, b in self.constraints)
        for c, b in cons:
            if len(c) != self.dim:
                raise UsageError(f"constraint {c} has length {len(c)}, expected {self.dim}")
            if b > 0:
                raise UsageError(f"origin violates constraint {c} >= {b}")
        object.__setattr__(self, "constraints", cons)

    def contains(self, point):
        return all(sum(ci * x for ci, x in zip(c, point)) >= b for c, b in self.constraints)

    def mask(self, coords):
        """Boolean mask over broadcast coordinate arrays (one per dimension)."""
        shape = np.broadcast(*coords).shape
        ok = np.ones(shape, dtype=bool)
        for c, b in self.constraints:
            lhs = np.zeros(shape, dtype=np.int64)
            for ci, x in zip(c, coords):
                if ci:
                    lhs = lhs + ci * np.asarray(x, dtype=np.int64)
            ok &= lhs >= b
        return ok

    def coordinate_bounds(self):
        """Per-coordinate (lower, upper) implied by single-coordinate constraints; None if unbounded."""
        lo = [None] * self.dim
        hi = [None] * self.dim
        for c, b in self.constraints:
            nz = [i for i, x in enumerate(c) if x]
            if len(nz) != 1:
                continue
            i = nz[0]
            k = c[i]
            if k > 0:
                v = -((-b) // k)  # ceil(b / k)
                lo[i] = v if lo[i] is None else max(lo[i], v)
            else:
                v = (-b) // (-k)  # n_i <= floor(-b / -k)
                hi[i] = v if hi[i] is None else min(hi[i], v)
        return lo, hi

    def with_constraint(self, coeffs, bound):
        return Region(self.dim, self.constraints + ((tuple(coeffs), bound),))

    def __str__(self):
        if not self.constraints:
            return "none"
        return ";".join(",".join(str(x) for x in c) + f">={b}" for c, b in self.constraints)

    @classmethod
    def unrestricted(cls, dim):
        return cls(dim, ())

    @classmethod
    def orthant(cls, dim):
        return cls(dim, tuple((tuple(int(i == j) for j in range(dim)), 0) for i in range(dim)))

    @classmethod
    def ballot(cls, dim):
        cons = []
        for i in range(dim - 1):
            c = [0] * dim
            c[i], c[i + 1] = 1, -1
            cons.append((tuple(c), 0))
        cons.append((tuple(int(j == dim - 1) for j in range(dim)), 0))
        return cls(dim, tuple(cons))

    @classmethod
    def parse(cls, text, dim=None):
        text = text.strip()
        presets = {"quadrant": 2, "halfline": 1, "octant3d": 3}
        if text in presets:
            d = presets[text]
            if dim is not None and dim != d:
                raise UsageError(f"region preset {text!r} is {d}-dimensional, steps are {dim}-dimensional")
            return cls.orthant(d)
        if text.startswith("ballot:"):
            try:
                d = int(text.split(":", 1)[1])
            except ValueError:
                raise ParseError("bad ballot dimension", text, 7) from None
            if dim is not None and dim != d:
                raise UsageError(f"ballot:{d} does not match step dimension {dim}")
            return cls.ballot(d)
        if text in ("", "none", "free"):
            if dim is None:
                raise UsageError("unrestricted region needs a dimension")
            return cls.unrestricted(dim)
        cons = []
        pos = 0
        for atom in text.split(";"):
            if ">=" not in atom:
                raise ParseError("expected 'c1,...,cd>=b'", text, pos)
            lhs, rhs = atom.split(">=")
            try:
                c = tuple(int(x) for x in lhs.split(","))
                b = int(rhs)
            except ValueError:
                raise ParseError("bad integer", text, pos) from None
            cons.append((c, b))
            pos += len(atom) + 1
        d = len(cons[0][0])
        if dim is not None and dim != d:
            raise UsageError(f"region is {d}-dimensional, steps are {dim}-dimensional")
        return cls(d, tuple(cons))


def as_region(region, dim):
    if isinstance(region, Region):
        if region.dim != dim:
            raise UsageError(f"region dimension {region.dim} does not match steps dimension {dim}")
        return region
    if region is None:
        return Region.unrestricted(dim)
    return Region.parse(region, dim)


# ---------------------------------------------------------------------------
# tables
# ---------------------------------------------------------------------------

def index_names(dim, time="m"):
    if dim == 1:
        return (time, "n")
    return (time,) + tuple(f"n{i + 1}" for i in range(dim))


@dataclass
class WalkTable:
    """Exact counts F(m; n) on a box that holds every reachable in-region point.

    ``slices[m]`` is an object array over the box (axis i covers
    ``box[i][0] .. box[i][1]``).  When ``retained`` is false only the last
    slice is kept, but ``returns`` always has every F(m; origin).
    """

    steps: StepSet
    region: Region
    m_max: int
    box: tuple
    returns: list
    slices: list
    retained: bool = True
    _stack: object = field(default=None, repr=False, compare=False)

    @property
    def dim(self):
        return self.steps.dim

    @property
    def index_vars(self):
        return index_names(self.dim)

    @property
    def shape(self):
        return tuple(hi - lo + 1 for lo, hi in self.box)

    def slice(self, m):
        if not 0 <= m <= self.m_max:
            raise UsageError(f"time {m} outside 0..{self.m_max}")
        if self.retained:
            return self.slices[m]
        if m == self.m_max:
            return self.slices[-1]
        raise UsageError(f"slice {m} was not retained; enumerate with retain=True")

    def count(self, m, *n):
        if len(n) == 1 and isinstance(n[0], (tuple, list)):
            n = tuple(n[0])
        if len(n) != self.dim:
            raise UsageError("point dimension mismatch")
        if m < 0:
            return 0
        if any(not lo <= x <= hi for x, (lo, hi) in zip(n, self.box)):
            self._check_time(m)
            return 0
        idx = tuple(x - lo for x, (lo, _) in zip(n, self.box))
        return int(self.slice(m)[idx])

    def _check_time(self, m):
        if m > self.m_max:
            raise UsageError(f"time {m} beyond the table (m_max={self.m_max})")

    def return_sequence(self):
        return list(self.returns)

    def stack(self):
        if self._stack is None:
            if not self.retained:
                raise UsageError("table does not retain all slices")
            self._stack = np.stack(self.slices)
        return self._stack

    def lookup(self, points, negative_time_zero=True):
        """Values at integer points ``(m, n_1, ..., n_d)`` (rows of ``points``).

        Zero outside the region and the box (the box covers all reachable
        points) and, when ``negative_time_zero``, for m < 0.  Points with
        m > m_max cannot be resolved.
        """
        pts = np.asarray(points, dtype=np.int64).reshape(-1, self.dim + 1)
        m = pts[:, 0]
        if pts.shape[0] and m.max() > self.m_max:
            bad = pts[np.argmax(m)]
            raise UsageError(f"reference {tuple(int(x) for x in bad)} beyond m_max={self.m_max}")
        if not negative_time_zero and pts.shape[0] and m.min() < 0:
            bad = pts[np.argmin(m)]
            raise UsageError(f"reference {tuple(int(x) for x in bad)} before time 0")
        out = np.zeros(pts.shape[0], dtype=object)
        ok = m >= 0
        idx = [m]
        for i, (lo, hi) in enumerate(self.box):
            x = pts[:, i + 1]
            ok &= (x >= lo) & (x <= hi)
            idx.append(x - lo)
        if ok.any():
            st = self.stack()
            out[ok] = st[tuple(a[ok] for a in idx)]
        return out

    def to_json(self):
        return {
            "format": "quasiholo.walktable/1",
            "steps": str(self.steps),
            "region": str(self.region),
            "m_max": self.m_max,
            "box": [list(b) for b in self.box],
            "retained": self.retained,
            "returns": [str(v) for v in self.returns],
            "slices": [
                {"m": m, "counts": _to_str_lists(s)}
                for m, s in zip(range(self.m_max + 1) if self.retained else [self.m_max], self.slices)
            ],
        }

    @classmethod
    def from_json(cls, obj):
        steps = StepSet.parse(obj["steps"])
        region = Region.parse(obj["region"], steps.dim)
        slices = [_from_str_lists(s["counts"]) for s in obj["slices"]]
        return cls(steps, region, int(obj["m_max"]), tuple(tuple(b) for b in obj["box"]),
                   [int(v) for v in obj["returns"]], slices, bool(obj["retained"]))


def _to_str_lists(arr):
    return np.vectorize(str, otypes=[object])(arr).tolist() if arr.size else arr.tolist()


def _from_str_lists(data):
    arr = np.array(data, dtype=object)
    return np.vectorize(int, otypes=[object])(arr) if arr.size else arr


def derive_box(steps, region, m_max):
    """Per-coordinate [lo, hi] holding every in-region point reachable in m_max steps."""
    rlo, rhi = region.coordinate_bounds()
    box = []
    for i in range(steps.dim):
        comps = [s[i] for s in steps]
        lo = m_max * min(0, min(comps))
        hi = m_max * max(0, max(comps))
        if rlo[i] is not None:
            lo = max(lo, rlo[i])
        if rhi[i] is not None:
            hi = min(hi, rhi[i])
        box.append((lo, max(lo, hi)))
    return tuple(box)


def _layout(steps, region, box):
    """Flat padded layout: sizes, active cell indices, step offsets, origin index."""
    pad = [max(abs(s[i]) for s in steps) for i in range(steps.dim)]
    inner = [hi - lo + 1 for lo, hi in box]
    padded = [n + 2 * p for n, p in zip(inner, pad)]
    strides = [int(np.prod(padded[i + 1:], dtype=np.int64)) for i in range(len(padded))]
    coords = np.meshgrid(*[np.arange(lo, hi + 1) for lo, hi in box], indexing="ij")
    mask = region.mask(coords)
    flat = np.zeros(mask.shape, dtype=np.int64)
    for c, (lo, _), p, st in zip(coords, box, pad, strides):
        flat += (c - lo + p) * st
    active = flat[mask].ravel()
    offsets = np.array([sum(si * st for si, st in zip(s, strides)) for s in steps], dtype=np.int64)
    origin = sum((0 - lo + p) * st for (lo, _), p, st in zip(box, pad, strides))
    interior = tuple(slice(p, p + n) for p, n in zip(pad, inner))
    return padded, active, offsets, int(origin), interior


def _crt(residues, primes):
    x = np.asarray(residues[0]).astype(object)
    modulus = primes[0]
    for r, p in zip(residues[1:], primes[1:]):
        inv = pow(modulus % p, -1, p)
        xm = (x % p).astype(np.int64)
        t = ((np.asarray(r, dtype=np.int64) - xm) % p) * inv % p
        x = x + t.astype(object) * modulus
        modulus *= p
    return x


def enumerate_walks(steps, region=None, m_max=0, retain=False, backend=None,
                    memory_budget=None):
    """Fill F(m; n) for m = 0..m_max.

    ``backend`` is ``"numba"`` (int64 kernel, multi-prime CRT once counts can
    exceed int64), ``"numpy"`` (object-array big integers) or None for the
    environment default.
    """
    steps = as_steps(steps)
    region = as_region(region, steps.dim)
    if m_max < 0:
        raise UsageError("m_max must be nonnegative")
    box = derive_box(steps, region, m_max)
    padded, active, offsets, origin, interior = _layout(steps, region, box)
    size = int(np.prod(padded, dtype=np.int64))
    if backend is None:
        backend = _kernels.backend_name()
    if backend not in ("numba", "numpy"):
        raise UsageError(f"unknown backend {backend!r}")

    bound = len(steps) ** m_max
    if backend == "numba":
        primes = [] if bound <= INT64_MAX else primes_below(_kernels.MODULUS_LIMIT, _primes_needed(bound))
        per_cell = 8 * max(1, len(primes))
    else:
        primes = []
        per_cell = 8 + max(28, 4 * (bound.bit_length() // 30 + 1))
    nslices = m_max + 1 if retain else 2
    need = size * nslices * per_cell
    budget = DEFAULT_MEMORY_BUDGET if memory_budget is None else memory_budget
    if need > budget:
        dims = " x ".join(f"[{lo},{hi}]" for lo, hi in box)
        raise ResourceError(f"walk table box {dims} with {nslices} slices needs ~{need} bytes, "
                            f"budget is {budget}")

    if backend == "numpy":
        returns, flat_slices = _kernels.dp_object(size, active, offsets, origin, m_max, retain)
    elif not primes:
        r64, flat_slices = _kernels.dp_int64(size, active, offsets, origin, m_max, 0, retain, True)
        returns = [int(v) for v in r64]
        flat_slices = [s.astype(object) for s in flat_slices]
    else:
        runs = [_kernels.dp_int64(size, active, offsets, origin, m_max, p, retain, True) for p in primes]
        returns = [int(v) for v in _crt([r for r, _ in runs], primes)]
        flat_slices = [_crt([run[1][k] for run in runs], primes) for k in range(len(runs[0][1]))]

    slices = [np.asarray(s, dtype=object).reshape(padded)[interior].copy() for s in flat_slices]
    return WalkTable(steps, region, m_max, box, returns, slices, retained=retain)


def _primes_needed(bound):
    # product of primes just below 2**31 must exceed the count bound
    return bound.bit_length() // 30 + 1


def return_sequence(table):
    return table.return_sequence()


def total_count(steps, m):
    if m < 0:
        raise UsageError("m must be nonnegative")
    return len(as_steps(steps)) ** m


# ---------------------------------------------------------------------------
# refined counting
# ---------------------------------------------------------------------------

def refine(steps, region):
    """Step multiplicities A in N^r and the constraints a prefix must satisfy.

    Returns ``(r, refined_region)`` where each constraint ``c . n >= b`` becomes
    ``sum_i A_i (c . s_i) >= b``.
    """
    steps = as_steps(steps)
    region = as_region(region, steps.dim)
    r = len(steps)
    cons = []
    for c, b in region.constraints:
        coeffs = tuple(sum(ci * si for ci, si in zip(c, s)) for s in steps)
        cons.append((coeffs, b))
    return r, Region(r, tuple(cons))


@dataclass
class RefinedTable:
    """f(A_1, ..., A_r): walks using exactly A_i steps of kind i."""

    steps: StepSet
    region_refined: Region
    total_max: int
    walk: WalkTable

    @property
    def r(self):
        return self.region_refined.dim

    @property
    def index_vars(self):
        return tuple(f"a{i + 1}" for i in range(self.r))

    def f(self, *counts):
        if len(counts) == 1 and isinstance(counts[0], (tuple, list)):
            counts = tuple(counts[0])
        if len(counts) != self.r:
            raise UsageError(f"expected {self.r} multiplicities")
        if any(c < 0 for c in counts):
            return 0
        total = sum(counts)
        if total > self.total_max:
            raise UsageError(f"total {total} beyond table depth {self.total_max}")
        return self.walk.count(total, *counts)

    def lookup(self, points):
        pts = np.asarray(points, dtype=np.int64).reshape(-1, self.r)
        totals = pts.sum(axis=1)
        if pts.shape[0] and totals.max() > self.total_max:
            raise UsageError(f"total degree beyond table depth {self.total_max}")
        neg = (pts < 0).any(axis=1)
        full = np.concatenate([totals[:, None], pts], axis=1)
        out = self.walk.lookup(full)
        out[neg] = 0
        return out

    def layer_sum(self, total):
        """Sum of f(A) over |A| = total."""
        return sum(int(v) for v in np.ravel(self.walk.slice(total)))


def refined_enumerate(steps, region=None, total_max=0, backend=None, memory_budget=None):
    steps = as_steps(steps)
    region = as_region(region, steps.dim)
    if total_max < 0:
        raise UsageError("total_max must be nonnegative")
    r, refined = refine(steps, region)
    units = StepSet(tuple(tuple(int(i == j) for j in range(r)) for i in range(r)))
    walk = enumerate_walks(units, refined, total_max, retain=True, backend=backend,
                           memory_budget=memory_budget)
    return RefinedTable(steps, refined, total_max, walk)


def gessel_G(rt, n):
    """G(n) = sum_a f(a, a, n-a, n-a) on a table in the Gessel refined step order."""
    if rt.r != 4:
        raise UsageError("G(n) needs a 4-kind refined table")
    if 2 * n > rt.total_max:
        raise UsageError(f"G({n}) needs total degree {2 * n}, table has {rt.total_max}")
    return sum(rt.f(a, a, n - a, n - a) for a in range(n + 1))

