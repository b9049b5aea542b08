"""Hot loops: walk DP slice updates and modular row reduction.

Each kernel exists twice, a numba ``@njit`` version and a pure-numpy version.
``QUASIHOLO_NUMBA=0`` in the environment forces the numpy path; it is also
used when numba cannot be imported.  Both paths return identical results.
"""

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None


def _flag_enabled():
    return os.environ.get("QUASIHOLO_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")


HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and _flag_enabled()  # value at import; calls re-read the flag

# residues stay below 2**31 so that a*b + c never leaves int64
MODULUS_LIMIT = 1 << 31


def backend_name(use_numba=None):
    if use_numba is None:
        use_numba = _flag_enabled()
    return "numba" if (use_numba and HAVE_NUMBA) else "numpy"


def _resolve(use_numba):
    if use_numba is None:
        return HAVE_NUMBA and _flag_enabled()
    if use_numba and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    return bool(use_numba)


# ---------------------------------------------------------------------------
# walk dynamic programming
# ---------------------------------------------------------------------------
#
# The lattice box is stored flat with a zero margin wide enough that
# ``idx - off`` stays inside the array for every active cell and every step.
# Cells outside the region are never written, so they read as 0.


def _dp_numpy(size, active, offsets, origin, m_max, modulus, retain, dtype):
    prev = np.zeros(size, dtype=dtype)
    prev[origin] = 1
    returns = [1]
    slices = [prev.copy()] if retain else None
    gathers = [active - off for off in offsets]
    for _ in range(m_max):
        acc = prev[gathers[0]]
        for g in gathers[1:]:
            acc = acc + prev[g]
        if modulus:
            acc %= modulus
        nxt = np.zeros(size, dtype=dtype)
        nxt[active] = acc
        prev = nxt
        returns.append(prev[origin])
        if retain:
            slices.append(prev)
    if not retain:
        slices = [prev]
    return returns, slices


if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _dp_numba(size, active, offsets, origin, m_max, modulus, retain):
        nkeep = m_max + 1 if retain else 1
        keep = np.zeros((nkeep, size), dtype=np.int64)
        returns = np.zeros(m_max + 1, dtype=np.int64)
        prev = np.zeros(size, dtype=np.int64)
        nxt = np.zeros(size, dtype=np.int64)
        prev[origin] = 1
        returns[0] = 1
        if retain:
            keep[0, :] = prev
        for m in range(1, m_max + 1):
            for t in range(active.shape[0]):
                idx = active[t]
                s = 0
                for k in range(offsets.shape[0]):
                    s += prev[idx - offsets[k]]
                    if modulus > 0 and s >= modulus:
                        s -= modulus
                nxt[idx] = s
            tmp = prev
            prev = nxt
            nxt = tmp
            returns[m] = prev[origin]
            if retain:
                keep[m, :] = prev
        if not retain:
            keep[0, :] = prev
        return returns, keep


def dp_int64(size, active, offsets, origin, m_max, modulus=0, retain=False, use_numba=None):
    """Run the slice recurrence in int64, optionally reduced mod ``modulus``.

    The caller guarantees no overflow (all counts < 2**63 when modulus is 0).
    Returns ``(returns, slices)``; ``slices`` has every slice when ``retain``
    else only the last one.
    """
    active = np.ascontiguousarray(active, dtype=np.int64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    if _resolve(use_numba):
        returns, keep = _dp_numba(size, active, offsets, origin, m_max, modulus, retain)
        return returns, list(keep)
    returns, slices = _dp_numpy(size, active, offsets, origin, m_max, modulus, retain, np.int64)
    return np.asarray(returns, dtype=np.int64), slices


def dp_object(size, active, offsets, origin, m_max, retain=False):
    """Exact big-integer DP on object arrays (pure numpy)."""
    returns, slices = _dp_numpy(size, np.asarray(active), np.asarray(offsets), origin,
                                m_max, 0, retain, object)
    return [int(v) for v in returns], slices


# ---------------------------------------------------------------------------
# modular row reduction
# ---------------------------------------------------------------------------
#
# Rows are streamed in a caller-chosen order against a basis kept in reduced
# row echelon form.  Stops as soon as the rank reaches the column count.


if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _inv_mod(a, p):
        # extended Euclid on int64
        t, newt = 0, 1
        r, newr = p, a
        while newr != 0:
            q = r // newr
            t, newt = newt, t - q * newt
            r, newr = newr, r - q * newr
        if t < 0:
            t += p
        return t

    @numba.njit(cache=True)
    def _echelon_numba(a, p, order):
        nrows, ncols = a.shape
        basis = np.zeros((ncols, ncols), dtype=np.int64)
        pivots = np.full(ncols, -1, dtype=np.int64)
        chosen = np.full(ncols, -1, dtype=np.int64)
        rank = 0
        row = np.zeros(ncols, dtype=np.int64)
        for oi in range(order.shape[0]):
            if rank == ncols:
                break
            i = order[oi]
            for j in range(ncols):
                row[j] = a[i, j] % p
            for k in range(rank):
                c = row[pivots[k]]
                if c != 0:
                    for j in range(ncols):
                        if basis[k, j] != 0:
                            row[j] = (row[j] - c * basis[k, j]) % p
            piv = -1
            for j in range(ncols):
                if row[j] != 0:
                    piv = j
                    break
            if piv < 0:
                continue
            inv = _inv_mod(row[piv], p)
            for j in range(ncols):
                row[j] = (row[j] * inv) % p
            for k in range(rank):
                c = basis[k, piv]
                if c != 0:
                    for j in range(ncols):
                        if row[j] != 0:
                            basis[k, j] = (basis[k, j] - c * row[j]) % p
            basis[rank, :] = row
            pivots[rank] = piv
            chosen[rank] = i
            rank += 1
        return rank, chosen[:rank].copy(), pivots[:rank].copy()


def _matvec_mod(coef, basis, p):
    # coef < 2**31, basis < 2**31: split basis into 16-bit halves so every
    # partial dot product stays below 2**63
    lo = basis & 0xFFFF
    hi = basis >> 16
    s_lo = coef @ lo
    s_hi = (coef @ hi) % p
    return (s_lo % p + (s_hi << 16) % p) % p


def _echelon_numpy(a, p, order):
    nrows, ncols = a.shape
    basis = np.zeros((0, ncols), dtype=np.int64)
    pivots = []
    chosen = []
    for i in order:
        if len(pivots) == ncols:
            break
        row = a[i] % p
        if pivots:
            row = (row - _matvec_mod(row[pivots], basis, p)) % p
        nz = np.flatnonzero(row)
        if nz.size == 0:
            continue
        piv = int(nz[0])
        row = (row * pow(int(row[piv]), -1, p)) % p
        if pivots:
            col = basis[:, piv].copy()
            basis = (basis - (np.outer(col, row) % p)) % p
        basis = np.vstack([basis, row])
        pivots.append(piv)
        chosen.append(int(i))
    return len(pivots), np.asarray(chosen, dtype=np.int64), np.asarray(pivots, dtype=np.int64)


def echelon_mod(a, p, order=None, use_numba=None):
    """Rank of an int64 matrix mod a prime ``p < 2**31``.

    Returns ``(rank, chosen_rows, pivot_cols)`` where ``chosen_rows`` are the
    rows (in processing order) that raised the rank.
    """
    if not 2 <= p < MODULUS_LIMIT:
        raise ValueError(f"modulus {p} outside the int64 kernel range")
    a = np.ascontiguousarray(a, dtype=np.int64)
    if order is None:
        order = np.arange(a.shape[0], dtype=np.int64)
    order = np.ascontiguousarray(order, dtype=np.int64)
    if a.shape[1] == 0:
        return 0, np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    if _resolve(use_numba):
        rank, chosen, pivots = _echelon_numba(a, np.int64(p), order)
        return int(rank), chosen, pivots
    return _echelon_numpy(a, p, order)
