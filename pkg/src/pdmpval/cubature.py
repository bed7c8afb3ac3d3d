"""Point-set generation and weights for the valuation cubature.

Sobol' points are generated from a shipped Joe-Kuo style direction-number
table in the original binary ordering (coordinate 1 is the van der Corput
base-2 sequence) starting at index 1, so the origin never appears.  Halton
points use the first d prime bases with optional seeded digit permutations
fixing 0.  Pseudorandom nodes come from counter-based Philox streams keyed by
(seed, replicate, fixed-size chunk), which makes parallel generation
order-independent by construction.  Exact star-discrepancy routines for
d <= 2 serve as test oracles only.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Optional

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import InputError

__all__ = [
    "RuleKind",
    "CubatureSpec",
    "sobol_points",
    "sobol_column",
    "sobol_max_dim",
    "halton_scrambled_points",
    "halton_column",
    "halton_permutations",
    "mc_points",
    "mc_chunk",
    "MC_CHUNK_NODES",
    "cranley_patterson_shift",
    "cp_shift_vector",
    "gauss_legendre",
    "star_discrepancy_1d",
    "star_discrepancy_bruteforce",
    "first_primes",
]

_NBITS = 32
_SCALE = float(2.0 ** -_NBITS)
MC_CHUNK_NODES = 8192

_MC_TAG = 0x6D63706E  # stream-domain separators for SeedSequence entropy
_CP_TAG = 0x63707368
_HALTON_TAG = 0x686C746E


class RuleKind(Enum):
    MC = "mc"
    SOBOL = "sobol"
    SCRAMBLED_HALTON = "halton"
    GAUSS_PRODUCT = "gauss"


@dataclass(frozen=True)
class CubatureSpec:
    """Rule selection: kind, node count M (points per axis for the Gauss
    product rule), dimension, seed and replicate count."""

    kind: RuleKind
    M: int
    d: int
    seed: int = 0
    replicates: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", RuleKind(self.kind))
        if self.d < 1:
            raise InputError(f"dimension must be >= 1, got {self.d}")
        if self.M < 1:
            raise InputError(f"node count must be >= 1, got {self.M}")
        if self.replicates < 1:
            raise InputError(f"replicate count must be >= 1, got {self.replicates}")
        if self.kind is RuleKind.SOBOL and self.d > sobol_max_dim():
            raise InputError(
                f"Sobol dimension {self.d} exceeds the shipped direction table "
                f"({sobol_max_dim()})"
            )
        if self.kind is RuleKind.GAUSS_PRODUCT and not 1 <= self.M <= 64:
            raise InputError(f"Gauss rule size must be in 1..64, got {self.M}")


# --- Sobol' ---------------------------------------------------------------


@lru_cache(maxsize=1)
def _direction_table():
    """Parse the shipped `d s a m_1 ... m_s` table (one line per dimension >= 2)."""
    text = resources.files("pdmpval.data").joinpath("sobol_directions.txt").read_text()
    table = {}
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        d, s, a = int(parts[0]), int(parts[1]), int(parts[2])
        m = [int(v) for v in parts[3:]]
        if len(m) != s:
            raise InputError(f"direction table line for dimension {d} is malformed")
        table[d] = (s, a, m)
    return table


def sobol_max_dim() -> int:
    return 1 + len(_direction_table())


@lru_cache(maxsize=2048)
def _direction_integers(dim: int) -> np.ndarray:
    """32 direction integers of one coordinate, left-aligned in 32 bits."""
    v = np.zeros(_NBITS, dtype=np.uint64)
    if dim == 1:
        for k in range(_NBITS):
            v[k] = np.uint64(1) << np.uint64(_NBITS - 1 - k)
        return v
    s, a, m = _direction_table()[dim]
    for k in range(min(s, _NBITS)):
        v[k] = np.uint64(m[k]) << np.uint64(_NBITS - 1 - k)
    for k in range(s, _NBITS):
        val = v[k - s] ^ (v[k - s] >> np.uint64(s))
        for i in range(1, s):
            if (a >> (s - 1 - i)) & 1:
                val ^= v[k - i]
        v[k] = val
    return v


def sobol_column(dim: int, start: int, stop: int) -> np.ndarray:
    """Coordinate ``dim`` (1-based) of Sobol' points with indices [start, stop)."""
    if dim < 1 or dim > sobol_max_dim():
        raise InputError(f"Sobol dimension {dim} outside 1..{sobol_max_dim()}")
    if start < 0 or stop > 1 << _NBITS:
        raise InputError("Sobol index range outside the 32-bit sequence")
    idx = np.arange(start, stop, dtype=np.uint64)
    v = _direction_integers(dim)
    acc = np.zeros(idx.shape, dtype=np.uint64)
    top = int(stop - 1).bit_length()
    for b in range(top):
        acc ^= ((idx >> np.uint64(b)) & np.uint64(1)) * v[b]
    return acc.astype(np.float64) * _SCALE


def sobol_points(M: int, d: int) -> np.ndarray:
    """First M Sobol' points (indices 1..M, origin skipped) in dimension d."""
    if d < 1 or d > sobol_max_dim():
        raise InputError(f"Sobol dimension {d} outside 1..{sobol_max_dim()}")
    if M < 1:
        raise InputError(f"node count must be >= 1, got {M}")
    out = np.empty((M, d), dtype=float)
    for j in range(d):
        out[:, j] = sobol_column(j + 1, 1, M + 1)
    return out


# --- Halton -----------------------------------------------------------------


def first_primes(n: int) -> np.ndarray:
    """The first n primes (sieve, grown geometrically)."""
    if n < 1:
        raise InputError(f"need at least one prime, got {n}")
    limit = max(16, int(n * (np.log(n + 2) + np.log(np.log(n + 3))) * 1.3))
    while True:
        sieve = np.ones(limit, dtype=bool)
        sieve[:2] = False
        for p in range(2, int(limit ** 0.5) + 1):
            if sieve[p]:
                sieve[p * p:: p] = False
        primes = np.flatnonzero(sieve)
        if primes.size >= n:
            return primes[:n].astype(np.int64)
        limit *= 2


def halton_permutations(d: int, seed: Optional[int]):
    """Per-base digit permutations pi_b fixing 0; None seed means identity."""
    if seed is None:
        return None
    perms = []
    for j, base in enumerate(first_primes(d)):
        rng = np.random.Generator(
            np.random.Philox(seed=np.random.SeedSequence(entropy=(_HALTON_TAG, seed, j)))
        )
        perm = np.concatenate([[0], 1 + rng.permutation(int(base) - 1)])
        perms.append(perm.astype(np.int64))
    return perms


def halton_column(dim: int, start: int, stop: int, perms=None) -> np.ndarray:
    """Coordinate ``dim`` (1-based) of (scrambled) Halton points, indices [start, stop)."""
    base = int(first_primes(dim)[-1])
    perm = None if perms is None else perms[dim - 1]
    idx = np.arange(start, stop, dtype=np.int64)
    rem = idx.copy()
    out = np.zeros(idx.shape, dtype=float)
    scale = 1.0 / base
    while np.any(rem > 0):
        digit = rem % base
        if perm is not None:
            digit = perm[digit]
        out += digit * scale
        scale /= base
        rem //= base
    return out


def halton_scrambled_points(M: int, d: int, seed: Optional[int] = None) -> np.ndarray:
    """First M Halton points (indices 1..M) with seeded digit scrambling.

    ``seed=None`` is the identity sentinel and yields the plain Halton
    sequence.  Permutations fix the digit 0, which keeps the points off the
    origin corner and leaves each coordinate's equidistribution unchanged.
    """
    if M < 1 or d < 1:
        raise InputError(f"need M >= 1 and d >= 1, got M={M}, d={d}")
    perms = halton_permutations(d, seed)
    out = np.empty((M, d), dtype=float)
    for j in range(d):
        out[:, j] = halton_column(j + 1, 1, M + 1, perms)
    return out


# --- pseudorandom -------------------------------------------------------------


def mc_chunk(chunk_index: int, rows: int, d: int, seed: int, replicate: int = 0) -> np.ndarray:
    """One fixed-size chunk of the (seed, replicate) uniform stream.

    Chunk ``chunk_index`` covers node indices [chunk*8192, ...); the chunk is
    always generated in full so every node's coordinates depend only on
    (seed, replicate, node index), never on how many nodes the caller uses.
    """
    if rows < 1 or rows > MC_CHUNK_NODES:
        raise InputError(f"rows must be in 1..{MC_CHUNK_NODES}")
    ss = np.random.SeedSequence(entropy=(_MC_TAG, int(seed), int(replicate), int(chunk_index)))
    gen = np.random.Generator(np.random.Philox(seed=ss))
    block = gen.random((MC_CHUNK_NODES, d))
    return block[:rows]


def mc_points(M: int, d: int, seed: int, replicate: int = 0) -> np.ndarray:
    """M x d i.i.d. uniforms, bit-identical for fixed (seed, replicate)."""
    if M < 1 or d < 1:
        raise InputError(f"need M >= 1 and d >= 1, got M={M}, d={d}")
    out = np.empty((M, d), dtype=float)
    for c0 in range(0, M, MC_CHUNK_NODES):
        rows = min(MC_CHUNK_NODES, M - c0)
        out[c0: c0 + rows] = mc_chunk(c0 // MC_CHUNK_NODES, rows, d, seed, replicate)
    return out


def cp_shift_vector(d: int, seed: int, replicate: int = 0) -> np.ndarray:
    """The Cranley-Patterson shift vector of one replicate."""
    ss = np.random.SeedSequence(entropy=(_CP_TAG, int(seed), int(replicate)))
    return np.random.Generator(np.random.Philox(seed=ss)).random(d)


def cranley_patterson_shift(points: np.ndarray, seed: Optional[int] = None,
                            replicate: int = 0, shift: Optional[np.ndarray] = None) -> np.ndarray:
    """Coordinatewise modulo-1 translation of a point set.

    Pass an explicit ``shift`` vector, or a ``seed`` (plus replicate index)
    from which the vector is drawn.
    """
    points = np.asarray(points, dtype=float)
    if shift is None:
        if seed is None:
            raise InputError("either a shift vector or a seed is required")
        shift = cp_shift_vector(points.shape[-1], seed, replicate)
    return np.mod(points + np.asarray(shift, dtype=float), 1.0)


# --- Gauss-Legendre -------------------------------------------------------------


def gauss_legendre(mtilde: int):
    """Gauss-Legendre nodes and weights mapped to [0, 1]; weights sum to 1."""
    if not 1 <= mtilde <= 64:
        raise InputError(f"Gauss rule size must be in 1..64, got {mtilde}")
    x, w = leggauss(mtilde)
    return 0.5 * (x + 1.0), 0.5 * w


# --- exact star discrepancy (test oracles) ---------------------------------------


def star_discrepancy_1d(points) -> float:
    """Exact D* of a 1-d point set over anchored half-open intervals."""
    x = np.sort(np.asarray(points, dtype=float).ravel())
    m = x.size
    if m == 0:
        raise InputError("empty point set")
    i = np.arange(1, m + 1)
    return float(1.0 / (2 * m) + np.max(np.abs(x - (2 * i - 1) / (2.0 * m))))


def star_discrepancy_bruteforce(points, budget: int = 10_000) -> float:
    """Exact D* for d <= 2 by corner enumeration over coordinate candidates.

    O(M^2 log M); intended as a validation oracle for modest M (hard budget
    10^4 points).
    """
    import bisect

    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    m, d = pts.shape
    if m == 0:
        raise InputError("empty point set")
    if m > budget:
        raise InputError(f"point count {m} exceeds the oracle budget {budget}")
    if d == 1:
        xs = pts[:, 0]
        cand = np.concatenate([np.unique(xs), [1.0]])
        xs_sorted = np.sort(xs)
        lt = np.searchsorted(xs_sorted, cand, side="left")
        le = np.searchsorted(xs_sorted, cand, side="right")
        return float(max(np.max(cand - lt / m), np.max(le / m - cand)))
    if d != 2:
        raise InputError(f"brute-force oracle supports d <= 2, got d={d}")

    order = np.lexsort((pts[:, 1], pts[:, 0]))
    px, py = pts[order, 0], pts[order, 1]
    ay = np.concatenate([np.unique(py), [1.0]])
    best = 0.0
    acc: list = []  # sorted y's of points strictly left of the sweep line
    k = 0
    x_groups = np.unique(px)
    for a1 in np.concatenate([x_groups, [1.0]]):
        # points with px < a1 enter the open-count structure
        while k < m and px[k] < a1:
            bisect.insort(acc, py[k])
            k += 1
        arr = np.asarray(acc)
        cnt_open = np.searchsorted(arr, ay, side="left") if arr.size else np.zeros_like(ay)
        # closed counts additionally include px == a1
        k2 = k
        closed = list(acc)
        while k2 < m and px[k2] == a1:
            bisect.insort(closed, py[k2])
            k2 += 1
        arr2 = np.asarray(closed)
        cnt_closed = np.searchsorted(arr2, ay, side="right") if arr2.size else np.zeros_like(ay)
        vol = a1 * ay
        best = max(best, float(np.max(vol - cnt_open / m)), float(np.max(cnt_closed / m - vol)))
    return best
