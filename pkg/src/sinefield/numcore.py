"""Numerical substrate: PRNG, DFT, symmetric eigensolver and Bessel functions.

Matrices are plain ``float64`` numpy arrays. Nothing here draws on
``numpy.random``, ``numpy.fft``, ``numpy.linalg.eigh`` or ``scipy.special``;
those serve only as independent oracles in the test suite.
"""

import math
from fractions import Fraction

import numpy as np

from .errors import InvalidInputError, OutOfRangeError

_MASK64 = (1 << 64) - 1


# ---------------------------------------------------------------------------
# PRNG: splitmix64 seeding feeding xoshiro256++
# ---------------------------------------------------------------------------


def splitmix64(state):
    """Advance a splitmix64 state; returns ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


class Prng:
    """xoshiro256++ generator seeded through splitmix64.

    Owned by one caller at a time. Two instances built from the same seed
    produce the same stream on every platform.
    """

    def __init__(self, seed=0):
        self.seed = int(seed) & _MASK64
        sm = self.seed
        words = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            words.append(out)
        self._s = words

    @classmethod
    def from_state(cls, state):
        rng = cls.__new__(cls)
        rng.seed = None
        rng._s = [int(w) & _MASK64 for w in state]
        if not any(rng._s):
            raise InvalidInputError("xoshiro256++ state must not be all zero")
        return rng

    @property
    def state(self):
        return tuple(self._s)

    def next_u64(self):
        s0, s1, s2, s3 = self._s
        s = (s0 + s3) & _MASK64
        result = ((((s << 23) | (s >> 41)) & _MASK64) + s0) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = ((s3 << 45) | (s3 >> 19)) & _MASK64
        self._s = [s0, s1, s2, s3]
        return result

    def u64_array(self, n):
        """``n`` consecutive raw outputs as a ``uint64`` array."""
        s0, s1, s2, s3 = self._s
        out = [0] * n
        m = _MASK64
        for i in range(n):
            s = (s0 + s3) & m
            out[i] = ((((s << 23) | (s >> 41)) & m) + s0) & m
            t = (s1 << 17) & m
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = ((s3 << 45) | (s3 >> 19)) & m
        self._s = [s0, s1, s2, s3]
        return np.array(out, dtype=np.uint64)

    def random(self, n=None):
        """Uniform doubles in [0, 1) built from the top 53 bits."""
        if n is None:
            return (self.next_u64() >> 11) * 2.0**-53
        return (self.u64_array(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def randbelow(self, n, size=None):
        """Integers in [0, n) by multiply-shift (bias below 2^-40 for desk sizes)."""
        if n < 1:
            raise InvalidInputError("randbelow needs n >= 1")
        if size is None:
            return (self.next_u64() * n) >> 64
        raw = self.u64_array(size)
        return np.array([(int(r) * n) >> 64 for r in raw], dtype=np.int64)


def uniform_fill(rng, rows, cols, lo, hi):
    """Row-major ``rows x cols`` matrix of draws from Unif[lo, hi)."""
    lo = float(lo)
    hi = float(hi)
    if not lo < hi:
        raise InvalidInputError(f"invalid range [{lo}, {hi})")
    u = rng.random(rows * cols).reshape(rows, cols)
    out = lo + (hi - lo) * u
    # lo + (hi-lo)*u can round up to hi for u close to 1
    np.copyto(out, np.nextafter(hi, lo), where=out >= hi)
    return out


# ---------------------------------------------------------------------------
# Discrete Fourier transform
# ---------------------------------------------------------------------------


def _as_signal(signal):
    x = np.asarray(signal, dtype=np.complex128)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise InvalidInputError("DFT of an empty signal")
    return x


def dft_direct(signal, block=256):
    """O(n^2) DFT along the last axis, blocked to bound memory."""
    x = _as_signal(signal)
    n = x.shape[-1]
    j = np.arange(n)
    out = np.empty(x.shape, dtype=np.complex128)
    for start in range(0, n, block):
        k = np.arange(start, min(start + block, n))
        # reduce k*j mod n first so the phase stays small and exact
        phase = (np.outer(k, j) % n) * (-2.0 * np.pi / n)
        out[..., start:start + len(k)] = x @ np.exp(1j * phase).T
    return out


def fft_radix2(signal):
    """Iterative radix-2 decimation-in-time FFT along the last axis."""
    x = _as_signal(signal)
    n = x.shape[-1]
    if n & (n - 1):
        raise InvalidInputError(f"radix-2 FFT needs a power-of-two length, got {n}")
    bits = n.bit_length() - 1
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((np.arange(n) >> b) & 1) << (bits - 1 - b)
    a = x[..., rev].copy()
    lead = a.shape[:-1]
    m = 2
    while m <= n:
        half = m // 2
        w = np.exp(-2j * np.pi * np.arange(half) / m)
        blocks = a.reshape(*lead, n // m, m)
        even = blocks[..., :half].copy()
        odd = blocks[..., half:] * w
        blocks[..., :half] = even + odd
        blocks[..., half:] = even - odd
        a = blocks.reshape(*lead, n)
        m *= 2
    return a


def dft(signal):
    """Complex DFT along the last axis; radix-2 when the length allows."""
    x = _as_signal(signal)
    n = x.shape[-1]
    if n & (n - 1) == 0:
        return fft_radix2(x)
    return dft_direct(x)


def dft1d(signal):
    """Magnitudes ``|sum_j s_j exp(-2 pi i k j / n)|`` for k = 0..n-1."""
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise InvalidInputError("dft1d expects a non-empty 1D sequence")
    return np.abs(dft(x))


# ---------------------------------------------------------------------------
# Symmetric eigensolver: cyclic Jacobi in round-robin (parallel) ordering
# ---------------------------------------------------------------------------


def _round_robin(n):
    """Pairings covering every (p, q) once per sweep; n-1 rounds of n/2 pairs."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for i in range(m // 2):
            p, q = players[i], players[m - 1 - i]
            if p < n and q < n:
                ps.append(min(p, q))
                qs.append(max(p, q))
        rounds.append((np.array(ps, dtype=np.int64), np.array(qs, dtype=np.int64)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def sym_eig(K, tol=1e-12, max_sweeps=100, sym_tol=1e-9):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Each round applies n/2 disjoint rotations at once (round-robin pairing),
    so a sweep still annihilates every off-diagonal pair exactly once.
    Iterates until the off-diagonal Frobenius norm drops below
    ``tol * ||K||_F``.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues in descending
    order and eigenvectors as orthonormal columns.
    """
    A = np.array(K, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInputError(f"sym_eig needs a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError("sym_eig input contains NaN or Inf")
    asym = np.max(np.abs(A - A.T)) if A.size else 0.0
    if asym > sym_tol:
        raise InvalidInputError(f"matrix not symmetric (max |K - K^T| = {asym:.3g})")
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    V = np.eye(n)
    norm = np.linalg.norm(A)
    if n < 2 or norm == 0.0:
        return _sorted_eig(np.diag(A).copy(), V)

    rounds = _round_robin(n)
    target = tol * norm
    # V is kept transposed so every update is a contiguous row rotation
    Vt = V
    for _ in range(max_sweeps):
        off = math.sqrt(max(norm**2 - float(np.sum(np.diag(A) ** 2)), 0.0))
        if off < target:
            # the cheap estimate cancels badly near convergence; confirm directly
            off = np.linalg.norm(A - np.diag(np.diag(A)))
            if off < target:
                break
        for P, Q in rounds:
            apq = A[P, Q]
            active = apq != 0.0
            if not np.any(active):
                continue
            P, Q, apq = P[active], Q[active], apq[active]
            # a negligible apq overflows theta to inf, giving t = 0: the entry is just dropped
            with np.errstate(over="ignore"):
                theta = (A[Q, Q] - A[P, P]) / (2.0 * apq)
                t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.hypot(1.0, theta))
            c = (1.0 / np.sqrt(1.0 + t * t))[:, None]
            s = t[:, None] * c
            # J^T A J == J^T (J^T A)^T for symmetric A
            _rotate_rows(A, P, Q, c, s)
            A = np.ascontiguousarray(A.T)
            _rotate_rows(A, P, Q, c, s)
            A[P, Q] = 0.0
            A[Q, P] = 0.0
            _rotate_rows(Vt, P, Q, c, s)
    return _sorted_eig(np.diag(A).copy(), Vt.T)


def _rotate_rows(M, P, Q, c, s):
    rp = M[P]
    rq = M[Q]
    M[P] = c * rp - s * rq
    M[Q] = s * rp + c * rq


def _sorted_eig(vals, vecs):
    order = np.argsort(-vals, kind="stable")
    return vals[order], vecs[:, order]


# ---------------------------------------------------------------------------
# Bessel functions of the first kind
# ---------------------------------------------------------------------------

BESSEL_MAX_ABS_X = 30.0
_BESSEL_MAX_TERMS = 200
# beyond this |x| the alternating series cancels badly in float64
_FLOAT_SERIES_LIMIT = 8.0


def bessel_j(order, x):
    """J_order(x) from the power series sum_m (-1)^m (x/2)^(2m+l) / (m! (m+l)!).

    Terms are summed until one falls below 1e-16 (relative to the partial
    sum when that is smaller than one), capped at 200 terms. For
    ``|x| > 8`` the terms are accumulated exactly as rationals, since
    float64 would lose the result to cancellation.
    """
    if isinstance(order, bool) or int(order) != order or order < 0:
        raise InvalidInputError(f"Bessel order must be a non-negative integer, got {order!r}")
    order = int(order)
    x = float(x)
    if not abs(x) <= BESSEL_MAX_ABS_X:
        raise OutOfRangeError(f"bessel_j supports |x| <= {BESSEL_MAX_ABS_X}, got {x}")
    if x == 0.0:
        return 1.0 if order == 0 else 0.0
    if abs(x) <= _FLOAT_SERIES_LIMIT:
        return _bessel_series_float(order, x)
    return _bessel_series_exact(order, x)


def _bessel_series_float(order, x):
    half = 0.5 * x
    q = -half * half
    term = 1.0
    for k in range(1, order + 1):
        term *= half / k
    terms = [term]
    total = term
    for m in range(1, _BESSEL_MAX_TERMS):
        term *= q / (m * (m + order))
        terms.append(term)
        total += term
        if abs(term) < 1e-16 * min(1.0, abs(total)) or term == 0.0:
            break
    return math.fsum(terms)


def _bessel_series_exact(order, x):
    half = Fraction(x) / 2
    q = -half * half
    term = half**order / math.factorial(order)
    total = term
    for m in range(1, _BESSEL_MAX_TERMS):
        term = term * q / (m * (m + order))
        total += term
        mag = abs(float(term))
        if mag < 1e-16 * min(1.0, abs(float(total))) or mag == 0.0:
            break
    return float(total)
