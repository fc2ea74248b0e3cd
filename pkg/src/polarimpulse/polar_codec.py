"""
Polar encoding with G_N = B_N F^{(x)n} and successive-cancellation decoding.

Bit-channel indexing: for bit ``i`` (zero-based) the binary digits of ``i``
from most to least significant name the sequence of combining operations
(0 = check/``f``, 1 = variable/``g``) applied to the raw channel, first to
last.  The construction module uses the same ordering.
"""

from __future__ import annotations

import functools
import math
import os
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import DimensionError, ParameterError

LLR_CAP = 60.0


def _log2_exact(N):
    n = int(N).bit_length() - 1
    if N < 1 or (1 << n) != N:
        raise ParameterError(f"block length must be a power of two, got {N}")
    return n


@functools.lru_cache(maxsize=32)
def _bit_reversal(n):
    N = 1 << n
    rev = np.zeros(N, dtype=np.int64)
    for b in range(n):
        rev |= ((np.arange(N) >> b) & 1) << (n - 1 - b)
    rev.flags.writeable = False
    return rev


def bit_reversal_permutation(n):
    """Index array ``rev`` with ``rev[k]`` the n-bit reversal of ``k``."""
    return _bit_reversal(int(n))


@dataclass(frozen=True)
class PolarCode:
    """An (N, K, info_set) polar code with all-zero frozen bits."""

    N: int
    K: int
    info_set: tuple = field(default=())

    def __post_init__(self):
        _log2_exact(self.N)
        info = tuple(sorted(int(i) for i in self.info_set))
        object.__setattr__(self, "info_set", info)
        if not 0 <= self.K <= self.N:
            raise ParameterError(f"K must lie in [0, N], got K={self.K}, N={self.N}")
        if len(info) != self.K:
            raise ParameterError(f"info_set has {len(info)} entries, expected K={self.K}")
        if len(set(info)) != len(info):
            raise ParameterError("info_set contains duplicate indices")
        if info and (info[0] < 0 or info[-1] >= self.N):
            raise ParameterError("info_set index out of range")

    @property
    def n(self):
        return _log2_exact(self.N)

    @property
    def rate(self):
        return self.K / self.N

    @property
    def info_indices(self):
        return np.asarray(self.info_set, dtype=np.int64)

    @property
    def frozen_mask(self):
        mask = np.ones(self.N, dtype=np.bool_)
        mask[self.info_indices] = False
        return mask


# ---------------------------------------------------------------------------
# encoding


def encode(code: PolarCode, message):
    """Encode one message (length K) or a batch (shape ``(B, K)``).

    Returns codewords of length N as uint8.
    """
    msg = np.asarray(message)
    single = msg.ndim == 1
    msg = np.atleast_2d(msg)
    if msg.shape[1] != code.K:
        raise DimensionError(f"message length {msg.shape[1]} != K={code.K}")
    B = msg.shape[0]
    u = np.zeros((B, code.N), dtype=np.uint8)
    u[:, code.info_indices] = msg.astype(np.uint8) & 1
    x = u[:, bit_reversal_permutation(code.n)]
    h = 1
    while h < code.N:
        v = x.reshape(B, code.N // (2 * h), 2, h)
        v[:, :, 0, :] ^= v[:, :, 1, :]
        h *= 2
    return x[0] if single else x


def generator_matrix(N):
    """Dense G_N = B_N F^{(x)n} over GF(2); for testing small N."""
    n = _log2_exact(N)
    F = np.array([[1, 0], [1, 1]], dtype=np.int64)
    G = np.ones((1, 1), dtype=np.int64)
    for _ in range(n):
        G = np.kron(G, F)
    B = np.eye(N, dtype=np.int64)[bit_reversal_permutation(n)]
    return (B @ G) % 2


# ---------------------------------------------------------------------------
# LLR combining rules


def f_combine(a, b):
    """Check-node combine ``2 atanh(tanh(a/2) tanh(b/2))``.

    Evaluated as ``sign(a) sign(b) min(|a|,|b|)`` plus the two Jacobian
    correction terms, which is exact and never touches ``atanh(+-1)``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = (np.sign(a) * np.sign(b) * np.minimum(np.abs(a), np.abs(b))
           + np.log1p(np.exp(-np.abs(a + b))) - np.log1p(np.exp(-np.abs(a - b))))
    return out if out.ndim else float(out)


def g_combine(a, b, u_prev):
    """Variable-node combine ``b + (1 - 2 u_prev) a``."""
    a = np.asarray(a, dtype=float)
    out = np.asarray(b, dtype=float) + (1 - 2 * np.asarray(u_prev)) * a
    return out if out.ndim else float(out)


@njit(cache=True, inline="always")
def _f(a, b):
    aa = abs(a)
    ab = abs(b)
    m = aa if aa < ab else ab
    if (a < 0.0) != (b < 0.0):
        m = -m
    return m + math.log1p(math.exp(-abs(a + b))) - math.log1p(math.exp(-abs(a - b)))


# ---------------------------------------------------------------------------
# successive cancellation
#
# Node buffers for depth d (0 = root, n = leaf) have length N >> d and start at
# offset 2N - (2N >> d) in both ``alpha`` (LLRs) and ``beta`` (partial sums of
# the most recent left child at that depth).


@njit(cache=True)
def _sc_decode_one(llr, frozen, n, alpha, beta, tmp, u_hat, dead):
    N = 1 << n
    for k in range(N):
        alpha[k] = llr[k]
    for i in range(N):
        if i == 0:
            d0 = 1
        else:
            tz = 0
            while ((i >> tz) & 1) == 0:
                tz += 1
            dr = n - tz
            d0 = dr + 1
            s = N >> dr
            po = 2 * N - (2 * N >> (dr - 1))
            co = 2 * N - (2 * N >> dr)
            if dead[(1 << dr) - 1 + (i >> tz)]:
                d0 = n + 1
            else:
                for t in range(s):
                    a0 = alpha[po + t]
                    a1 = alpha[po + s + t]
                    alpha[co + t] = a1 - a0 if beta[co + t] else a1 + a0
        for d in range(d0, n + 1):
            if dead[(1 << d) - 1 + (i >> (n - d))]:
                break
            s = N >> d
            po = 2 * N - (2 * N >> (d - 1))
            co = 2 * N - (2 * N >> d)
            for t in range(s):
                alpha[co + t] = _f(alpha[po + t], alpha[po + s + t])
        if frozen[i] or alpha[2 * N - 2] >= 0.0:
            # exact zero decides 0
            bit = 0
        else:
            bit = 1
        u_hat[i] = bit
        tmp[0] = bit
        cur = 1
        d = n
        while d > 0 and ((i >> (n - d)) & 1) == 1:
            lo = 2 * N - (2 * N >> d)
            for t in range(cur):
                tmp[cur + t] = tmp[t]
                tmp[t] = beta[lo + t] ^ tmp[t]
            cur *= 2
            d -= 1
        if d > 0:
            lo = 2 * N - (2 * N >> d)
            for t in range(cur):
                beta[lo + t] = tmp[t]


@njit(cache=True)
def _sc_decode_batch(llrs, frozen, n, rev, dead, out):
    N = 1 << n
    alpha = np.empty(2 * N, dtype=np.float64)
    beta = np.zeros(2 * N, dtype=np.uint8)
    tmp = np.zeros(N, dtype=np.uint8)
    x = np.empty(N, dtype=np.float64)
    for r in range(llrs.shape[0]):
        for k in range(N):
            x[k] = llrs[r, rev[k]]
        _sc_decode_one(x, frozen, n, alpha, beta, tmp, out[r], dead)


def _frozen_subtrees(code):
    """Heap-ordered flags marking subtrees whose leaves are all frozen.

    The decoder skips LLR computation inside such subtrees; their decisions
    are zero whatever the LLRs.
    """
    N, n = code.N, code.n
    dead = np.zeros(2 * N, dtype=np.bool_)
    level = code.frozen_mask
    for d in range(n, -1, -1):
        dead[(1 << d) - 1: (1 << (d + 1)) - 1] = level
        level = level[0::2] & level[1::2] if len(level) > 1 else level
    return dead


def sc_decode(code: PolarCode, channel_llrs, cap=LLR_CAP):
    """Successive-cancellation decoding.

    Parameters
    ----------
    code : PolarCode
    channel_llrs : array_like
        Channel LLRs in nats, shape ``(N,)`` or ``(B, N)``; positive favours
        bit 0.  Values are clamped to ``+-cap``.

    Returns
    -------
    message : ndarray
        Decoded information bits, shape ``(K,)`` or ``(B, K)``.
    u_hat : ndarray
        All N decisions (frozen positions are zero).
    """
    llr = np.asarray(channel_llrs, dtype=np.float64)
    single = llr.ndim == 1
    llr = np.atleast_2d(llr)
    if llr.shape[1] != code.N:
        raise DimensionError(f"LLR vector length {llr.shape[1]} != N={code.N}")
    llr = np.clip(np.nan_to_num(llr, nan=0.0), -cap, cap)
    out = np.zeros(llr.shape, dtype=np.uint8)
    _sc_decode_batch(np.ascontiguousarray(llr), code.frozen_mask,
                     code.n, bit_reversal_permutation(code.n), _frozen_subtrees(code), out)
    msg = out[:, code.info_indices]
    if single:
        return msg[0], out[0]
    return msg, out


# ---------------------------------------------------------------------------
# information-set files


def format_info_set(code: PolarCode):
    lines = [f"N={code.N} K={code.K}"] + [str(i) for i in code.info_set]
    return "\n".join(lines) + "\n"


def write_info_set(path, code: PolarCode):
    """Write ``code`` as a header line ``N=<N> K=<K>`` and one index per line."""
    with open(path, "w", newline="\n") as fh:
        fh.write(format_info_set(code))


def read_info_set(path):
    with open(path) as fh:
        text = fh.read()
    return parse_info_set(text, source=os.fspath(path))


def parse_info_set(text, source="<string>"):
    lines = text.splitlines()
    if not lines:
        raise ParameterError(f"{source}: empty information-set file")
    header = lines[0].split()
    try:
        fields = dict(tok.split("=", 1) for tok in header)
        N, K = int(fields["N"]), int(fields["K"])
    except (ValueError, KeyError):
        raise ParameterError(f"{source}:1: expected header 'N=<N> K=<K>', got {lines[0]!r}")
    idx = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            idx.append(int(line))
        except ValueError:
            raise ParameterError(f"{source}:{lineno}: not an integer index: {line!r}")
    return PolarCode(N=N, K=K, info_set=tuple(idx))
