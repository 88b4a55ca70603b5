"""Arithmetic in the Goldilocks prime field p = 2**64 - 2**32 + 1.

Scalars are plain Python ints kept canonical in ``[0, p)``. Bulk work (NTTs,
low-degree extensions, constraint evaluation) runs on numpy ``uint64`` arrays
through the ``v*`` kernels and the :class:`FArray` wrapper, which reduce the
128-bit products with the usual ``2**64 = 2**32 - 1 (mod p)`` identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import DecodeError, SizeMismatch, UnsupportedOrder, ZeroInverse

P = 0xFFFFFFFF00000001
GENERATOR = 7
TWO_ADICITY = 32

_U64 = np.uint64
_P = _U64(P)
_EPS = _U64(0xFFFFFFFF)  # 2**64 mod p
_M32 = _U64(0xFFFFFFFF)
_S32 = _U64(32)


# -- scalars -----------------------------------------------------------------

def add(a: int, b: int) -> int:
    return (a + b) % P


def sub(a: int, b: int) -> int:
    return (a - b) % P


def neg(a: int) -> int:
    return -a % P


def mul(a: int, b: int) -> int:
    return a * b % P


def power(a: int, e: int) -> int:
    """a**e mod p, with 0**0 = 1."""
    if e < 0:
        raise ValueError("negative exponent")
    return pow(a % P, e, P)


def inv(a: int) -> int:
    a %= P
    if a == 0:
        raise ZeroInverse("0 has no multiplicative inverse")
    return pow(a, P - 2, P)


def felt_to_bytes(a: int) -> bytes:
    return a.to_bytes(8, "big")


def felt_from_bytes(data: bytes, offset: int = 0) -> int:
    """Decode an 8-byte big-endian Felt, rejecting non-canonical values."""
    if len(data) < offset + 8:
        raise DecodeError("truncated field element", offset)
    value = int.from_bytes(data[offset:offset + 8], "big")
    if value >= P:
        raise DecodeError("non-canonical field element", offset)
    return value


@lru_cache(maxsize=None)
def root_of_unity(k: int) -> int:
    """Primitive 2**k-th root of unity, 7**((p-1)/2**k)."""
    if not 0 <= k <= TWO_ADICITY:
        raise UnsupportedOrder(f"no subgroup of order 2**{k}")
    return pow(GENERATOR, (P - 1) >> k, P)


# -- vector kernels ------------------------------------------------------------

ArrayLike = Union[np.ndarray, Sequence[int]]


def as_array(values: ArrayLike) -> np.ndarray:
    if isinstance(values, np.ndarray) and values.dtype == _U64:
        return values
    return np.array([int(v) % P for v in values], dtype=_U64)


def vadd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    s = a + b
    s = s + (s < a) * _EPS
    return np.where(s >= _P, s - _P, s)


def vsub(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = a - b
    return np.where(a < b, d - _EPS, d)


def vneg(a: np.ndarray) -> np.ndarray:
    return np.where(a == 0, a, _P - a)


_SMALL = 128  # below this, Python big ints beat the 32-bit limb kernel


def vmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.size <= _SMALL and b.size <= _SMALL:
        return (a.astype(object) * b.astype(object) % P).astype(_U64)
    a_lo, a_hi = a & _M32, a >> _S32
    b_lo, b_hi = b & _M32, b >> _S32
    ll = a_lo * b_lo
    lh = a_lo * b_hi
    hl = a_hi * b_lo
    hh = a_hi * b_hi
    mid = lh + hl
    mid_carry = (mid < lh).astype(_U64) << _S32
    lo = ll + (mid << _S32)
    hi = hh + (mid >> _S32) + mid_carry + (lo < ll)
    # lo + hi * 2**64 = lo - hi_hi + hi_lo * (2**32 - 1)  (mod p)
    hi_hi, hi_lo = hi >> _S32, hi & _M32
    t0 = lo - hi_hi
    t0 = np.where(lo < hi_hi, t0 - _EPS, t0)
    t1 = hi_lo * _EPS
    t2 = t0 + t1
    t2 = t2 + (t2 < t1) * _EPS
    return np.where(t2 >= _P, t2 - _P, t2)


def vsquare(a: np.ndarray) -> np.ndarray:
    return vmul(a, a)


def vpow(a: np.ndarray, e: int) -> np.ndarray:
    result = np.ones_like(a)
    base = a
    while e:
        if e & 1:
            result = vmul(result, base)
        e >>= 1
        if e:
            base = vmul(base, base)
    return result


def vinv(a: np.ndarray) -> np.ndarray:
    if np.any(a == 0):
        raise ZeroInverse("0 has no multiplicative inverse")
    return vpow(a, P - 2)


def batch_inv(a: np.ndarray) -> np.ndarray:
    """Montgomery's trick: n inverses for one exponentiation."""
    vals = [int(v) for v in a]
    prefix = [1] * (len(vals) + 1)
    for i, v in enumerate(vals):
        if v == 0:
            raise ZeroInverse("0 has no multiplicative inverse")
        prefix[i + 1] = prefix[i] * v % P
    acc = pow(prefix[-1], P - 2, P)
    out = [0] * len(vals)
    for i in range(len(vals) - 1, -1, -1):
        out[i] = acc * prefix[i] % P
        acc = acc * vals[i] % P
    return np.array(out, dtype=_U64)


def vscale(a: np.ndarray, c: int) -> np.ndarray:
    return vmul(a, np.full(a.shape, c % P, dtype=_U64))


def powers(base: int, n: int, start: int = 1) -> np.ndarray:
    """[start, start*base, start*base**2, ...] of length n."""
    out = np.empty(max(n, 1), dtype=_U64)
    out[0] = start % P
    filled, step = 1, base % P
    while filled < n:
        take = min(filled, n - filled)
        out[filled:filled + take] = vscale(out[:take], step)
        filled += take
        step = step * step % P
    return out[:n]


class FArray:
    """Field-valued array with arithmetic operators.

    Operands may be FArrays or Python ints (broadcast). Used to write each
    constraint once and evaluate it over trace rows, LDE points or query
    points alike.
    """

    __slots__ = ("v",)

    def __init__(self, values: ArrayLike):
        self.v = as_array(values)

    def _other(self, other) -> np.ndarray:
        if isinstance(other, FArray):
            return other.v
        return np.full(self.v.shape, int(other) % P, dtype=_U64)

    def __add__(self, other):
        return FArray(vadd(self.v, self._other(other)))

    __radd__ = __add__

    def __sub__(self, other):
        return FArray(vsub(self.v, self._other(other)))

    def __rsub__(self, other):
        return FArray(vsub(self._other(other), self.v))

    def __mul__(self, other):
        return FArray(vmul(self.v, self._other(other)))

    __rmul__ = __mul__

    def __neg__(self):
        return FArray(vneg(self.v))

    def __pow__(self, e: int):
        return FArray(vpow(self.v, e))

    def __len__(self) -> int:
        return len(self.v)

    def tolist(self) -> list[int]:
        return [int(x) for x in self.v]


# -- evaluation domains and NTT -------------------------------------------------

@dataclass(frozen=True)
class EvalDomain:
    """The coset ``offset * <generator>`` of size ``2**log_size``."""

    log_size: int
    offset: int = 1

    def __post_init__(self):
        if not 0 <= self.log_size <= TWO_ADICITY:
            raise UnsupportedOrder(f"no subgroup of order 2**{self.log_size}")
        if self.offset % P == 0:
            raise ValueError("coset offset must be nonzero")

    @property
    def size(self) -> int:
        return 1 << self.log_size

    @property
    def generator(self) -> int:
        return root_of_unity(self.log_size)

    def element(self, i: int) -> int:
        return self.offset * pow(self.generator, i % self.size, P) % P

    def elements(self) -> np.ndarray:
        return powers(self.generator, self.size, self.offset)

    def squared(self) -> "EvalDomain":
        """Image of the domain under x -> x**2 (half the size)."""
        return EvalDomain(self.log_size - 1, self.offset * self.offset % P)


@lru_cache(maxsize=None)
def _bitrev(log_n: int) -> np.ndarray:
    n = 1 << log_n
    idx = np.arange(n, dtype=np.int64)
    rev = np.zeros(n, dtype=np.int64)
    for bit in range(log_n):
        rev |= ((idx >> bit) & 1) << (log_n - 1 - bit)
    return rev


@lru_cache(maxsize=None)
def _twiddles(log_half: int, inverse: bool) -> np.ndarray:
    root = root_of_unity(log_half + 1)
    if inverse:
        root = inv(root)
    return powers(root, 1 << log_half)


def _transform(a: np.ndarray, log_n: int, inverse: bool) -> np.ndarray:
    n = 1 << log_n
    lead = a.shape[:-1]
    a = a[..., _bitrev(log_n)]
    for s in range(log_n):
        h = 1 << s
        w = _twiddles(s, inverse)
        blocks = a.reshape(lead + (n // (2 * h), 2, h))
        u = blocks[..., 0, :]
        v = vmul(blocks[..., 1, :], np.broadcast_to(w, blocks[..., 1, :].shape))
        a = np.stack([vadd(u, v), vsub(u, v)], axis=-2).reshape(lead + (n,))
    return a


def _check(values: np.ndarray, domain: EvalDomain) -> None:
    if values.shape[-1] != domain.size:
        raise SizeMismatch(f"expected {domain.size} values, got {values.shape[-1]}")


def _as_batch(values) -> np.ndarray:
    if isinstance(values, np.ndarray) and values.dtype == _U64:
        return values
    arr = np.asarray(values, dtype=object)
    if arr.ndim == 1:
        return as_array(list(arr))
    return np.array([[int(v) % P for v in row] for row in arr], dtype=_U64)


def ntt(coeffs, domain: EvalDomain) -> np.ndarray:
    """Evaluate coefficient vector(s) on every point of ``domain``.

    Accepts a 1-D sequence or a 2-D batch (one polynomial per row).
    """
    a = _as_batch(coeffs)
    _check(a, domain)
    if domain.offset != 1:
        a = vmul(a, np.broadcast_to(powers(domain.offset, domain.size), a.shape))
    return _transform(a, domain.log_size, inverse=False)


def intt(evals, domain: EvalDomain) -> np.ndarray:
    """Inverse of :func:`ntt`: coefficients from evaluations on ``domain``."""
    a = _as_batch(evals)
    _check(a, domain)
    a = _transform(a, domain.log_size, inverse=True)
    n_inv = inv(domain.size)
    if domain.offset != 1:
        scale = powers(inv(domain.offset), domain.size, n_inv)
        return vmul(a, np.broadcast_to(scale, a.shape))
    return vscale(a, n_inv)


def poly_eval(coeffs: Iterable[int], x: int) -> int:
    """Horner evaluation of a coefficient list (lowest degree first)."""
    acc = 0
    for c in reversed(list(coeffs)):
        acc = (acc * x + int(c)) % P
    return acc


def degree(coeffs: Sequence[int]) -> int:
    """Index of the highest nonzero coefficient; -1 for the zero polynomial."""
    nz = np.nonzero(np.asarray(coeffs, dtype=_U64))[0]
    return int(nz[-1]) if len(nz) else -1
