"""Secure kNN inner-product encryption over exact rationals.

Index side:  Vc* = (Vc, 1), split by S (copy where S[t] = 0, random sum where
S[t] = 1), encrypted as {M1^T Vc', M2^T Vc''}.
Query side:  Q* = (a Q, r'), split the complementary way, encrypted as
{M1^-1 Q', M2^-1 Q''}.  The two halves' inner products sum to a (Vc . Q) + r'.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional, Sequence

from . import envelope
from .errors import DimensionMismatch
from .group import RandomSource, default_rng

Vector = tuple[Fraction, ...]
Matrix = tuple[tuple[int, ...], ...]

SPLIT_BOUND = 2**20
MATRIX_BOUND = 2**20
SCALE_BOUND = 2**20


def _vec(values: Sequence) -> Vector:
    return tuple(Fraction(v) for v in values)


def _rand_int(rng: RandomSource, bound: int) -> int:
    return rng.randrange(-bound, bound + 1)


def integer_adjugate(m: Sequence[Sequence[int]]) -> tuple[int, Matrix]:
    """Return ``(det, adj)`` with ``m^-1 = adj / det``, via fraction-free Gauss-Jordan.

    Raises ZeroDivisionError if the matrix is singular.
    """
    n = len(m)
    a = [list(row) + [int(i == j) for j in range(n)] for i, row in enumerate(m)]
    sign, prev = 1, 1
    for k in range(n):
        pivot = next((i for i in range(k, n) if a[i][k] != 0), None)
        if pivot is None:
            raise ZeroDivisionError("singular matrix")
        if pivot != k:
            a[k], a[pivot] = a[pivot], a[k]
            sign = -sign
        akk = a[k][k]
        rowk = a[k]
        for i in range(n):
            if i == k:
                continue
            row = a[i]
            aik = row[k]
            for j in range(2 * n):
                if j != k:
                    row[j] = (akk * row[j] - aik * rowk[j]) // prev
            row[k] = 0
        prev = akk
    # every diagonal entry now equals the last pivot, which is sign * det
    return sign * prev, tuple(tuple(sign * x for x in row[n:]) for row in a)


def _common(v: Sequence[Fraction]) -> tuple[list[int], int]:
    """Scale a rational vector to integers over the lcm of its denominators."""
    den = 1
    for x in v:
        d = x.denominator
        if den % d:
            den = den // math.gcd(den, d) * d
    return [x.numerator * (den // x.denominator) for x in v], den


def _checked_adjugate(m: Matrix) -> tuple[int, Matrix]:
    try:
        return integer_adjugate(m)
    except ZeroDivisionError:
        raise ValueError("key matrix is singular") from None


def dot(x: Sequence, y: Sequence) -> Fraction:
    if len(x) != len(y):
        raise DimensionMismatch(f"dot product of length {len(x)} and {len(y)}")
    xi, dx = _common(_vec(x))
    yi, dy = _common(_vec(y))
    return Fraction(sum(a * b for a, b in zip(xi, yi)), dx * dy)


@dataclass(frozen=True)
class OwnerKey:
    """S plus two invertible matrices; inverses are derived on first use."""

    n: int
    S: tuple[int, ...]
    m1: Matrix
    m2: Matrix

    @classmethod
    def from_parts(cls, S: Sequence[int], m1: Sequence[Sequence[int]], m2: Sequence[Sequence[int]]) -> "OwnerKey":
        size = len(S)
        if size < 2 or any(b not in (0, 1) for b in S):
            raise ValueError("S must be a bit vector of length n+1 >= 2")
        for m in (m1, m2):
            if len(m) != size or any(len(row) != size for row in m):
                raise DimensionMismatch("matrices must be (n+1)x(n+1)")
        return cls(
            n=size - 1,
            S=tuple(S),
            m1=tuple(tuple(int(v) for v in r) for r in m1),
            m2=tuple(tuple(int(v) for v in r) for r in m2),
        )

    @functools.cached_property
    def inverse1(self) -> tuple[int, Matrix]:
        """``(det, adj)`` of M1."""
        return _checked_adjugate(self.m1)

    @functools.cached_property
    def inverse2(self) -> tuple[int, Matrix]:
        return _checked_adjugate(self.m2)

    @property
    def m1_inv(self) -> tuple[Vector, ...]:
        det, adj = self.inverse1
        return tuple(tuple(Fraction(x, det) for x in row) for row in adj)

    @property
    def m2_inv(self) -> tuple[Vector, ...]:
        det, adj = self.inverse2
        return tuple(tuple(Fraction(x, det) for x in row) for row in adj)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "S": list(self.S),
            "M1": [[str(v) for v in row] for row in self.m1],
            "M2": [[str(v) for v in row] for row in self.m2],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "OwnerKey":
        key = cls.from_parts(
            [int(b) for b in data["S"]],
            [[int(v) for v in row] for row in data["M1"]],
            [[int(v) for v in row] for row in data["M2"]],
        )
        if key.n != int(data["n"]):
            raise DimensionMismatch("stored dimension disagrees with key material")
        return key


def _random_matrix(size: int, rng: RandomSource) -> list[list[int]]:
    return [[_rand_int(rng, MATRIX_BOUND) for _ in range(size)] for _ in range(size)]


def owner_keygen(n: int, rng: Optional[RandomSource] = None) -> OwnerKey:
    if n < 1:
        raise ValueError("vocabulary dimension must be at least 1")
    rng = rng or default_rng()
    size = n + 1
    S = [rng.getrandbits(1) for _ in range(size)]
    m1 = _random_matrix(size, rng)
    m2 = _random_matrix(size, rng)
    inverses = []
    for m in (m1, m2):
        while True:
            try:
                inverses.append(integer_adjugate(m))
                break
            except ZeroDivisionError:
                m[:] = _random_matrix(size, rng)
    key = OwnerKey.from_parts(S, m1, m2)
    # the inverses were just computed; keep them
    key.__dict__["inverse1"], key.__dict__["inverse2"] = inverses
    return key


# -- vectors -----------------------------------------------------------------


@dataclass(frozen=True)
class PlainVector:
    values: Vector
    vocab_version: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _vec(self.values))
        if any(v < 0 for v in self.values):
            raise ValueError("plain vector entries must be non-negative")

    def __len__(self) -> int:
        return len(self.values)


def _encode_vector(v: Vector) -> list[list[str]]:
    return [[str(x.numerator), str(x.denominator)] for x in v]


def _decode_vector(data: Sequence) -> Vector:
    return tuple(Fraction(int(num), int(den)) for num, den in data)


@dataclass(frozen=True)
class SecureIndex:
    first: Vector
    second: Vector
    vocab_version: int = 0

    @property
    def dimension(self) -> int:
        return len(self.first) - 1

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "vocab_version": self.vocab_version,
            "first": _encode_vector(self.first),
            "second": _encode_vector(self.second),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "SecureIndex":
        obj = cls(_decode_vector(data["first"]), _decode_vector(data["second"]), int(data["vocab_version"]))
        if obj.dimension != int(data["dimension"]) or len(obj.second) != len(obj.first):
            raise DimensionMismatch("secure index halves disagree with stored dimension")
        return obj


@dataclass(frozen=True)
class Trapdoor:
    first: Vector
    second: Vector
    vocab_version: int = 0

    @property
    def dimension(self) -> int:
        return len(self.first) - 1

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "vocab_version": self.vocab_version,
            "first": _encode_vector(self.first),
            "second": _encode_vector(self.second),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Trapdoor":
        obj = cls(_decode_vector(data["first"]), _decode_vector(data["second"]), int(data["vocab_version"]))
        if obj.dimension != int(data["dimension"]) or len(obj.second) != len(obj.first):
            raise DimensionMismatch("trapdoor halves disagree with stored dimension")
        return obj

    def to_bytes(self) -> bytes:
        return envelope.canonical_json(self.to_dict())


# -- index side --------------------------------------------------------------


def extend_index_vector(vc: PlainVector | Sequence) -> Vector:
    values = vc.values if isinstance(vc, PlainVector) else _vec(vc)
    return values + (Fraction(1),)


def split_index_vector(
    vstar: Sequence, S: Sequence[int], rng: Optional[RandomSource] = None
) -> tuple[Vector, Vector]:
    if len(vstar) != len(S):
        raise DimensionMismatch("split vector and S differ in length")
    rng = rng or default_rng()
    first, second = [], []
    for value, bit in zip(_vec(vstar), S):
        if bit == 0:
            first.append(value)
            second.append(value)
        else:
            part = Fraction(_rand_int(rng, SPLIT_BOUND))
            first.append(part)
            second.append(value - part)
    return tuple(first), tuple(second)


def _transpose_apply(m: Matrix, v: Vector) -> Vector:
    vi, den = _common(v)
    size = len(m)
    return tuple(Fraction(sum(m[i][j] * vi[i] for i in range(size)), den) for j in range(size))


def _apply_inverse(adj: Matrix, det: int, v: Vector) -> Vector:
    vi, den = _common(v)
    return tuple(Fraction(sum(a * b for a, b in zip(row, vi)), det * den) for row in adj)


def encrypt_index(okey: OwnerKey, vc: PlainVector, rng: Optional[RandomSource] = None) -> SecureIndex:
    if len(vc) != okey.n:
        raise DimensionMismatch(f"index vector has dimension {len(vc)}, key expects {okey.n}")
    first, second = split_index_vector(extend_index_vector(vc), okey.S, rng)
    return SecureIndex(
        _transpose_apply(okey.m1, first),
        _transpose_apply(okey.m2, second),
        vc.vocab_version,
    )


# -- query side --------------------------------------------------------------


def extend_query_vector(q: PlainVector | Sequence, a, r_prime) -> Vector:
    a, r_prime = Fraction(a), Fraction(r_prime)
    if a <= 0:
        raise ValueError("query scale a must be positive")
    if r_prime == 0:
        raise ValueError("query offset r' cannot be 0")
    values = q.values if isinstance(q, PlainVector) else _vec(q)
    return tuple(a * v for v in values) + (r_prime,)


def split_query_vector(
    qstar: Sequence, S: Sequence[int], rng: Optional[RandomSource] = None
) -> tuple[Vector, Vector]:
    if len(qstar) != len(S):
        raise DimensionMismatch("split vector and S differ in length")
    rng = rng or default_rng()
    first, second = [], []
    for value, bit in zip(_vec(qstar), S):
        if bit == 1:
            first.append(value)
            second.append(value)
        else:
            part = Fraction(_rand_int(rng, SPLIT_BOUND))
            first.append(part)
            second.append(value - part)
    return tuple(first), tuple(second)


def gen_trapdoor(
    okey: OwnerKey, q: PlainVector, rng: Optional[RandomSource] = None
) -> tuple[Trapdoor, int, int]:
    """Return the trapdoor plus the (a, r') it used; the latter are for oracles only."""
    if len(q) != okey.n:
        raise DimensionMismatch(f"query vector has dimension {len(q)}, key expects {okey.n}")
    rng = rng or default_rng()
    a = rng.randrange(1, SCALE_BOUND + 1)
    r_prime = 0
    while r_prime == 0:
        r_prime = _rand_int(rng, SCALE_BOUND)
    first, second = split_query_vector(extend_query_vector(q, a, r_prime), okey.S, rng)
    td = Trapdoor(
        _apply_inverse(okey.inverse1[1], okey.inverse1[0], first),
        _apply_inverse(okey.inverse2[1], okey.inverse2[0], second),
        q.vocab_version,
    )
    return td, a, r_prime


def score(ic: SecureIndex, td: Trapdoor) -> Fraction:
    if len(ic.first) != len(td.first) or len(ic.second) != len(td.second):
        raise DimensionMismatch(
            f"index dimension {ic.dimension} does not match trapdoor dimension {td.dimension}"
        )
    return dot(ic.first, td.first) + dot(ic.second, td.second)
