"""Pairing group substrate: symmetric facade over BLS12-381, hashing, KDF, AEAD.

The protocol is written for a symmetric pairing e: G1 x G1 -> G2.  BLS12-381
is asymmetric, so a logical source-group :class:`Element` carries the same
discrete log in both underlying groups (``g1`` and ``g2`` representations).
``pair(a, b)`` then evaluates whichever orientation is available.

Hashed elements have an unknown discrete log, so they exist only in the
``g2`` representation.  Anything derived from them (products, powers) is
``g2``-only as well, and pairing two such values is rejected.  The protocol
never needs that: hashed material only ever meets generator-derived material.
"""

from __future__ import annotations

import functools
import os
import secrets
import struct
from dataclasses import dataclass
from typing import Optional, Protocol, Union

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF
from petrelic.multiplicative.pairing import G1, G2, G1Element, G2Element, GTElement

from .errors import AuthenticationError, EnvelopeError, UnsupportedSecurityLevel

KEY_LENGTH = 32
NONCE_LENGTH = 12

_HASH_DST = b"ESAS-V1-H-G1:"
_KDF_SALT = b"ESAS-V1-H1-SALT"
_KDF_INFO = b"ESAS-V1-H1 symmetric document key"

_HAS_G1 = 0x01
_HAS_G2 = 0x02

SUPPORTED_LEVELS = {128: "BLS12-381"}


class RandomSource(Protocol):
    def randrange(self, start: int, stop: int = ..., step: int = ...) -> int: ...

    def getrandbits(self, k: int) -> int: ...


def default_rng() -> RandomSource:
    return secrets.SystemRandom()


def _lp(data: bytes) -> bytes:
    return struct.pack(">H", len(data)) + data


def _read_lp(buf: bytes, offset: int) -> tuple[bytes, int]:
    if offset + 2 > len(buf):
        raise EnvelopeError("truncated element encoding")
    (n,) = struct.unpack_from(">H", buf, offset)
    end = offset + 2 + n
    if end > len(buf):
        raise EnvelopeError("truncated element encoding")
    return buf[offset + 2 : end], end


class Element:
    """Logical source-group element of the symmetric-pairing facade."""

    __slots__ = ("g1", "g2")

    def __init__(self, g1: Optional[G1Element] = None, g2: Optional[G2Element] = None):
        if g1 is None and g2 is None:
            raise ValueError("element needs at least one representation")
        self.g1 = g1
        self.g2 = g2

    def __mul__(self, other: "Element") -> "Element":
        if not isinstance(other, Element):
            return NotImplemented
        g1 = self.g1 * other.g1 if self.g1 is not None and other.g1 is not None else None
        g2 = self.g2 * other.g2 if self.g2 is not None and other.g2 is not None else None
        return Element(g1, g2)

    def __pow__(self, exponent: int) -> "Element":
        return Element(
            self.g1 ** exponent if self.g1 is not None else None,
            self.g2 ** exponent if self.g2 is not None else None,
        )

    def inverse(self) -> "Element":
        return Element(
            self.g1.inverse() if self.g1 is not None else None,
            self.g2.inverse() if self.g2 is not None else None,
        )

    def __truediv__(self, other: "Element") -> "Element":
        return self * other.inverse()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Element):
            return NotImplemented
        if self.g2 is not None and other.g2 is not None:
            if self.g2 != other.g2:
                return False
            if self.g1 is not None and other.g1 is not None:
                return self.g1 == other.g1
            return True
        if self.g1 is not None and other.g1 is not None:
            return self.g1 == other.g1
        raise ValueError("elements share no common representation")

    def __hash__(self) -> int:
        return hash(self.to_bytes())

    def __repr__(self) -> str:
        return f"Element({self.to_bytes().hex()[:16]}...)"

    def to_bytes(self) -> bytes:
        flags = (_HAS_G1 if self.g1 is not None else 0) | (_HAS_G2 if self.g2 is not None else 0)
        out = bytes([flags])
        if self.g1 is not None:
            out += _lp(self.g1.to_binary())
        if self.g2 is not None:
            out += _lp(self.g2.to_binary())
        return out

    @classmethod
    def from_bytes(cls, data: bytes) -> "Element":
        if not data or data[0] not in (1, 2, 3):
            raise EnvelopeError("bad element flags")
        flags, offset = data[0], 1
        g1 = g2 = None
        try:
            if flags & _HAS_G1:
                raw, offset = _read_lp(data, offset)
                g1 = G1Element.from_binary(raw)
            if flags & _HAS_G2:
                raw, offset = _read_lp(data, offset)
                g2 = G2Element.from_binary(raw)
        except EnvelopeError:
            raise
        except Exception as exc:  # petrelic raises bare exceptions on invalid points
            raise EnvelopeError(f"invalid group element: {exc}") from None
        if offset != len(data):
            raise EnvelopeError("trailing bytes after element")
        return cls(g1, g2)


def pair(a: Element, b: Element) -> GTElement:
    if a.g1 is not None and b.g2 is not None:
        return a.g1.pair(b.g2)
    if a.g2 is not None and b.g1 is not None:
        return b.g1.pair(a.g2)
    raise ValueError("pairing of two hash-derived elements is not evaluable")


def encode_gt(value: GTElement) -> bytes:
    return _lp(value.to_binary())


def decode_gt(data: bytes) -> GTElement:
    raw, end = _read_lp(data, 0)
    if end != len(data):
        raise EnvelopeError("trailing bytes after target-group element")
    try:
        return GTElement.from_binary(raw)
    except Exception as exc:
        raise EnvelopeError(f"invalid target-group element: {exc}") from None


def encode_scalar(value: int, order: int) -> bytes:
    if not 0 <= value < order:
        raise ValueError("scalar out of range")
    return _lp(value.to_bytes(32, "big"))


def decode_scalar(data: bytes, order: int) -> int:
    raw, end = _read_lp(data, 0)
    if end != len(data) or len(raw) != 32:
        raise EnvelopeError("bad scalar encoding")
    value = int.from_bytes(raw, "big")
    if value >= order:
        raise EnvelopeError("scalar out of range")
    return value


@dataclass(frozen=True)
class GroupContext:
    curve: str
    security_level: int
    order: int
    g: Element
    gt: GTElement  # e(g, g)

    def random_scalar(self, rng: Optional[RandomSource] = None) -> int:
        """Uniform in [1, p-1]; zero exponents degenerate the scheme."""
        return (rng or default_rng()).randrange(1, self.order)

    def inv(self, x: int) -> int:
        return pow(x, -1, self.order)

    def hash_to_g1(self, label: Union[bytes, str]) -> Element:
        return hash_to_g1(label)

    def pair(self, a: Element, b: Element) -> GTElement:
        return pair(a, b)

    def is_consistent(self, element: Element) -> bool:
        """Both representations carry the same discrete log."""
        if element.g1 is None or element.g2 is None:
            return True
        return element.g1.pair(self.g.g2) == self.g.g1.pair(element.g2)

    def descriptor(self) -> dict:
        return {
            "curve": self.curve,
            "security_level": self.security_level,
            "order": str(self.order),
            "g": self.g.to_bytes().hex(),
        }


@functools.lru_cache(maxsize=None)
def setup_group(security_level: int = 128) -> GroupContext:
    try:
        curve = SUPPORTED_LEVELS[security_level]
    except (KeyError, TypeError):
        raise UnsupportedSecurityLevel(
            f"unsupported security level {security_level!r} (supported: {sorted(SUPPORTED_LEVELS)})"
        ) from None
    g = Element(G1.generator(), G2.generator())
    return GroupContext(
        curve=curve,
        security_level=security_level,
        order=int(G1.order()),
        g=g,
        gt=pair(g, g),
    )


def hash_to_g1(label: Union[bytes, str]) -> Element:
    if isinstance(label, str):
        label = label.encode("utf-8")
    return Element(g2=G2.hash_to_point(_HASH_DST + label))


def random_gt(ctx: GroupContext, rng: Optional[RandomSource] = None) -> GTElement:
    return ctx.gt ** ctx.random_scalar(rng)


def kdf_key(element: Union[Element, GTElement]) -> bytes:
    """Derive a 256-bit symmetric key from the canonical element encoding."""
    if isinstance(element, Element):
        material = b"S" + element.to_bytes()
    elif isinstance(element, GTElement):
        material = b"T" + encode_gt(element)
    else:
        raise TypeError(f"cannot derive a key from {type(element).__name__}")
    return HKDF(algorithm=hashes.SHA256(), length=KEY_LENGTH, salt=_KDF_SALT, info=_KDF_INFO).derive(
        material
    )


def _check_key(key: bytes) -> None:
    if not isinstance(key, (bytes, bytearray)) or len(key) != KEY_LENGTH:
        raise ValueError(f"symmetric key must be {KEY_LENGTH} bytes")


def sym_encrypt(key: bytes, plaintext: bytes, rng: Optional[RandomSource] = None) -> bytes:
    """AES-256-GCM; output is ``nonce || ciphertext || tag``."""
    _check_key(key)
    if rng is None:
        nonce = os.urandom(NONCE_LENGTH)
    else:
        nonce = rng.getrandbits(8 * NONCE_LENGTH).to_bytes(NONCE_LENGTH, "big")
    return nonce + AESGCM(bytes(key)).encrypt(nonce, bytes(plaintext), None)


def sym_decrypt(key: bytes, blob: bytes) -> bytes:
    _check_key(key)
    if len(blob) < NONCE_LENGTH + 16:
        raise AuthenticationError("ciphertext too short")
    try:
        return AESGCM(bytes(key)).decrypt(blob[:NONCE_LENGTH], blob[NONCE_LENGTH:], None)
    except InvalidTag:
        raise AuthenticationError("authentication failed: wrong key or tampered ciphertext") from None
