"""Versioned text envelope used by every on-disk artifact.

An envelope looks like::

    -----BEGIN ESAS USER-KEY v1-----
    eyJhdHRyaWJ1dGVzIjogWyJkb2N0b3IiXSwg...
    -----END ESAS USER-KEY-----

The body is padded base64 of the payload bytes.  Structured payloads are
canonical JSON (sorted keys, no whitespace) whose binary fields are themselves
base64 text of the length-prefixed element encodings from :mod:`esas.group`.
"""

from __future__ import annotations

import base64
import binascii
import json
import re
import textwrap
from typing import Any

from .errors import EnvelopeError

FORMAT_VERSION = 1

_HEADER = re.compile(r"^-----BEGIN ESAS ([A-Z0-9-]+) v(\d+)-----$")


def wrap(tag: str, payload: bytes, version: int = FORMAT_VERSION) -> str:
    if not re.fullmatch(r"[A-Z0-9-]+", tag):
        raise EnvelopeError(f"invalid envelope tag {tag!r}")
    body = base64.b64encode(payload).decode("ascii")
    lines = textwrap.wrap(body, 64) or [""]
    return "\n".join(
        [f"-----BEGIN ESAS {tag} v{version}-----", *lines, f"-----END ESAS {tag}-----", ""]
    )


def unwrap(text: str, tag: str | None = None) -> tuple[str, int, bytes]:
    """Return ``(tag, version, payload)``; check the tag when one is expected."""
    lines = [line.strip() for line in text.strip().splitlines()]
    if len(lines) < 2:
        raise EnvelopeError("truncated envelope")
    m = _HEADER.match(lines[0])
    if m is None:
        raise EnvelopeError("missing envelope header")
    found, version = m.group(1), int(m.group(2))
    if lines[-1] != f"-----END ESAS {found}-----":
        raise EnvelopeError("missing or mismatched envelope footer")
    if tag is not None and found != tag:
        raise EnvelopeError(f"expected a {tag} envelope, found {found}")
    if version != FORMAT_VERSION:
        raise EnvelopeError(f"unsupported envelope version {version}")
    try:
        payload = base64.b64decode("".join(lines[1:-1]), validate=True)
    except binascii.Error as exc:
        raise EnvelopeError(f"corrupt envelope body: {exc}") from None
    return found, version, payload


def b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def unb64(text: str) -> bytes:
    try:
        return base64.b64decode(text, validate=True)
    except (binascii.Error, TypeError) as exc:
        raise EnvelopeError(f"corrupt base64 field: {exc}") from None


def canonical_json(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def dump(tag: str, obj: Any) -> str:
    return wrap(tag, canonical_json(obj))


def load(text: str, tag: str) -> Any:
    _, _, payload = unwrap(text, tag)
    try:
        return json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise EnvelopeError(f"corrupt {tag} payload: {exc}") from None
