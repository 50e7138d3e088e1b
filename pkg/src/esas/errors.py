"""Exception hierarchy shared by every layer of the package."""

from __future__ import annotations


class EsasError(Exception):
    """Base class for protocol and crypto failures."""


class UnsupportedSecurityLevel(EsasError):
    pass


class AuthenticationError(EsasError):
    """Symmetric decryption failed (tampered ciphertext or wrong key)."""


class EnvelopeError(EsasError):
    pass


class PolicySyntaxError(EsasError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class PolicyError(EsasError):
    """Structurally invalid access tree (threshold bounds, empty gates)."""


class AttributeNotHeld(EsasError):
    pass


class TreeUnsatisfied(EsasError):
    def __init__(self, message: str = "access tree unsatisfied"):
        super().__init__(message)


class DimensionMismatch(EsasError):
    pass


class VocabularyError(EsasError):
    pass


class CapacityExceeded(VocabularyError):
    pass


class UnknownTriple(VocabularyError):
    pass


class SignatureError(EsasError):
    pass


class DuplicateId(EsasError):
    pass


class UnknownEntity(EsasError):
    pass


class WorkspaceError(EsasError):
    pass


class TripleFormatError(EsasError):
    pass
