import pytest
from hypothesis import given
from hypothesis import strategies as st

from esas import envelope
from esas.errors import EnvelopeError


@given(st.binary(max_size=500))
def test_wrap_round_trip(payload):
    text = envelope.wrap("USER-KEY", payload)
    assert envelope.unwrap(text, "USER-KEY") == ("USER-KEY", 1, payload)
    assert all(len(line) <= 64 for line in text.splitlines()[1:-1])


def test_dump_is_canonical():
    a = envelope.dump("X", {"b": 1, "a": [1, 2]})
    b = envelope.dump("X", {"a": [1, 2], "b": 1})
    assert a == b
    assert envelope.load(a, "X") == {"a": [1, 2], "b": 1}


def test_wrong_tag_rejected():
    with pytest.raises(EnvelopeError, match="expected a Y envelope"):
        envelope.load(envelope.dump("X", {}), "Y")


@pytest.mark.parametrize(
    "text",
    [
        "",
        "garbage\nmore",
        "-----BEGIN ESAS X v1-----\nAAAA\n-----END ESAS Y-----",
        "-----BEGIN ESAS X v2-----\nAAAA\n-----END ESAS X-----",
        "-----BEGIN ESAS X v1-----\n@@@@\n-----END ESAS X-----",
    ],
)
def test_malformed_envelopes(text):
    with pytest.raises(EnvelopeError):
        envelope.unwrap(text)


def test_corrupt_json_payload():
    with pytest.raises(EnvelopeError):
        envelope.load(envelope.wrap("X", b"{not json"), "X")


def test_bad_base64_field():
    with pytest.raises(EnvelopeError):
        envelope.unb64("***")
