"""Wire formats: byte-exact round trips and malformed-input rejection."""

import pytest

from routecheck import wire


def test_query_plaintext_roundtrip():
    nonce = bytes(range(16))
    buf = wire.encode_query_plaintext("isolation", "alice", nonce, [("a", "1"), ("b", "x=y")])
    kind, client, got_nonce, params = wire.decode_query_plaintext(buf)
    assert (kind, client, got_nonce) == ("isolation", "alice", nonce)
    assert params == [("a", "1"), ("b", "x=y")]


def test_query_plaintext_size_bound():
    nonce = bytes(16)
    with pytest.raises(wire.WireError, match="exceeds"):
        wire.encode_query_plaintext("geo", "c", nonce, [("blob", "z" * 2000)])


def test_query_frame_roundtrip():
    framed = wire.frame_query(b"sealed-bytes")
    msg = wire.parse_frame(framed)
    assert msg.msgtype == wire.MSG_QUERY
    assert msg.sealed == b"sealed-bytes"


def test_challenge_roundtrip():
    nonce = bytes(range(16))
    framed = wire.frame_challenge(nonce, "bob:ap2")
    msg = wire.parse_frame(framed)
    assert msg.msgtype == wire.MSG_CHALLENGE
    assert msg.nonce == nonce
    assert msg.alias == "bob:ap2"


def test_reply_roundtrip_and_signed_portion():
    nonce = bytes(16)
    framed = wire.frame_reply(nonce, "bob", "bob:ap1", b"sig-bytes")
    msg = wire.parse_frame(framed)
    assert msg.msgtype == wire.MSG_REPLY
    assert (msg.client, msg.alias, msg.nonce) == ("bob", "bob:ap1", nonce)
    assert msg.signature == b"sig-bytes"
    assert msg.signed_portion == wire.reply_signed_portion(nonce, "bob", "bob:ap1")


def test_report_roundtrip():
    nonce = bytes(range(16))
    unsigned = wire.report_unsigned("isolation", nonce, 3, 2, [("body", "line1\nline2"), ("verified", "a,b")])
    framed = wire.frame_report(unsigned, b"controller-sig")
    msg = wire.parse_frame(framed)
    r = msg.report
    assert (r.kind, r.nonce, r.requested, r.received) == ("isolation", nonce, 3, 2)
    assert r.param("body") == "line1\nline2"
    assert r.param("verified") == "a,b"
    assert r.signed_portion == unsigned
    assert r.signature == b"controller-sig"


def test_parse_rejects_malformed():
    with pytest.raises(wire.WireError):
        wire.parse_frame(b"")
    with pytest.raises(wire.WireError):
        wire.parse_frame(bytes([9, wire.MSG_QUERY, 0, 0]))  # bad version
    with pytest.raises(wire.WireError):
        wire.parse_frame(bytes([wire.WIRE_VERSION, 200]))  # unknown msgtype
    with pytest.raises(wire.WireError):
        wire.parse_frame(bytes([wire.WIRE_VERSION, wire.MSG_QUERY, 0, 9]) + b"xx")  # length lies
    good = wire.frame_report(wire.report_unsigned("geo", bytes(16), 0, 0, []), b"s")
    with pytest.raises(wire.WireError):
        wire.parse_frame(good[:-1])  # truncated signature


def test_every_nonce_length_checked():
    for fn in (
        lambda: wire.encode_query_plaintext("geo", "c", b"short", []),
        lambda: wire.frame_challenge(b"short", "a"),
        lambda: wire.reply_signed_portion(b"short", "c", "a"),
        lambda: wire.report_unsigned("geo", b"short", 0, 0, []),
    ):
        with pytest.raises(wire.WireError):
            fn()
