"""In-band protocol: keys, sealing, interception, sessions, negatives."""

import random

import pytest

from routecheck.keys import KeyRegistry, SealKeyPair, SigningKey, seal
from routecheck.protocol import (
    Controller,
    InterceptError,
    build_agents,
    default_magic,
    encode_query,
    verify_report,
)
from routecheck.scenario import parse_scenario, run_scenario
from routecheck.sim import Network, Packet, SwitchEvent
from routecheck.topology import load_topology
from routecheck import wire

# alice spans swA/swB; bob and mallory sit behind switches that hold no
# forwarding rules in the benign state, so nothing routes them inward
DOC = """
headerwidth 8
switch swA ports 2
switch swB ports 4
switch swC ports 2
switch swD ports 2
link swA:1 swB:1
link swB:3 swC:1
link swB:4 swD:1
access swA:2 client alice
access swB:2 client alice
access swC:2 client bob
access swD:2 client mallory
nokey mallory
"""


def setup():
    topo = load_topology(DOC)
    registry, signing = KeyRegistry.provision(topo, seed=5)
    magic = default_magic(topo.width)
    net = Network(topo)
    controller = Controller(topo, registry, magic, seed=5, poll_rate=0.01)
    controller.install_magic_rules(net)
    agents = build_agents(topo, registry, signing, magic, seed=5)
    return topo, registry, signing, magic, net, controller, agents


# -- keys -------------------------------------------------------------------


def test_provisioning_is_deterministic_and_skips_nokey():
    topo = load_topology(DOC)
    r1, s1 = KeyRegistry.provision(topo, seed=5)
    r2, s2 = KeyRegistry.provision(topo, seed=5)
    assert set(r1.client_keys) == {"alice", "bob"}
    assert "mallory" not in s1
    assert r1.controller_signing.verify_key.raw == r2.controller_signing.verify_key.raw
    assert {c: k.raw for c, k in r1.client_keys.items()} == {c: k.raw for c, k in r2.client_keys.items()}


def test_sign_verify_and_wrong_key():
    rng = random.Random(1)
    a = SigningKey(rng.randbytes(32))
    b = SigningKey(rng.randbytes(32))
    msg = b"the message"
    sig = a.sign(msg)
    assert a.verify_key.verify(sig, msg) is True
    assert a.verify_key.verify(sig, msg + b"!") is False
    assert b.verify_key.verify(sig, msg) is False


def test_seal_unseal_roundtrip_and_tamper():
    rng = random.Random(2)
    pair = SealKeyPair(rng.randbytes(32))
    blob = seal(pair.public_raw, b"secret query", rng)
    assert pair.unseal(blob) == b"secret query"
    tampered = bytearray(blob)
    tampered[-1] ^= 1
    with pytest.raises(ValueError):
        pair.unseal(bytes(tampered))
    other = SealKeyPair(rng.randbytes(32))
    with pytest.raises(ValueError):
        other.unseal(blob)


def test_attestation_names_controller_key():
    topo = load_topology(DOC)
    registry, _ = KeyRegistry.provision(topo, seed=5)
    text = registry.attestation()
    assert registry.controller_signing.verify_key.fingerprint() in text


# -- encoding and interception -------------------------------------------------


def test_encoded_query_matches_magic_space():
    topo, registry, signing, magic, net, controller, agents = setup()
    packet, point = agents["alice"].make_query("isolation")
    assert magic.matches(packet.header)
    assert point == ("swA", "2")


def test_encode_decode_roundtrip_under_controller_key():
    topo, registry, signing, magic, net, controller, agents = setup()
    rng = random.Random(3)
    nonce = rng.randbytes(16)
    packet = encode_query("geo", "alice", nonce, [("k", "v")], magic, registry.controller_seal.public_raw, rng)
    msg = wire.parse_frame(packet.payload)
    plaintext = registry.controller_seal.unseal(msg.sealed)
    assert wire.decode_query_plaintext(plaintext) == ("geo", "alice", nonce, [("k", "v")])


def pkt_in(net, switch, port, packet):
    return SwitchEvent(seq=99, tick=net.tick, switch=switch, kind="packet_in", in_port=port, packet=packet)


def test_intercept_valid_query():
    topo, registry, signing, magic, net, controller, agents = setup()
    packet, point = agents["alice"].make_query("isolation")
    q = controller.intercept(pkt_in(net, point[0], point[1], packet))
    assert q.client == "alice"
    assert q.kind == "isolation"
    assert q.request_point.alias == "alice:ap1"


def test_intercept_rejects_replay():
    topo, registry, signing, magic, net, controller, agents = setup()
    packet, point = agents["alice"].make_query("isolation")
    controller.intercept(pkt_in(net, point[0], point[1], packet))
    with pytest.raises(InterceptError, match="replayed"):
        controller.intercept(pkt_in(net, point[0], point[1], packet))


def test_intercept_rejects_spoofed_ingress():
    topo, registry, signing, magic, net, controller, agents = setup()
    packet, _ = agents["alice"].make_query("isolation")
    with pytest.raises(InterceptError, match="spoofed"):
        controller.intercept(pkt_in(net, "swC", "2", packet))  # bob's port


def test_intercept_rejects_garbage_and_unenrolled():
    topo, registry, signing, magic, net, controller, agents = setup()
    with pytest.raises(InterceptError, match="unparseable"):
        controller.intercept(pkt_in(net, "swA", "2", Packet(magic.value, b"\xff")))
    with pytest.raises(InterceptError, match="decryption failed"):
        controller.intercept(pkt_in(net, "swA", "2", Packet(magic.value, b"\x01\x01\x00\x05junk!")))
    rng = random.Random(9)
    stray = encode_query("geo", "mallory", rng.randbytes(16), [], magic, registry.controller_seal.public_raw, rng)
    with pytest.raises(InterceptError, match="not enrolled"):
        controller.intercept(pkt_in(net, "swD", "2", stray))


# -- full in-band sessions -------------------------------------------------------


BENIGN_RULES = (
    "@0 flowmod add swA prio=10 match=0xxxxxxx action=fwd:1\n"
    "@0 flowmod add swB prio=10 match=0xxxxxxx action=fwd:2\n"
    "@0 flowmod add swB prio=10 match=1xxxxxxx action=fwd:1\n"
    "@0 flowmod add swA prio=10 match=1xxxxxxx action=fwd:2\n"
)


def run_with_controller(topo, net, controller, agents, text):
    script = parse_scenario(text, topo)
    return run_scenario(script, net, seed=5, controller=controller, agents=agents)


def test_encoded_query_travels_in_band_to_exactly_one_packet_in():
    topo, registry, signing, magic, net, controller, agents = setup()
    run_with_controller(topo, net, controller, agents, "@1 query client=alice kind=geo\n")
    queries = [e for e in net.events if e.kind == "packet_in" and wire.parse_frame(e.packet.payload).msgtype == wire.MSG_QUERY]
    assert len(queries) == 1
    assert queries[0].switch == "swA" and queries[0].in_port == "2"


def test_isolation_session_counts_and_verification():
    topo, registry, signing, magic, net, controller, agents = setup()
    run_with_controller(topo, net, controller, agents, BENIGN_RULES + "@2 query client=alice kind=isolation\n")
    assert len(controller.reports_sent) == 1
    tick, client, kind, frame, body = controller.reports_sent[0]
    ok, report = verify_report(frame, registry.controller_signing.verify_key)
    assert ok
    # alice talks to herself across both sites; both endpoints respond
    assert report.requested == report.received == 2
    assert report.param("verified") == "alice:ap1,alice:ap2"
    assert "foreign=-" in body
    # the querying client received and verified the same report
    assert [(ok2, r.kind) for _, ok2, r in agents["alice"].reports] == [(True, "isolation")]


def test_auth_fanout_delivers_one_challenge_per_candidate():
    topo, registry, signing, magic, net, controller, agents = setup()
    run_with_controller(topo, net, controller, agents, BENIGN_RULES + "@2 query client=alice kind=isolation\n")
    challenges = [
        d for d in net.deliveries if wire.parse_frame(d.packet.payload).msgtype == wire.MSG_CHALLENGE
    ]
    assert {(d.switch, d.port) for d in challenges} == {("swA", "2"), ("swB", "2")}


def test_unanswered_challenge_shows_as_shortfall():
    """A hidden endpoint with no key cannot respond: requested - received = 1."""
    topo, registry, signing, magic, net, controller, agents = setup()
    attack = "@1 attack join client=alice hidden=swD:2 match=11xxxxxx prio=90\n"
    run_with_controller(
        topo, net, controller, agents, BENIGN_RULES + attack + "@3 query client=alice kind=isolation\n"
    )
    tick, client, kind, frame, body = controller.reports_sent[0]
    ok, report = verify_report(frame, registry.controller_signing.verify_key)
    assert ok
    assert report.requested - report.received == 1
    assert "foreign=mallory:ap1" in body
    assert any(f.kind == "isolation" for f in controller.findings)


def test_zero_candidates_reports_zero_counts():
    """A client alone behind a rule-less switch gets a (0, 0) report."""
    topo, registry, signing, magic, net, controller, agents = setup()
    run_with_controller(topo, net, controller, agents, "@1 query client=bob kind=isolation\n")
    assert len(controller.reports_sent) == 1
    _, client, kind, frame, body = controller.reports_sent[0]
    ok, report = verify_report(frame, registry.controller_signing.verify_key)
    assert ok and client == "bob"
    assert (report.requested, report.received) == (0, 0)
    assert "own=-" in body and "foreign=-" in body


def test_counting_soundness_against_transcript():
    topo, registry, signing, magic, net, controller, agents = setup()
    run_with_controller(topo, net, controller, agents, BENIGN_RULES + "@2 query client=alice kind=isolation\n")
    _, _, _, frame, _ = controller.reports_sent[0]
    _, report = verify_report(frame, registry.controller_signing.verify_key)
    challenges = [d for d in net.deliveries if wire.parse_frame(d.packet.payload).msgtype == wire.MSG_CHALLENGE]
    replies = [
        e for e in net.events if e.kind == "packet_in" and wire.parse_frame(e.packet.payload).msgtype == wire.MSG_REPLY
    ]
    assert report.requested == len(challenges)
    assert report.received == len(replies)
    # binding: every verified endpoint was an actual challenge target
    verified = set(report.param("verified").split(","))
    targets = {wire.parse_frame(d.packet.payload).alias for d in challenges}
    assert verified <= targets


# -- report verification negatives ---------------------------------------------


def make_report(registry):
    unsigned = wire.report_unsigned("isolation", bytes(range(16)), 2, 2, [("body", "kind=isolation")])
    return wire.frame_report(unsigned, registry.controller_signing.sign(unsigned))


def test_verify_report_untampered_true():
    topo = load_topology(DOC)
    registry, _ = KeyRegistry.provision(topo, seed=5)
    frame = make_report(registry)
    ok, report = verify_report(frame, registry.controller_signing.verify_key, expected_nonce=bytes(range(16)))
    assert ok and report.requested == 2


def test_verify_report_flipped_bit_false():
    topo = load_topology(DOC)
    registry, _ = KeyRegistry.provision(topo, seed=5)
    frame = bytearray(make_report(registry))
    frame[10] ^= 0x01
    ok, _ = verify_report(bytes(frame), registry.controller_signing.verify_key)
    assert not ok


def test_verify_report_wrong_key_false():
    topo = load_topology(DOC)
    registry, _ = KeyRegistry.provision(topo, seed=5)
    other = SigningKey(random.Random(77).randbytes(32))
    frame = make_report(registry)
    ok, _ = verify_report(frame, other.verify_key)
    assert not ok


def test_verify_report_nonce_mismatch_false():
    topo = load_topology(DOC)
    registry, _ = KeyRegistry.provision(topo, seed=5)
    frame = make_report(registry)
    ok, _ = verify_report(frame, registry.controller_signing.verify_key, expected_nonce=bytes(16))
    assert not ok


# -- reply negatives ---------------------------------------------------------------


def test_forged_reply_is_rejected():
    """A reply signed with an unregistered key never verifies."""
    topo, registry, signing, magic, net, controller, agents = setup()
    attack = "@1 attack join client=alice hidden=swD:2 match=11xxxxxx prio=90\n"
    # mallory tries to answer her own challenge with a made-up key
    rogue = SigningKey(random.Random(123).randbytes(32))

    class RogueAgent:
        def on_delivery(self, delivery, tick, send_later):
            msg = wire.parse_frame(delivery.packet.payload)
            if msg.msgtype != wire.MSG_CHALLENGE:
                return
            signed = wire.reply_signed_portion(msg.nonce, "mallory", msg.alias)
            reply = wire.frame_reply(msg.nonce, "mallory", msg.alias, rogue.sign(signed))
            send_later(tick + 1, delivery.switch, delivery.port, Packet(magic.value, reply))

    agents = dict(agents)
    agents["mallory"] = RogueAgent()
    run_with_controller(
        topo, net, controller, agents, BENIGN_RULES + attack + "@3 query client=alice kind=isolation\n"
    )
    _, _, _, frame, _ = controller.reports_sent[0]
    _, report = verify_report(frame, registry.controller_signing.verify_key)
    assert report.requested - report.received == 1  # rogue reply did not count
    assert any("unenrolled" in r for _, r in controller.rejects)


def test_replayed_auth_reply_rejected():
    """The same signed reply presented twice verifies once."""
    topo, registry, signing, magic, net, controller, agents = setup()

    replayed = []

    class ReplayingAgent:
        def __init__(self, inner):
            self.inner = inner

        def make_query(self, *args, **kwargs):
            return self.inner.make_query(*args, **kwargs)

        def on_delivery(self, delivery, tick, send_later):
            msg = wire.parse_frame(delivery.packet.payload)
            if msg.msgtype == wire.MSG_CHALLENGE and delivery.switch == "swB":
                def tee(t, sw, port, packet):
                    send_later(t, sw, port, packet)
                    send_later(t + 1, sw, port, packet)  # replay one tick later
                    replayed.append(packet)
                self.inner.on_delivery(delivery, tick, tee)
            else:
                self.inner.on_delivery(delivery, tick, send_later)

    agents = dict(agents)
    agents["alice"] = ReplayingAgent(agents["alice"])
    run_with_controller(topo, net, controller, agents, BENIGN_RULES + "@2 query client=alice kind=isolation\n")
    assert replayed
    _, _, _, frame, _ = controller.reports_sent[0]
    _, report = verify_report(frame, registry.controller_signing.verify_key)
    assert report.received == report.requested == 2  # counted once
    assert any("unknown or already-used" in r for _, r in controller.rejects)
