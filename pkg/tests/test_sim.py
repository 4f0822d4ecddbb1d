"""Data-plane simulator: forwarding, flow mods, packet-out, event stream."""

import random

import pytest

from routecheck.hspace import Ternary
from routecheck.oracle import egress_oracle, random_network
from routecheck.sim import Network, Packet
from routecheck.snapshots import snapshot_of
from routecheck.topology import Action, FlowRule, load_topology

LINE = """
headerwidth 4
switch swA ports 2
switch swB ports 2
link swA:1 swB:1
access swA:2 client alice
access swB:2 client bob
"""

RING = """
headerwidth 4
switch swA ports 3
switch swB ports 3
link swA:1 swB:1
link swB:2 swA:2
access swA:3 client alice
access swB:3 client bob
"""


def rule(prio, match, action):
    return FlowRule(prio, Ternary.parse(match), Action.parse(action))


def make_net(doc=LINE):
    topo = load_topology(doc)
    return topo, Network(topo)


def test_empty_tables_drop_single_hop():
    _, net = make_net()
    paths = net.forward(Packet(0b1010), ("swA", "2"))
    assert len(paths) == 1
    assert paths[0].outcome == "drop"
    assert len(paths[0].hops) == 1
    assert paths[0].hops[0].switch == "swA"


def test_two_hop_egress_at_peer():
    topo, net = make_net()
    net.apply_flow_mod("swA", "add", rule(5, "xxxx", "fwd:1"))
    net.apply_flow_mod("swB", "add", rule(5, "xxxx", "fwd:2"))
    paths = net.forward(Packet(0b0001), ("swA", "2"))
    assert len(paths) == 1
    path = paths[0]
    assert path.outcome == "egress"
    assert path.egress.alias == "bob:ap1"
    assert [h.switch for h in path.hops] == ["swA", "swB"]


def test_trace_hops_cross_existing_links():
    topo, net = make_net()
    net.apply_flow_mod("swA", "add", rule(5, "xxxx", "fwd:1"))
    net.apply_flow_mod("swB", "add", rule(5, "xxxx", "fwd:2"))
    for path in net.forward(Packet(3), ("swA", "2")):
        for a, b in zip(path.hops, path.hops[1:]):
            out_port = a.action.split(":", 1)[1]
            assert topo.peer(a.switch, out_port) == (b.switch, b.in_port)


def test_loop_is_reported_not_raised():
    _, net = make_net(RING)
    net.apply_flow_mod("swA", "add", rule(5, "xxxx", "fwd:1"))
    net.apply_flow_mod("swB", "add", rule(5, "xxxx", "fwd:2"))
    paths = net.forward(Packet(0), ("swA", "3"))
    assert [p.outcome for p in paths] == ["loop"]


def test_rewrite_changes_header_on_egress():
    _, net = make_net()
    net.apply_flow_mod("swA", "add", rule(5, "xxxx", "rewrite:1000/1xxx:1"))
    net.apply_flow_mod("swB", "add", rule(5, "xxxx", "fwd:2"))
    paths = net.inject(Packet(0b0011), ("swA", "2"))
    assert paths[0].outcome == "egress"
    assert net.deliveries[-1].packet.header == 0b1011


def test_multicast_yields_one_subtrace_per_port():
    doc = """
headerwidth 4
switch swA ports 3
switch swB ports 2
link swA:1 swB:1
access swA:2 client alice
access swA:3 client carol
access swB:2 client bob
"""
    _, net = make_net(doc)
    net.apply_flow_mod("swA", "add", rule(5, "xxxx", "fwd:1,3"))
    net.apply_flow_mod("swB", "add", rule(5, "xxxx", "fwd:2"))
    paths = net.inject(Packet(1), ("swA", "2"))
    assert sorted(p.outcome for p in paths) == ["egress", "egress"]
    assert {d.client for d in net.deliveries} == {"bob", "carol"}


def test_to_controller_emits_packet_in():
    _, net = make_net()
    net.apply_flow_mod("swA", "add", rule(9, "1xxx", "ctrl"))
    net.inject(Packet(0b1000, b"hello"), ("swA", "2"))
    pkt_ins = [e for e in net.events if e.kind == "packet_in"]
    assert len(pkt_ins) == 1
    assert pkt_ins[0].switch == "swA"
    assert pkt_ins[0].in_port == "2"
    assert pkt_ins[0].packet.payload == b"hello"


def test_forward_requires_access_point():
    _, net = make_net()
    with pytest.raises(ValueError, match="not an access point"):
        net.forward(Packet(0), ("swA", "1"))


# -- flow mods ----------------------------------------------------------------


def test_add_then_remove_restores_table():
    _, net = make_net()
    before = net.tables["swA"].rules
    r = rule(5, "1xxx", "fwd:1")
    net.apply_flow_mod("swA", "add", r)
    ev = net.apply_flow_mod("swA", "remove", rule(5, "1xxx", "fwd:1"))
    assert net.tables["swA"].rules == before
    assert ev.noop is False


def test_remove_absent_rule_is_flagged_noop():
    _, net = make_net()
    ev = net.apply_flow_mod("swA", "remove", rule(5, "1xxx", "fwd:1"))
    assert ev.noop is True
    assert ev.kind == "flowmod"


def test_same_priority_lookup_order_is_insertion_order():
    _, net = make_net()
    first = rule(5, "xxxx", "fwd:1")
    second = rule(5, "xxxx", "drop")
    net.apply_flow_mod("swA", "add", first)
    net.apply_flow_mod("swA", "add", second)
    assert net.tables["swA"].match_header(0) == first


def test_event_seq_strictly_increases_per_switch():
    _, net = make_net()
    for i in range(5):
        net.apply_flow_mod("swA", "add", rule(i, "xxxx", "drop"))
        net.apply_flow_mod("swB", "add", rule(i, "xxxx", "drop"))
    for sw in ("swA", "swB"):
        seqs = [e.seq for e in net.events if e.switch == sw]
        assert seqs == list(range(1, 6))


def test_flowmod_validates_ports_and_width():
    _, net = make_net()
    with pytest.raises(ValueError, match="no port"):
        net.apply_flow_mod("swA", "add", rule(1, "xxxx", "fwd:9"))
    with pytest.raises(ValueError, match="width"):
        net.apply_flow_mod("swA", "add", rule(1, "xx", "drop"))


def test_replayed_mod_sequence_matches_simple_replay():
    """Final table equals an order-preserving replay of the same script."""
    _, net = make_net()
    rng = random.Random(4)
    script = []
    live = []
    for _ in range(50):
        if live and rng.random() < 0.4:
            r = rng.choice(live)
            script.append(("remove", r))
        else:
            r = rule(rng.randint(0, 3), rng.choice(["xxxx", "1xxx", "0xxx", "x1xx"]), "drop")
            script.append(("add", r))
        if script[-1][0] == "add":
            live.append(script[-1][1])
        else:
            live.remove(script[-1][1])
    for op, r in script:
        net.apply_flow_mod("swA", op, r)
    replay = []
    for op, r in script:
        if op == "add":
            replay.append(r)
        else:
            replay.remove(r)
    assert sorted(net.tables["swA"].rules, key=str) == sorted(replay, key=str)


# -- packet out ------------------------------------------------------------------


def test_packet_out_at_access_point_delivers():
    _, net = make_net()
    deliveries = net.packet_out("swA", "2", Packet(0b0101, b"x"))
    assert len(deliveries) == 1
    assert deliveries[0].client == "alice"


def test_packet_out_internal_enters_neighbor_pipeline():
    _, net = make_net()
    deliveries = net.packet_out("swA", "1", Packet(0))
    assert deliveries == []  # neighbor table empty: dropped there
    net.apply_flow_mod("swB", "add", rule(5, "xxxx", "fwd:2"))
    deliveries = net.packet_out("swA", "1", Packet(0))
    assert [d.client for d in deliveries] == ["bob"]


def test_packet_out_unknown_port():
    _, net = make_net()
    with pytest.raises(ValueError, match="no port"):
        net.packet_out("swA", "9", Packet(0))


# -- cross-module oracle -----------------------------------------------------------


def test_forward_egress_agrees_with_state_walk_oracle():
    """forward() and the engine-side walk oracle agree on egress sets."""
    for i in range(10):
        topo, net = random_network(f"sim-oracle-{i}", width=6, max_switches=4, max_rules=8)
        walk = egress_oracle(topo, snapshot_of(net))
        rng = random.Random(i)
        for ap in topo.access_points:
            for _ in range(40):
                h = rng.getrandbits(topo.width)
                got = {p.egress.alias for p in net.forward(Packet(h), (ap.switch, ap.port)) if p.outcome == "egress"}
                assert got == set(walk(ap, h)), f"ap={ap.alias} header={h:06b}"
