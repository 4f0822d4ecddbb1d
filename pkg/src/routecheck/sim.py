"""Executable model of the switch infrastructure.

Forwards concrete packets through per-switch flow tables, applies flow
modifications, and records everything that happens: a per-switch ordered
event stream (the controller's input) plus a delivery log of packets
handed to clients at access points. Time is a discrete tick counter owned
by the scenario driver; the simulator itself never advances it.
"""

from __future__ import annotations

from dataclasses import dataclass

from .hspace import Ternary
from .topology import AccessPoint, FlowRule, FlowTable, Topology

HOP_LIMIT_FACTOR = 4


@dataclass(frozen=True)
class Packet:
    header: int
    payload: bytes = b""


@dataclass(frozen=True)
class SwitchEvent:
    seq: int
    tick: int
    switch: str
    kind: str  # "flowmod" | "packet_in" | "port_status"
    op: str = ""  # flowmod: "add" | "remove"
    rule: FlowRule | None = None
    noop: bool = False  # flowmod: removal of an absent rule
    in_port: str = ""  # packet_in
    packet: Packet | None = None  # packet_in

    def line(self, width: int) -> str:
        head = f"seq={self.seq} t={self.tick} sw={self.switch}"
        if self.kind == "flowmod":
            s = f"{head} flowmod {self.op} {self.rule}"
            if self.noop:
                s += " noop=1"
            return s
        if self.kind == "packet_in":
            hdr = format(self.packet.header, f"0{width}b")
            return f"{head} packet_in port={self.in_port} header={hdr} payload_len={len(self.packet.payload)}"
        return f"{head} port_status"


@dataclass(frozen=True)
class Delivery:
    tick: int
    client: str
    switch: str
    port: str
    packet: Packet

    def line(self, width: int) -> str:
        hdr = format(self.packet.header, f"0{width}b")
        return (
            f"t={self.tick} client={self.client} at={self.switch}:{self.port} "
            f"header={hdr} payload_len={len(self.packet.payload)}"
        )


@dataclass(frozen=True)
class TraceHop:
    switch: str
    in_port: str
    rule: FlowRule | None
    action: str  # "fwd:<port>" | "drop" | "ctrl" | "loop"


@dataclass
class TracePath:
    hops: list[TraceHop]
    outcome: str  # "drop" | "egress" | "controller" | "loop"
    egress: AccessPoint | None = None
    header: int = 0  # header as it left the last hop


class Network:
    """Live network state: topology, flow tables, event and delivery logs."""

    def __init__(self, topo: Topology, hop_limit: int | None = None):
        self.topo = topo
        self.tables: dict[str, FlowTable] = {sw: FlowTable(sw) for sw in topo.switch_ports}
        self.hop_limit = hop_limit if hop_limit is not None else HOP_LIMIT_FACTOR * len(topo.switch_ports)
        self.tick = 0
        self.events: list[SwitchEvent] = []
        self.deliveries: list[Delivery] = []
        self._seq: dict[str, int] = {sw: 0 for sw in topo.switch_ports}

    def _emit(self, switch: str, **kw) -> SwitchEvent:
        self._seq[switch] += 1
        ev = SwitchEvent(seq=self._seq[switch], tick=self.tick, switch=switch, **kw)
        self.events.append(ev)
        return ev

    def apply_flow_mod(self, switch: str, op: str, rule: FlowRule) -> SwitchEvent:
        """Apply an add/remove to a switch table; the event reflects applied state."""
        if switch not in self.tables:
            raise ValueError(f"unknown switch {switch}")
        if op not in ("add", "remove"):
            raise ValueError(f"flowmod op must be add or remove, got {op!r}")
        if rule.match.width != self.topo.width:
            raise ValueError(f"rule match width {rule.match.width} != header width {self.topo.width}")
        for p in rule.action.ports:
            if p not in self.topo.switch_ports[switch]:
                raise ValueError(f"switch {switch} has no port {p}")
        noop = False
        if op == "add":
            self.tables[switch].add(rule)
        else:
            noop = not self.tables[switch].remove(rule)
        return self._emit(switch, kind="flowmod", op=op, rule=rule, noop=noop)

    def forward(self, packet: Packet, at: tuple[str, str]) -> list[TracePath]:
        """Predict where a packet injected at an access point goes (no side effects)."""
        ap = self.topo.access_point_at(*at)
        if ap is None:
            raise ValueError(f"{at[0]}:{at[1]} is not an access point")
        return self._walk(packet.header, at[0], at[1])

    def inject(self, packet: Packet, at: tuple[str, str]) -> list[TracePath]:
        """Inject a packet at an access point; emits packet-ins and deliveries."""
        ap = self.topo.access_point_at(*at)
        if ap is None:
            raise ValueError(f"{at[0]}:{at[1]} is not an access point")
        return self._run_live(packet, at[0], at[1])

    def packet_out(self, switch: str, port: str, packet: Packet) -> list[Delivery]:
        """Send a packet out of a switch port, as the controller would.

        At an access point the attached client receives it directly; at an
        internal port the packet enters the neighbor switch pipeline.
        """
        if not self.topo.has_port(switch, port):
            raise ValueError(f"switch {switch} has no port {port}")
        ap = self.topo.access_point_at(switch, port)
        n_before = len(self.deliveries)
        if ap is not None:
            self.deliveries.append(Delivery(self.tick, ap.client, switch, port, packet))
        else:
            peer = self.topo.peer(switch, port)
            self._run_live(packet, peer[0], peer[1])
        return self.deliveries[n_before:]

    def snapshot_tables(self) -> dict[str, tuple[FlowRule, ...]]:
        return {sw: t.rules for sw, t in self.tables.items()}

    # -- packet walk ---------------------------------------------------

    def _run_live(self, packet: Packet, switch: str, in_port: str) -> list[TracePath]:
        paths = self._walk(packet.header, switch, in_port)
        for path in paths:
            last = path.hops[-1]
            out = Packet(path.header, packet.payload)
            if path.outcome == "egress":
                ap = path.egress
                self.deliveries.append(Delivery(self.tick, ap.client, ap.switch, ap.port, out))
            elif path.outcome == "controller":
                self._emit(last.switch, kind="packet_in", in_port=last.in_port, packet=out)
        return paths

    def _walk(self, header: int, switch: str, in_port: str) -> list[TracePath]:
        """Depth-first multicast walk; each leaf becomes one linear trace.

        A branch terminates on drop, egress at an access point, a
        to-controller rule, a repeated (switch, header) state (a true
        forwarding loop: lookups ignore the ingress port), or the hop
        limit backstop.
        """
        paths: list[TracePath] = []

        def step(sw: str, port: str, h: int, hops: list[TraceHop], visited: frozenset, depth: int):
            if (sw, h) in visited or depth > self.hop_limit:
                hops = hops + [TraceHop(sw, port, None, "loop")]
                paths.append(TracePath(hops, "loop", header=h))
                return
            visited = visited | {(sw, h)}
            rule = self.tables[sw].match_header(h)
            if rule is None or rule.action.kind == "drop":
                paths.append(TracePath(hops + [TraceHop(sw, port, rule, "drop")], "drop", header=h))
                return
            if rule.action.kind == "ctrl":
                paths.append(TracePath(hops + [TraceHop(sw, port, rule, "ctrl")], "controller", header=h))
                return
            h2 = h
            if rule.action.kind == "rewrite":
                h2 = rule.action.rewrite.apply(h)
            for out_port in rule.action.ports:
                hop = TraceHop(sw, port, rule, f"fwd:{out_port}")
                ap = self.topo.access_point_at(sw, out_port)
                if ap is not None:
                    paths.append(TracePath(hops + [hop], "egress", egress=ap, header=h2))
                    continue
                peer = self.topo.peer(sw, out_port)
                if peer is None:
                    # defensive: validated topologies cannot reach this
                    paths.append(TracePath(hops + [hop], "drop", header=h2))
                    continue
                step(peer[0], peer[1], h2, hops + [hop], visited, depth + 1)

        step(switch, in_port, header, [], frozenset(), 1)
        return paths

    def egress_points(self, paths: list[TracePath]) -> set[AccessPoint]:
        return {p.egress for p in paths if p.outcome == "egress"}


def magic_rule(width: int, magic: Ternary, priority: int = 65535) -> FlowRule:
    """The service-owned interception rule installed at access-point switches."""
    from .topology import Action

    if magic.width != width:
        raise ValueError(f"magic pattern width {magic.width} != header width {width}")
    return FlowRule(priority=priority, match=magic, action=Action("ctrl"))
