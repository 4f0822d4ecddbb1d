"""Static network description and per-switch flow tables.

The topology document is line oriented::

    headerwidth 16
    switch swA ports 3
    link swA:1 swB:1
    access swA:2 client alice
    location swA eu-west
    field dport 0 3
    nokey mallory

Ports on a switch with ``ports n`` are named "1".."n". Every port must be
either one endpoint of exactly one link or the attachment of exactly one
client, never both and never neither. ``field`` names a bit range of the
header (0 = most significant bit, inclusive bounds). ``nokey`` marks a
client that is physically attached but not enrolled with the verification
service (it holds no key).
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

from .hspace import HeaderSpace, Rewrite, Ternary

DEFAULT_WIDTH = 16


class TopologyError(ValueError):
    """Malformed or inconsistent topology document."""


@dataclass(frozen=True)
class AccessPoint:
    switch: str
    port: str
    client: str
    alias: str  # client-scoped name, safe to expose outside the provider

    def key(self) -> tuple[str, str]:
        return (self.switch, self.port)


@dataclass(frozen=True)
class Link:
    a_switch: str
    a_port: str
    b_switch: str
    b_port: str

    @property
    def name(self) -> str:
        return f"{self.a_switch}:{self.a_port}~{self.b_switch}:{self.b_port}"

    def endpoints(self) -> tuple[tuple[str, str], tuple[str, str]]:
        return ((self.a_switch, self.a_port), (self.b_switch, self.b_port))


@dataclass(frozen=True)
class Action:
    """Rule action: forward, rewrite-then-forward, drop, or send to controller."""

    kind: str  # "fwd" | "rewrite" | "drop" | "ctrl"
    ports: tuple[str, ...] = ()
    rewrite: Rewrite | None = None

    KINDS = ("fwd", "rewrite", "drop", "ctrl")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown action kind {self.kind!r}")
        if self.kind in ("fwd", "rewrite") and not self.ports:
            raise ValueError(f"{self.kind} action needs at least one port")
        if self.kind == "rewrite" and self.rewrite is None:
            raise ValueError("rewrite action needs a rewrite")

    @classmethod
    def parse(cls, text: str) -> "Action":
        if text == "drop":
            return cls("drop")
        if text == "ctrl":
            return cls("ctrl")
        if text.startswith("fwd:"):
            ports = tuple(p for p in text[4:].split(",") if p)
            return cls("fwd", ports)
        if text.startswith("rewrite:"):
            rest = text[len("rewrite:"):]
            try:
                spec, ports_s = rest.rsplit(":", 1)
            except ValueError:
                raise ValueError(f"rewrite action must look like rewrite:<mask>/<value>:<ports>, got {text!r}") from None
            ports = tuple(p for p in ports_s.split(",") if p)
            return cls("rewrite", ports, Rewrite.parse(spec))
        raise ValueError(f"unknown action {text!r}")

    def __str__(self) -> str:
        if self.kind == "fwd":
            return "fwd:" + ",".join(self.ports)
        if self.kind == "rewrite":
            return f"rewrite:{self.rewrite}:" + ",".join(self.ports)
        return self.kind


@dataclass(frozen=True)
class FlowRule:
    priority: int
    match: Ternary
    action: Action

    def __post_init__(self):
        if self.priority < 0:
            raise ValueError(f"priority must be non-negative, got {self.priority}")

    def __str__(self) -> str:
        return f"prio={self.priority} match={self.match} action={self.action}"


class FlowTable:
    """Prioritized match-action rules of one switch.

    Rules are kept in lookup order: descending priority, insertion order
    breaking ties (earlier wins).
    """

    def __init__(self, owner: str):
        self.owner = owner
        self._rules: list[FlowRule] = []
        self._order: list[tuple[int, int]] = []  # (-priority, insertion seq)
        self._next_seq = 0

    def add(self, rule: FlowRule) -> None:
        key = (-rule.priority, self._next_seq)
        self._next_seq += 1
        idx = bisect.bisect_left(self._order, key)
        self._order.insert(idx, key)
        self._rules.insert(idx, rule)

    def remove(self, rule: FlowRule) -> bool:
        """Remove the first stored rule equal to `rule`; False when absent."""
        for i, r in enumerate(self._rules):
            if r == rule:
                del self._rules[i]
                del self._order[i]
                return True
        return False

    @property
    def rules(self) -> tuple[FlowRule, ...]:
        return tuple(self._rules)

    def match_header(self, header: int) -> FlowRule | None:
        for r in self._rules:
            if r.match.matches(header):
                return r
        return None

    def lookup(self, space: HeaderSpace) -> list[tuple[FlowRule | None, HeaderSpace]]:
        """Split `space` by winning rule, in lookup order.

        Each pair carries the sub-space a rule wins after priority
        shadowing; a trailing (None, residual) pair reports the unmatched
        remainder, which is implicitly dropped. Empty sub-spaces are
        omitted.
        """
        out: list[tuple[FlowRule | None, HeaderSpace]] = []
        residual = space
        for rule in self._rules:
            if residual.is_empty():
                break
            match_space = HeaderSpace(space.width, [rule.match])
            hit = residual.intersect(match_space)
            if hit.is_empty():
                continue
            out.append((rule, hit))
            residual = residual.difference(match_space)
        if not residual.is_empty():
            out.append((None, residual))
        return out

    def copy(self) -> "FlowTable":
        t = FlowTable(self.owner)
        t._rules = list(self._rules)
        t._order = list(self._order)
        t._next_seq = self._next_seq
        return t


def table_lookup(table: FlowTable, space: HeaderSpace) -> list[tuple[FlowRule | None, HeaderSpace]]:
    return table.lookup(space)


@dataclass(frozen=True)
class Topology:
    width: int
    switch_ports: dict[str, tuple[str, ...]]
    links: tuple[Link, ...]
    access_points: tuple[AccessPoint, ...]
    locations: dict[str, str]
    fields: dict[str, tuple[int, int]]
    unkeyed: frozenset[str]
    _peer: dict[tuple[str, str], tuple[str, str]] = field(repr=False, default_factory=dict)
    _ap_at: dict[tuple[str, str], AccessPoint] = field(repr=False, default_factory=dict)

    def __post_init__(self):
        for link in self.links:
            (a, b) = link.endpoints()
            self._peer[a] = b
            self._peer[b] = a
        for ap in self.access_points:
            self._ap_at[ap.key()] = ap

    def switches(self) -> list[str]:
        return list(self.switch_ports)

    def ports_of(self, switch: str) -> tuple[str, ...]:
        return self.switch_ports[switch]

    def has_port(self, switch: str, port: str) -> bool:
        return switch in self.switch_ports and port in self.switch_ports[switch]

    def peer(self, switch: str, port: str) -> tuple[str, str] | None:
        return self._peer.get((switch, port))

    def access_point_at(self, switch: str, port: str) -> AccessPoint | None:
        return self._ap_at.get((switch, port))

    def clients(self) -> list[str]:
        seen = []
        for ap in self.access_points:
            if ap.client not in seen:
                seen.append(ap.client)
        return seen

    def client_aps(self, client: str) -> list[AccessPoint]:
        return [ap for ap in self.access_points if ap.client == client]

    def alias_of(self, switch: str, port: str) -> str | None:
        ap = self.access_point_at(switch, port)
        return ap.alias if ap else None

    def ap_by_alias(self, alias: str) -> AccessPoint | None:
        for ap in self.access_points:
            if ap.alias == alias:
                return ap
        return None

    def region_of(self, switch: str) -> str | None:
        return self.locations.get(switch)

    def field_pattern(self, name: str, value: int) -> Ternary:
        """Compile a named-field constraint to a match pattern.

        Field bit ranges come from the topology document (0 = most
        significant bit, inclusive); all other positions stay wildcards.
        """
        if name not in self.fields:
            raise TopologyError(f"unknown field {name!r}")
        start, end = self.fields[name]
        nbits = end - start + 1
        if not (0 <= value < (1 << nbits)):
            raise ValueError(f"value {value} does not fit field {name} ({nbits} bits)")
        shift = self.width - 1 - end
        care = ((1 << nbits) - 1) << shift
        return Ternary(self.width, care, value << shift)

    def neighbors(self, switch: str) -> list[tuple[str, str, str]]:
        """(local port, peer switch, peer port) for every link of `switch`."""
        out = []
        for port in self.switch_ports[switch]:
            peer = self.peer(switch, port)
            if peer is not None:
                out.append((port, peer[0], peer[1]))
        return out

    def path_between(self, src: str, dst: str) -> list[str] | None:
        """Shortest switch path src..dst over links (BFS), None if unconnected."""
        if src == dst:
            return [src]
        frontier = [src]
        parent: dict[str, str] = {src: src}
        while frontier:
            nxt = []
            for sw in frontier:
                for (_, peer_sw, _) in self.neighbors(sw):
                    if peer_sw in parent:
                        continue
                    parent[peer_sw] = sw
                    if peer_sw == dst:
                        path = [dst]
                        while path[-1] != src:
                            path.append(parent[path[-1]])
                        path.reverse()
                        return path
                    nxt.append(peer_sw)
            frontier = nxt
        return None

    def port_toward(self, switch: str, neighbor: str) -> str:
        for (port, peer_sw, _) in self.neighbors(switch):
            if peer_sw == neighbor:
                return port
        raise TopologyError(f"no link from {switch} to {neighbor}")


def classify_ports(topo: Topology) -> dict[tuple[str, str], tuple[str, str | None]]:
    """Total map over all ports: ("internal", None) or ("access", client)."""
    out: dict[tuple[str, str], tuple[str, str | None]] = {}
    for sw, ports in topo.switch_ports.items():
        for p in ports:
            ap = topo.access_point_at(sw, p)
            if ap is not None:
                out[(sw, p)] = ("access", ap.client)
            else:
                out[(sw, p)] = ("internal", None)
    return out


def load_topology(text: str) -> Topology:
    width: int | None = None
    switch_ports: dict[str, tuple[str, ...]] = {}
    link_specs: list[tuple[str, str, str, str, int]] = []
    access_specs: list[tuple[str, str, str, int]] = []
    locations: dict[str, str] = {}
    fields: dict[str, tuple[int, int]] = {}
    unkeyed: set[str] = set()

    def err(lineno: int, msg: str) -> TopologyError:
        return TopologyError(f"line {lineno}: {msg}")

    def split_endpoint(tok: str, lineno: int) -> tuple[str, str]:
        if ":" not in tok:
            raise err(lineno, f"expected <switch>:<port>, got {tok!r}")
        sw, port = tok.split(":", 1)
        return sw, port

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        kw = toks[0]
        if kw == "headerwidth":
            if len(toks) != 2:
                raise err(lineno, "headerwidth takes one argument")
            width = int(toks[1])
            if width < 1:
                raise err(lineno, f"header width must be positive, got {width}")
        elif kw == "switch":
            if len(toks) != 4 or toks[2] != "ports":
                raise err(lineno, "expected: switch <id> ports <n>")
            name = toks[1]
            if name in switch_ports:
                raise err(lineno, f"duplicate switch {name}")
            n = int(toks[3])
            if n < 1:
                raise err(lineno, f"switch {name} needs at least one port")
            switch_ports[name] = tuple(str(i) for i in range(1, n + 1))
        elif kw == "link":
            if len(toks) != 3:
                raise err(lineno, "expected: link <sw>:<port> <sw>:<port>")
            a_sw, a_p = split_endpoint(toks[1], lineno)
            b_sw, b_p = split_endpoint(toks[2], lineno)
            link_specs.append((a_sw, a_p, b_sw, b_p, lineno))
        elif kw == "access":
            if len(toks) != 4 or toks[2] != "client":
                raise err(lineno, "expected: access <sw>:<port> client <id>")
            sw, p = split_endpoint(toks[1], lineno)
            if not toks[3]:
                raise err(lineno, "empty client id")
            access_specs.append((sw, p, toks[3], lineno))
        elif kw == "location":
            if len(toks) != 3:
                raise err(lineno, "expected: location <sw> <region>")
            locations[toks[1]] = toks[2]
        elif kw == "field":
            if len(toks) != 4:
                raise err(lineno, "expected: field <name> <startbit> <endbit>")
            fields[toks[1]] = (int(toks[2]), int(toks[3]))
        elif kw == "nokey":
            if len(toks) != 2:
                raise err(lineno, "expected: nokey <client>")
            unkeyed.add(toks[1])
        else:
            raise err(lineno, f"unknown directive {kw!r}")

    if width is None:
        width = DEFAULT_WIDTH

    taken: dict[tuple[str, str], str] = {}
    links: list[Link] = []
    for a_sw, a_p, b_sw, b_p, lineno in link_specs:
        for sw, p in ((a_sw, a_p), (b_sw, b_p)):
            if sw not in switch_ports:
                raise TopologyError(f"line {lineno}: link references unknown switch {sw}")
            if p not in switch_ports[sw]:
                raise TopologyError(f"line {lineno}: switch {sw} has no port {p}")
        if (a_sw, a_p) == (b_sw, b_p):
            raise TopologyError(f"line {lineno}: link endpoints must differ")
        for sw, p in ((a_sw, a_p), (b_sw, b_p)):
            if (sw, p) in taken:
                raise TopologyError(f"line {lineno}: port {sw}:{p} already used as {taken[(sw, p)]}")
            taken[(sw, p)] = "link endpoint"
        links.append(Link(a_sw, a_p, b_sw, b_p))

    aps: list[AccessPoint] = []
    per_client_count: dict[str, int] = {}
    for sw, p, client, lineno in access_specs:
        if sw not in switch_ports:
            raise TopologyError(f"line {lineno}: access references unknown switch {sw}")
        if p not in switch_ports[sw]:
            raise TopologyError(f"line {lineno}: switch {sw} has no port {p}")
        if (sw, p) in taken:
            raise TopologyError(f"line {lineno}: port {sw}:{p} already used as {taken[(sw, p)]}")
        taken[(sw, p)] = f"access point of {client}"
        n = per_client_count.get(client, 0) + 1
        per_client_count[client] = n
        aps.append(AccessPoint(sw, p, client, f"{client}:ap{n}"))

    for sw, ports in switch_ports.items():
        for p in ports:
            if (sw, p) not in taken:
                raise TopologyError(f"port {sw}:{p} is neither linked nor an access point")

    for sw in locations:
        if sw not in switch_ports:
            raise TopologyError(f"location references unknown switch {sw}")
    for name, (start, end) in fields.items():
        if not (0 <= start <= end < width):
            raise TopologyError(f"field {name} range {start}..{end} outside width {width}")
    clients = {ap.client for ap in aps}
    for c in unkeyed:
        if c not in clients:
            raise TopologyError(f"nokey references unknown client {c}")

    return Topology(
        width=width,
        switch_ports=switch_ports,
        links=tuple(links),
        access_points=tuple(aps),
        locations=locations,
        fields=fields,
        unkeyed=frozenset(unkeyed),
    )
