"""Brute-force equivalence harness for the logical verification engine.

The oracle side never touches the wildcard algebra: for one concrete
header it walks the (switch, header) state graph that the flow tables
induce and collects every access point the packet can leave at. Cycles
simply stop contributing, exactly like packets that loop forever. The
harness generates random desk-scale networks and checks, exhaustively
over all headers, that the engine's per-header reachability equals the
walk's.

Deliberate bug injection (``mutation``) perturbs the snapshot the engine
sees, but not the ground truth, to prove that the harness actually
catches analysis errors.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .hspace import HeaderSpace, Rewrite, Ternary
from .sim import Network
from .snapshots import Snapshot, snapshot_of
from .topology import AccessPoint, Action, FlowRule, Topology, load_topology
from .verify import reachable_endpoints

MUTATIONS = ("ignore-priority", "ignore-rewrite", "drop-top-rule")


@dataclass
class OracleCase:
    index: int
    seed: str
    mismatches: list[str]

    @property
    def ok(self) -> bool:
        return not self.mismatches


def random_topology_text(rng: random.Random, width: int, max_switches: int) -> str:
    """A random connected topology with at least two access points."""
    n = rng.randint(2, max_switches)
    names = [f"o{i}" for i in range(1, n + 1)]
    links: list[tuple[int, int]] = []
    for i in range(1, n):
        links.append((rng.randrange(i), i))  # random spanning tree
    extra = rng.randint(0, min(2, n * (n - 1) // 2 - (n - 1)))
    for _ in range(extra):
        a, b = rng.sample(range(n), 2)
        if (a, b) not in links and (b, a) not in links:
            links.append((a, b))

    port_count = [0] * n
    link_ports: list[tuple[int, int, int, int]] = []
    for a, b in links:
        port_count[a] += 1
        port_count[b] += 1
        link_ports.append((a, port_count[a], b, port_count[b]))

    access: list[tuple[int, int, str]] = []
    client_names = ["c1", "c2", "c3", "c4"]
    ci = 0
    for i in range(n):
        k = rng.randint(0, 2)
        if port_count[i] == 0:
            k = max(k, 1)
        for _ in range(k):
            port_count[i] += 1
            access.append((i, port_count[i], client_names[ci % len(client_names)]))
            ci += 1
    while len(access) < 2:
        i = rng.randrange(n)
        port_count[i] += 1
        access.append((i, port_count[i], client_names[ci % len(client_names)]))
        ci += 1

    lines = [f"headerwidth {width}"]
    for i, name in enumerate(names):
        lines.append(f"switch {name} ports {port_count[i]}")
    for a, pa, b, pb in link_ports:
        lines.append(f"link {names[a]}:{pa} {names[b]}:{pb}")
    for i, p, client in access:
        lines.append(f"access {names[i]}:{p} client {client}")
    regions = ["r1", "r2", "r3"]
    for i, name in enumerate(names):
        lines.append(f"location {name} {regions[i % len(regions)]}")
    return "\n".join(lines) + "\n"


def _random_ternary(rng: random.Random, width: int) -> Ternary:
    care = value = 0
    for _ in range(width):
        care <<= 1
        value <<= 1
        r = rng.random()
        if r < 0.4:
            pass  # wildcard
        else:
            care |= 1
            if r < 0.7:
                value |= 1
    return Ternary(width, care, value)


def random_rules(rng: random.Random, topo: Topology, switch: str, max_rules: int) -> list[FlowRule]:
    ports = topo.ports_of(switch)
    rules = []
    for _ in range(rng.randint(0, max_rules)):
        match = _random_ternary(rng, topo.width)
        r = rng.random()
        if r < 0.62:
            k = 2 if (len(ports) > 1 and rng.random() < 0.2) else 1
            chosen = tuple(rng.sample(ports, k))
            action = Action("fwd", chosen)
        elif r < 0.74:
            mask = 0
            for _ in range(topo.width):
                mask = (mask << 1) | (1 if rng.random() < 0.2 else 0)
            if mask == 0:
                mask = 1
            value = rng.getrandbits(topo.width)
            action = Action("rewrite", (rng.choice(ports),), Rewrite(topo.width, mask, value))
        elif r < 0.92:
            action = Action("drop")
        else:
            action = Action("ctrl")
        rules.append(FlowRule(priority=rng.randint(0, 7), match=match, action=action))
    return rules


def random_network(seed: str, width: int = 8, max_switches: int = 6, max_rules: int = 12) -> tuple[Topology, Network]:
    rng = random.Random(seed)
    topo = load_topology(random_topology_text(rng, width, max_switches))
    net = Network(topo)
    for sw in topo.switches():
        for rule in random_rules(rng, topo, sw, max_rules):
            net.apply_flow_mod(sw, "add", rule)
    return topo, net


# -- the per-header oracle -------------------------------------------------


def egress_oracle(topo: Topology, snap: Snapshot):
    """Exact per-header egress sets by walking the (switch, header) graph.

    Returns walk(access_point, header) -> frozenset of egress aliases.
    Independent of the wildcard algebra: plain integer matching plus
    graph search, with cycles handled by the visited set.
    """
    tables = {sw: snap.tables.get(sw, ()) for sw in topo.switch_ports}

    def winner(sw: str, header: int) -> FlowRule | None:
        for rule in tables[sw]:
            if rule.match.matches(header):
                return rule
        return None

    def walk(ap: AccessPoint, header: int) -> frozenset[str]:
        out: set[str] = set()
        stack = [(ap.switch, header)]
        seen: set[tuple[str, int]] = set()
        while stack:
            sw, h = stack.pop()
            if (sw, h) in seen:
                continue
            seen.add((sw, h))
            rule = winner(sw, h)
            if rule is None or rule.action.kind in ("drop", "ctrl"):
                continue
            h2 = rule.action.rewrite.apply(h) if rule.action.kind == "rewrite" else h
            for port in rule.action.ports:
                egress = topo.access_point_at(sw, port)
                if egress is not None:
                    out.add(egress.alias)
                    continue
                peer = topo.peer(sw, port)
                if peer is not None:
                    stack.append((peer[0], h2))
        return frozenset(out)

    return walk


def traversal_oracle(topo: Topology, snap: Snapshot):
    """Like egress_oracle but returns the set of switches a header visits."""
    tables = {sw: snap.tables.get(sw, ()) for sw in topo.switch_ports}

    def walk(ap: AccessPoint, header: int) -> frozenset[str]:
        visited: set[str] = set()
        stack = [(ap.switch, header)]
        seen: set[tuple[str, int]] = set()
        while stack:
            sw, h = stack.pop()
            if (sw, h) in seen:
                continue
            seen.add((sw, h))
            visited.add(sw)
            rule = None
            for r in tables[sw]:
                if r.match.matches(h):
                    rule = r
                    break
            if rule is None or rule.action.kind in ("drop", "ctrl"):
                continue
            h2 = rule.action.rewrite.apply(h) if rule.action.kind == "rewrite" else h
            for port in rule.action.ports:
                if topo.access_point_at(sw, port) is None:
                    peer = topo.peer(sw, port)
                    if peer is not None:
                        stack.append((peer[0], h2))
        return frozenset(visited)

    return walk


# -- mutations (deliberate analysis bugs) -----------------------------------


def mutate_snapshot(snap: Snapshot, mutation: str) -> Snapshot:
    if mutation not in MUTATIONS:
        raise ValueError(f"unknown mutation {mutation!r}; choose from {', '.join(MUTATIONS)}")
    tables = {}
    for sw, rules in snap.tables.items():
        if mutation == "ignore-priority":
            tables[sw] = tuple(reversed(rules))
        elif mutation == "ignore-rewrite":
            fixed = []
            for r in rules:
                if r.action.kind == "rewrite":
                    fixed.append(FlowRule(r.priority, r.match, Action("fwd", r.action.ports)))
                else:
                    fixed.append(r)
            tables[sw] = tuple(fixed)
        else:  # drop-top-rule
            tables[sw] = rules[1:] if rules else rules
    return Snapshot(version=snap.version, tick=snap.tick, tables=tables, provenance=snap.provenance)


# -- case runner -------------------------------------------------------------


def check_case(topo: Topology, net: Network, mutation: str | None = None) -> list[str]:
    """Compare engine reachability against the walk oracle for all headers.

    Returns mismatch descriptions, empty when the case passes.
    """
    truth = snapshot_of(net)
    analyzed = mutate_snapshot(truth, mutation) if mutation else truth
    walk = egress_oracle(topo, truth)
    full = HeaderSpace.full(topo.width)
    mismatches = []
    for ap in topo.access_points:
        result = reachable_endpoints(topo, analyzed, ap, full)
        predicted: dict[int, set[str]] = {}
        for entry in result.entries:
            for h in entry.sent.denote():
                predicted.setdefault(h, set()).add(entry.egress.alias)
        for h in range(1 << topo.width):
            expect = walk(ap, h)
            got = frozenset(predicted.get(h, set()))
            if got != expect:
                mismatches.append(
                    f"from={ap.alias} header={h:0{topo.width}b} engine={sorted(got)} oracle={sorted(expect)}"
                )
                if len(mismatches) >= 5:
                    return mismatches
    return mismatches


def run_cases(
    count: int,
    seed: int,
    width: int = 8,
    max_switches: int = 6,
    max_rules: int = 12,
    mutation: str | None = None,
) -> list[OracleCase]:
    if width > 10:
        raise ValueError("oracle enumeration is limited to widths up to 10")
    cases = []
    for i in range(count):
        case_seed = f"{seed}:oracle:{i}"
        topo, net = random_network(case_seed, width=width, max_switches=max_switches, max_rules=max_rules)
        mismatches = check_case(topo, net, mutation=mutation)
        cases.append(OracleCase(index=i, seed=case_seed, mismatches=mismatches))
    return cases
