"""Scenario scripts: timed directives plus adversary templates.

Grammar (one directive per line, ``#`` starts a comment)::

    horizon <ticks>
    @<tick> flowmod add <sw> prio=<p> match=<ternary> action=fwd:<ports>|rewrite:<mask>/<value>:<ports>|drop|ctrl
    @<tick> flowmod remove <sw> prio=<p> match=<ternary> action=<...>
    @<tick> inject <sw>:<port> header=<bits>
    @<tick> query client=<id> kind=isolation|sources|geo|summary [at=<sw>:<port>]
    @<tick> attack join client=<id> hidden=<sw>:<port> [match=<ternary>] [prio=<p>]
    @<tick> attack divert client=<id> via=<region> [match=<ternary>] [prio=<p>]
    @<tick> attack transient flowmod add <sw> prio=<p> match=<ternary> action=<...> f=<frac> period=<ticks>
    @<tick> attack suppress sw=<id> count=<n>

Templates expand into concrete flowmod directives before execution. The
transient template keeps the rule installed for exactly round(f*period)
ticks per period, at a per-period random offset drawn from the run seed,
so each period carries the same duty cycle while the on-window placement
stays unpredictable. ``suppress`` withholds the next n events of a switch
from the verification controller (the switch still applies them), which
is how event-loss attacks are staged.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .hspace import Ternary
from .sim import Network, Packet
from .topology import Action, FlowRule, Topology

QUERY_KINDS = ("isolation", "sources", "geo", "summary")
DEFAULT_ATTACK_PRIORITY = 100
SETTLE_TICKS = 12


class ScenarioError(ValueError):
    """Malformed script or directive referencing missing topology elements."""


@dataclass(frozen=True)
class Directive:
    tick: int
    kind: str  # "flowmod" | "inject" | "query" | "suppress"
    op: str = ""
    switch: str = ""
    port: str = ""
    rule: FlowRule | None = None
    header: int = 0
    client: str = ""
    query_kind: str = ""
    count: int = 0


@dataclass(frozen=True)
class TransientSpec:
    tick: int
    switch: str
    rule: FlowRule
    duty: float
    period: int


@dataclass(frozen=True)
class JoinSpec:
    tick: int
    client: str
    hidden: tuple[str, str]
    match: Ternary
    priority: int


@dataclass(frozen=True)
class DivertSpec:
    tick: int
    client: str
    via: str
    match: Ternary
    priority: int


@dataclass
class Script:
    directives: list[Directive] = field(default_factory=list)
    transients: list[TransientSpec] = field(default_factory=list)
    joins: list[JoinSpec] = field(default_factory=list)
    diverts: list[DivertSpec] = field(default_factory=list)
    horizon_hint: int | None = None

    def base_horizon(self, settle: int = SETTLE_TICKS) -> int:
        ticks = [d.tick for d in self.directives]
        ticks += [s.tick for s in self.joins + self.diverts + self.transients]
        last = max(ticks) if ticks else 0
        return max(self.horizon_hint or 0, last + settle)


def _kv(tokens: list[str], lineno: int) -> dict[str, str]:
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise ScenarioError(f"line {lineno}: expected key=value, got {tok!r}")
        k, v = tok.split("=", 1)
        out[k] = v
    return out


def _parse_flowmod(tokens: list[str], topo: Topology, lineno: int) -> tuple[str, str, FlowRule]:
    if len(tokens) < 5:
        raise ScenarioError(f"line {lineno}: flowmod needs op, switch and rule fields")
    op, switch = tokens[0], tokens[1]
    if op not in ("add", "remove"):
        raise ScenarioError(f"line {lineno}: flowmod op must be add or remove")
    if switch not in topo.switch_ports:
        raise ScenarioError(f"line {lineno}: unknown switch {switch}")
    kv = _kv(tokens[2:], lineno)
    for key in ("prio", "match", "action"):
        if key not in kv:
            raise ScenarioError(f"line {lineno}: flowmod missing {key}=")
    try:
        match = Ternary.parse(kv["match"])
        action = Action.parse(kv["action"])
        rule = FlowRule(priority=int(kv["prio"]), match=match, action=action)
    except ValueError as e:
        raise ScenarioError(f"line {lineno}: {e}") from None
    if match.width != topo.width:
        raise ScenarioError(f"line {lineno}: match width {match.width} != header width {topo.width}")
    for p in action.ports:
        if p not in topo.switch_ports[switch]:
            raise ScenarioError(f"line {lineno}: switch {switch} has no port {p}")
    return op, switch, rule


def _endpoint(text: str, topo: Topology, lineno: int) -> tuple[str, str]:
    if ":" not in text:
        raise ScenarioError(f"line {lineno}: expected <switch>:<port>, got {text!r}")
    sw, port = text.split(":", 1)
    if not topo.has_port(sw, port):
        raise ScenarioError(f"line {lineno}: no such port {sw}:{port}")
    return sw, port


def parse_scenario(text: str, topo: Topology) -> Script:
    script = Script()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        if toks[0] == "horizon":
            if len(toks) != 2:
                raise ScenarioError(f"line {lineno}: horizon takes one argument")
            script.horizon_hint = int(toks[1])
            continue
        if not toks[0].startswith("@"):
            raise ScenarioError(f"line {lineno}: directives start with @<tick>")
        try:
            tick = int(toks[0][1:])
        except ValueError:
            raise ScenarioError(f"line {lineno}: bad tick {toks[0]!r}") from None
        if tick < 0:
            raise ScenarioError(f"line {lineno}: tick must be non-negative")
        body = toks[1:]
        if not body:
            raise ScenarioError(f"line {lineno}: empty directive")
        kw = body[0]

        if kw == "flowmod":
            op, switch, rule = _parse_flowmod(body[1:], topo, lineno)
            script.directives.append(Directive(tick, "flowmod", op=op, switch=switch, rule=rule))
        elif kw == "inject":
            if len(body) != 3:
                raise ScenarioError(f"line {lineno}: expected inject <sw>:<port> header=<bits>")
            sw, port = _endpoint(body[1], topo, lineno)
            if topo.access_point_at(sw, port) is None:
                raise ScenarioError(f"line {lineno}: inject point {sw}:{port} is not an access point")
            kv = _kv(body[2:], lineno)
            bits = kv.get("header", "")
            if len(bits) != topo.width or any(c not in "01" for c in bits):
                raise ScenarioError(f"line {lineno}: header must be {topo.width} bits of 0/1")
            script.directives.append(Directive(tick, "inject", switch=sw, port=port, header=int(bits, 2)))
        elif kw == "query":
            kv = _kv(body[1:], lineno)
            client = kv.get("client", "")
            kind = kv.get("kind", "")
            if client not in {ap.client for ap in topo.access_points}:
                raise ScenarioError(f"line {lineno}: unknown client {client!r}")
            if kind not in QUERY_KINDS:
                raise ScenarioError(f"line {lineno}: query kind must be one of {', '.join(QUERY_KINDS)}")
            sw = port = ""
            if "at" in kv:
                sw, port = _endpoint(kv["at"], topo, lineno)
                ap = topo.access_point_at(sw, port)
                if ap is None or ap.client != client:
                    raise ScenarioError(f"line {lineno}: {kv['at']} is not an access point of {client}")
            script.directives.append(
                Directive(tick, "query", client=client, query_kind=kind, switch=sw, port=port)
            )
        elif kw == "attack":
            if len(body) < 2:
                raise ScenarioError(f"line {lineno}: attack needs a template name")
            template = body[1]
            if template == "join":
                kv = _kv(body[2:], lineno)
                client = kv.get("client", "")
                if client not in {ap.client for ap in topo.access_points}:
                    raise ScenarioError(f"line {lineno}: unknown client {client!r}")
                if "hidden" not in kv:
                    raise ScenarioError(f"line {lineno}: join needs hidden=<sw>:<port>")
                hidden = _endpoint(kv["hidden"], topo, lineno)
                if topo.access_point_at(*hidden) is None:
                    raise ScenarioError(f"line {lineno}: hidden point {kv['hidden']} is not an access point")
                match = Ternary.parse(kv["match"]) if "match" in kv else Ternary.wildcard(topo.width)
                prio = int(kv.get("prio", DEFAULT_ATTACK_PRIORITY))
                script.joins.append(JoinSpec(tick, client, hidden, match, prio))
            elif template == "divert":
                kv = _kv(body[2:], lineno)
                client = kv.get("client", "")
                if client not in {ap.client for ap in topo.access_points}:
                    raise ScenarioError(f"line {lineno}: unknown client {client!r}")
                via = kv.get("via", "")
                if via not in set(topo.locations.values()):
                    raise ScenarioError(f"line {lineno}: no switch located in region {via!r}")
                match = Ternary.parse(kv["match"]) if "match" in kv else Ternary.wildcard(topo.width)
                prio = int(kv.get("prio", DEFAULT_ATTACK_PRIORITY))
                script.diverts.append(DivertSpec(tick, client, via, match, prio))
            elif template == "transient":
                if len(body) < 3 or body[2] != "flowmod":
                    raise ScenarioError(f"line {lineno}: transient wraps a flowmod directive")
                tail = body[3:]
                extras = {}
                core = []
                for tok in tail:
                    if tok.startswith("f=") or tok.startswith("period="):
                        k, v = tok.split("=", 1)
                        extras[k] = v
                    else:
                        core.append(tok)
                if "f" not in extras or "period" not in extras:
                    raise ScenarioError(f"line {lineno}: transient needs f= and period=")
                op, switch, rule = _parse_flowmod(core, topo, lineno)
                if op != "add":
                    raise ScenarioError(f"line {lineno}: transient template installs rules (op must be add)")
                duty = float(extras["f"])
                period = int(extras["period"])
                if not (0.0 < duty < 1.0):
                    raise ScenarioError(f"line {lineno}: duty cycle must satisfy 0 < f < 1")
                if period < 2:
                    raise ScenarioError(f"line {lineno}: period must be at least 2 ticks")
                script.transients.append(TransientSpec(tick, switch, rule, duty, period))
            elif template == "suppress":
                kv = _kv(body[2:], lineno)
                sw = kv.get("sw", "")
                if sw not in topo.switch_ports:
                    raise ScenarioError(f"line {lineno}: unknown switch {sw!r}")
                count = int(kv.get("count", "1"))
                if count < 1:
                    raise ScenarioError(f"line {lineno}: suppress count must be positive")
                script.directives.append(Directive(tick, "suppress", switch=sw, count=count))
            else:
                raise ScenarioError(f"line {lineno}: unknown attack template {template!r}")
        else:
            raise ScenarioError(f"line {lineno}: unknown directive {kw!r}")
    return script


# -- template expansion ------------------------------------------------


def _expand_join(spec: JoinSpec, topo: Topology) -> list[Directive]:
    victim_aps = topo.client_aps(spec.client)
    target = victim_aps[0]
    path = topo.path_between(spec.hidden[0], target.switch)
    if path is None:
        raise ScenarioError(f"no path from hidden point {spec.hidden[0]} to {target.switch}")
    out = []
    for i, sw in enumerate(path):
        if i + 1 < len(path):
            out_port = topo.port_toward(sw, path[i + 1])
        else:
            out_port = target.port
        rule = FlowRule(spec.priority, spec.match, Action("fwd", (out_port,)))
        out.append(Directive(spec.tick, "flowmod", op="add", switch=sw, rule=rule))
    return out


def _expand_divert(spec: DivertSpec, topo: Topology) -> list[Directive]:
    aps = topo.client_aps(spec.client)
    if len(aps) < 2:
        raise ScenarioError(f"divert needs a client with at least two access points, {spec.client} has {len(aps)}")
    a1, a2 = aps[0], aps[1]
    detours = sorted(sw for sw, region in topo.locations.items() if region == spec.via)
    det = detours[0]
    leg1 = topo.path_between(a1.switch, det)
    leg2 = topo.path_between(det, a2.switch)
    if leg1 is None or leg2 is None:
        raise ScenarioError(f"no path through region {spec.via} for client {spec.client}")
    hops = leg1 + leg2[1:]
    out = []
    seen: set[tuple[str, str]] = set()
    for i, sw in enumerate(hops):
        if i + 1 < len(hops):
            out_port = topo.port_toward(sw, hops[i + 1])
        else:
            out_port = a2.port
        if (sw, out_port) in seen:
            continue
        seen.add((sw, out_port))
        rule = FlowRule(spec.priority, spec.match, Action("fwd", (out_port,)))
        out.append(Directive(spec.tick, "flowmod", op="add", switch=sw, rule=rule))
    return out


def transient_pattern(spec: TransientSpec, horizon: int, rng: random.Random) -> list[bool]:
    """Per-tick presence of the transient rule from its start tick to horizon.

    Each period keeps the rule installed for exactly round(f*period) ticks
    at a random in-period offset (wrapping inside the period).
    """
    on_per_period = round(spec.duty * spec.period)
    on_per_period = min(max(on_per_period, 1), spec.period - 1)
    present = [False] * (horizon + 1)
    t = spec.tick
    while t <= horizon:
        offset = rng.randrange(spec.period)
        for j in range(on_per_period):
            tt = t + (offset + j) % spec.period
            if tt <= horizon:
                present[tt] = True
        t += spec.period
    return present


def _expand_transient(spec: TransientSpec, horizon: int, rng: random.Random) -> list[Directive]:
    present = transient_pattern(spec, horizon, rng)
    out = []
    prev = False
    for t in range(spec.tick, horizon + 1):
        if present[t] and not prev:
            out.append(Directive(t, "flowmod", op="add", switch=spec.switch, rule=spec.rule))
        elif prev and not present[t]:
            out.append(Directive(t, "flowmod", op="remove", switch=spec.switch, rule=spec.rule))
        prev = present[t]
    return out


def expand(script: Script, topo: Topology, rng: random.Random, horizon: int) -> list[Directive]:
    out = list(script.directives)
    for spec in script.joins:
        out.extend(_expand_join(spec, topo))
    for spec in script.diverts:
        out.extend(_expand_divert(spec, topo))
    for spec in script.transients:
        out.extend(_expand_transient(spec, horizon, rng))
    out.sort(key=lambda d: d.tick)
    return out


# -- execution ---------------------------------------------------------


def run_scenario(script: Script, net: Network, seed: int, controller=None, agents=None):
    """Execute a script tick by tick; returns (events, deliveries).

    Deterministic given topology, script and seed. When a controller is
    supplied it sees every switch event (minus adversary-suppressed ones)
    and every tick boundary; client agents receive deliveries at their
    access points and may send packets on the next tick.
    """
    agents = agents or {}
    rng = random.Random(f"{seed}:scenario")
    horizon = script.base_horizon()
    directives = expand(script, topo=net.topo, rng=rng, horizon=horizon)
    if any(d.kind == "query" for d in directives) and controller is None:
        raise ScenarioError("query directives need a running verification controller")

    by_tick: dict[int, list[Directive]] = {}
    for d in directives:
        by_tick.setdefault(d.tick, []).append(d)

    suppress: dict[str, int] = {}
    pending: list[tuple[int, str, str, Packet]] = []  # (tick, sw, port, packet)
    seen_ev = 0
    seen_del = 0

    def send_later(tick: int, sw: str, port: str, packet: Packet) -> None:
        pending.append((tick, sw, port, packet))

    def drain(tick: int) -> None:
        nonlocal seen_ev, seen_del
        while True:
            progressed = False
            new_events = net.events[seen_ev:]
            if new_events:
                seen_ev = len(net.events)
                progressed = True
                if controller is not None:
                    passed = []
                    for ev in new_events:
                        if suppress.get(ev.switch, 0) > 0:
                            suppress[ev.switch] -= 1
                            continue
                        passed.append(ev)
                    if passed:
                        controller.on_events(passed, net)
            new_deliveries = net.deliveries[seen_del:]
            if new_deliveries:
                seen_del = len(net.deliveries)
                progressed = True
                for d in new_deliveries:
                    agent = agents.get(d.client)
                    if agent is not None:
                        agent.on_delivery(d, tick, send_later)
            if not progressed:
                break

    for tick in range(horizon + 1):
        net.tick = tick
        due_sends = [p for p in pending if p[0] == tick]
        pending[:] = [p for p in pending if p[0] != tick]
        for (_, sw, port, packet) in due_sends:
            net.inject(packet, (sw, port))
        for d in by_tick.get(tick, ()):
            if d.kind == "flowmod":
                net.apply_flow_mod(d.switch, d.op, d.rule)
            elif d.kind == "inject":
                net.inject(Packet(d.header), (d.switch, d.port))
            elif d.kind == "suppress":
                suppress[d.switch] = suppress.get(d.switch, 0) + d.count
            elif d.kind == "query":
                agent = agents.get(d.client)
                if agent is None:
                    raise ScenarioError(f"no agent for client {d.client} (unkeyed clients cannot query)")
                at = (d.switch, d.port) if d.switch else None
                packet, point = agent.make_query(d.query_kind, at=at)
                net.inject(packet, point)
            drain(tick)
        drain(tick)
        if controller is not None:
            controller.on_tick(tick, net)
            drain(tick)

    return list(net.events), list(net.deliveries)
