"""Routing-property queries answered in the logical space.

All operations are pure functions over an immutable snapshot: forward and
reverse reachability between access points, isolation candidate sets, geo
exposure, and the client-facing transfer summary. Propagation tracks the
header space as currently carried alongside the space as originally sent,
so results are reported in terms of what the client transmits even when
rules rewrite headers along the way.

Client-facing renderings contain access-point aliases only, never switch
or link identifiers.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .hspace import HeaderSpace, Ternary
from .snapshots import Snapshot
from .topology import AccessPoint, FlowTable, Topology


@dataclass(frozen=True)
class ReachEntry:
    egress: AccessPoint
    arriving: HeaderSpace
    sent: HeaderSpace


@dataclass
class ReachResult:
    entries: list[ReachEntry]
    loops: set[tuple[str, str]] = field(default_factory=set)
    traversed: set[str] = field(default_factory=set)

    def egress_aliases(self) -> list[str]:
        return sorted(e.egress.alias for e in self.entries)


@dataclass
class GeoReport:
    regions: set[str]
    witnesses: dict[str, str]  # region -> one witness switch (provider-side only)


@dataclass
class TransferSummary:
    rows: list[tuple[str, str, HeaderSpace, HeaderSpace]]  # (ingress alias, egress alias, input, output)


def _tables_for(snap: Snapshot, topo: Topology) -> dict[str, FlowTable]:
    out = {}
    for sw in topo.switch_ports:
        t = FlowTable(sw)
        for rule in snap.tables.get(sw, ()):
            t.add(rule)
        out[sw] = t
    return out


def _propagate(topo: Topology, snap: Snapshot, start: AccessPoint, space: HeaderSpace):
    """Fixpoint propagation from one access point.

    Work items carry (switch, ingress port, current term, origin term,
    rewritten-bit mask). An item revisiting a (switch, port) contributes
    only the part of its current space not already propagated there for
    the same origin lane, which guarantees termination; every cut is
    recorded. Constraints discovered by matches are mirrored onto the
    origin term at positions that have not been overwritten yet.
    """
    width = topo.width
    full_mask = (1 << width) - 1
    tables = _tables_for(snap, topo)

    by_egress: dict[AccessPoint, tuple[list[Ternary], list[Ternary]]] = {}
    loops: set[tuple[str, str]] = set()
    traversed: set[str] = set()
    visited: dict[tuple[str, str], dict[tuple[Ternary, int], HeaderSpace]] = {}
    work: deque[tuple[str, str, Ternary, Ternary, int]] = deque()

    def arrive(sw: str, port: str, cur: Ternary, orig: Ternary, rwmask: int) -> None:
        lanes = visited.setdefault((sw, port), {})
        lane = (orig, rwmask)
        seen = lanes.get(lane)
        cur_space = HeaderSpace(width, [cur])
        if seen is None:
            residual = cur_space
        else:
            residual = cur_space.difference(seen)
            if residual != cur_space:
                loops.add((sw, port))
        if residual.is_empty():
            return
        lanes[lane] = residual if seen is None else seen.union(residual)
        for term in residual.terms:
            work.append((sw, port, term, orig, rwmask))

    for term in space.terms:
        arrive(start.switch, start.port, term, term, 0)
    traversed.add(start.switch)

    while work:
        sw, port, cur, orig, rwmask = work.popleft()
        traversed.add(sw)
        for rule, sub in tables[sw].lookup(HeaderSpace(width, [cur])):
            if rule is None or rule.action.kind in ("drop", "ctrl"):
                continue
            for st in sub.terms:
                orig2 = orig.intersect(st.restricted_to(full_mask & ~rwmask))
                if orig2 is None:
                    continue
                if rule.action.kind == "rewrite":
                    st2 = st.rewrite(rule.action.rewrite)
                    rwmask2 = rwmask | rule.action.rewrite.mask
                else:
                    st2 = st
                    rwmask2 = rwmask
                for out_port in rule.action.ports:
                    ap = topo.access_point_at(sw, out_port)
                    if ap is not None:
                        arriving, sent = by_egress.setdefault(ap, ([], []))
                        arriving.append(st2)
                        sent.append(orig2)
                        continue
                    peer = topo.peer(sw, out_port)
                    if peer is not None:
                        arrive(peer[0], peer[1], st2, orig2, rwmask2)

    entries = []
    for ap in sorted(by_egress, key=lambda a: a.alias):
        arriving, sent = by_egress[ap]
        entries.append(
            ReachEntry(
                egress=ap,
                arriving=HeaderSpace(width, arriving).compact(),
                sent=HeaderSpace(width, sent).compact(),
            )
        )
    return entries, loops, traversed


def reachable_endpoints(topo: Topology, snap: Snapshot, from_ap: AccessPoint, space: HeaderSpace) -> ReachResult:
    """All access points the given space can reach from one access point."""
    if topo.access_point_at(from_ap.switch, from_ap.port) != from_ap:
        raise ValueError(f"{from_ap.switch}:{from_ap.port} is not a registered access point")
    if space.is_empty():
        raise ValueError("reachability needs a non-empty header space")
    entries, loops, traversed = _propagate(topo, snap, from_ap, space)
    return ReachResult(entries=entries, loops=loops, traversed=traversed)


def reachable_sources(topo: Topology, snap: Snapshot, to_ap: AccessPoint) -> list[tuple[AccessPoint, HeaderSpace]]:
    """Which other access points can currently reach `to_ap`, and with what.

    Computed by forward analysis from every other access point; the
    header space reported is the one at the source (as sent).
    """
    if topo.access_point_at(to_ap.switch, to_ap.port) != to_ap:
        raise ValueError(f"{to_ap.switch}:{to_ap.port} is not a registered access point")
    full = HeaderSpace.full(topo.width)
    out = []
    for ap in topo.access_points:
        if ap == to_ap:
            continue
        result = reachable_endpoints(topo, snap, ap, full)
        for entry in result.entries:
            if entry.egress == to_ap:
                out.append((ap, entry.sent))
    return out


def isolation_candidates(
    topo: Topology, snap: Snapshot, request_point: AccessPoint, client: str
) -> tuple[set[AccessPoint], set[AccessPoint]]:
    """Access points that can communicate with the request point.

    "Communicate" covers either direction: reachable from the request
    point or able to reach it. Returns the full candidate set partitioned
    into (own, foreign) relative to the requesting client.
    """
    if request_point.client != client:
        raise ValueError(f"request point {request_point.alias} does not belong to {client}")
    candidates: set[AccessPoint] = set()
    full = HeaderSpace.full(topo.width)
    for entry in reachable_endpoints(topo, snap, request_point, full).entries:
        candidates.add(entry.egress)
    for ap, _ in reachable_sources(topo, snap, request_point):
        candidates.add(ap)
    own = {ap for ap in candidates if ap.client == client}
    foreign = candidates - own
    return own, foreign


def geo_exposure(topo: Topology, snap: Snapshot, client: str) -> GeoReport:
    """Regions of every switch on any feasible route for the client's traffic."""
    aps = topo.client_aps(client)
    if not aps:
        raise ValueError(f"client {client} has no access points")
    full = HeaderSpace.full(topo.width)
    traversed: set[str] = set()
    for ap in aps:
        _, _, seen = _propagate(topo, snap, ap, full)
        traversed |= seen
    regions: set[str] = set()
    witnesses: dict[str, str] = {}
    for sw in sorted(traversed):
        region = topo.region_of(sw)
        if region is None:
            continue
        regions.add(region)
        witnesses.setdefault(region, sw)
    return GeoReport(regions=regions, witnesses=witnesses)


def transfer_summary(topo: Topology, snap: Snapshot, client: str) -> TransferSummary:
    """Endpoint-to-endpoint view of the routing service offered to a client.

    Rows carry only access-point aliases; switch and link identifiers
    never appear.
    """
    aps = topo.client_aps(client)
    if not aps:
        raise ValueError(f"client {client} is not registered")
    full = HeaderSpace.full(topo.width)
    rows = []
    for ap in aps:
        for entry in reachable_endpoints(topo, snap, ap, full).entries:
            rows.append((ap.alias, entry.egress.alias, entry.sent, entry.arriving))
    rows.sort(key=lambda r: (r[0], r[1]))
    return TransferSummary(rows=rows)


# -- client-facing text renderings ---------------------------------------


def render_reach(result: ReachResult) -> str:
    lines = []
    for entry in result.entries:
        lines.append(f"egress={entry.egress.alias} sent={entry.sent} arrives={entry.arriving}")
    return "\n".join(lines)


def render_isolation(client: str, request_alias: str, own: set[AccessPoint], foreign: set[AccessPoint]) -> str:
    own_s = ",".join(sorted(ap.alias for ap in own)) or "-"
    foreign_s = ",".join(sorted(ap.alias for ap in foreign)) or "-"
    return (
        f"kind=isolation\nclient={client}\nrequest_point={request_alias}\n"
        f"own={own_s}\nforeign={foreign_s}"
    )


def render_sources(client: str, point_alias: str, sources: list[tuple[AccessPoint, HeaderSpace]]) -> str:
    lines = [f"kind=sources\nclient={client}\npoint={point_alias}"]
    for ap, space in sorted(sources, key=lambda s: s[0].alias):
        lines.append(f"source={ap.alias} sent={space}")
    return "\n".join(lines)


def render_geo(client: str, report: GeoReport) -> str:
    regions = ",".join(sorted(report.regions)) or "-"
    return f"kind=geo\nclient={client}\nregions={regions}"


def render_summary(client: str, summary: TransferSummary) -> str:
    lines = [f"kind=summary\nclient={client}"]
    for ingress, egress, sent, arriving in summary.rows:
        lines.append(f"row ingress={ingress} egress={egress} sent={sent} arrives={arriving}")
    return "\n".join(lines)
