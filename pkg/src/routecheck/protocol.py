"""In-band client/controller protocol.

Clients encode queries as magic-header packets that pre-installed
interception rules steer to the verification controller as packet-ins.
For isolation queries the controller fans out authentication challenges
by packet-out to every candidate access point, collects signed replies
until a timeout, then returns a signed report (carrying how many
challenges were sent and how many verified replies came back) to the
request point. Endpoints that never answer, or answer badly, show up as
the requested/received shortfall, which the querying client can see.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from .hspace import Ternary
from .keys import KeyRegistry, SigningKey, VerifyKey, seal
from .sim import Delivery, Network, Packet, SwitchEvent, magic_rule
from .snapshots import GapDetected, SnapshotService
from .topology import AccessPoint, Topology
from . import verify, wire

DEFAULT_TIMEOUT = 8
DEFAULT_POLL_RATE = 0.05
REPLAY_WINDOW = 1024  # nonces remembered per client


class InterceptError(ValueError):
    """A packet-in was rejected (bad bytes, replay, spoofed ingress, ...)."""


@dataclass(frozen=True)
class ClientQuery:
    client: str
    kind: str
    nonce: bytes
    params: list[tuple[str, str]]
    request_point: AccessPoint


@dataclass(frozen=True)
class Finding:
    tick: int
    kind: str  # "gap" | "transient" | "isolation" | "geo"
    detail: str

    def line(self) -> str:
        return f"t={self.tick} kind={self.kind} {self.detail}"


@dataclass
class Session:
    nonce: bytes
    client: str
    kind: str
    request_point: AccessPoint
    body: str
    deadline: int
    requested: int = 0
    challenges: dict[bytes, AccessPoint] = field(default_factory=dict)
    verified: list[str] = field(default_factory=list)


def encode_query(
    kind: str,
    client: str,
    nonce: bytes,
    params: list[tuple[str, str]],
    magic: Ternary,
    controller_seal_pub: bytes,
    rng: random.Random,
) -> Packet:
    """Seal a query to the controller inside a magic-header packet."""
    plaintext = wire.encode_query_plaintext(kind, client, nonce, params)
    sealed = seal(controller_seal_pub, plaintext, rng)
    return Packet(header=magic.value, payload=wire.frame_query(sealed))


def verify_report(raw: bytes, controller_key: VerifyKey, expected_nonce: bytes | None = None):
    """Client-side check of a report frame; (ok, parsed report or None)."""
    try:
        msg = wire.parse_frame(raw)
    except wire.WireError:
        return False, None
    if msg.msgtype != wire.MSG_REPORT or msg.report is None:
        return False, None
    report = msg.report
    if not controller_key.verify(report.signature, report.signed_portion):
        return False, report
    if expected_nonce is not None and report.nonce != expected_nonce:
        return False, report
    return True, report


class ClientAgent:
    """The software a client runs: sends queries, answers challenges,
    verifies reports."""

    def __init__(
        self,
        client: str,
        topo: Topology,
        signing: SigningKey,
        controller_key: VerifyKey,
        controller_seal_pub: bytes,
        magic: Ternary,
        seed: int | str,
    ):
        self.client = client
        self.topo = topo
        self.signing = signing
        self.controller_key = controller_key
        self.controller_seal_pub = controller_seal_pub
        self.magic = magic
        self.rng = random.Random(f"{seed}:agent:{client}")
        self.outstanding: dict[bytes, str] = {}  # query nonce -> kind
        self.reports: list[tuple[int, bool, wire.Report]] = []

    def make_query(self, kind: str, at: tuple[str, str] | None = None, params=()) -> tuple[Packet, tuple[str, str]]:
        aps = self.topo.client_aps(self.client)
        point = at if at is not None else (aps[0].switch, aps[0].port)
        nonce = self.rng.randbytes(wire.NONCE_LEN)
        self.outstanding[nonce] = kind
        packet = encode_query(
            kind, self.client, nonce, list(params), self.magic, self.controller_seal_pub, self.rng
        )
        return packet, point

    def on_delivery(self, delivery: Delivery, tick: int, send_later) -> None:
        try:
            msg = wire.parse_frame(delivery.packet.payload)
        except wire.WireError:
            return
        if msg.msgtype == wire.MSG_CHALLENGE:
            ap = self.topo.access_point_at(delivery.switch, delivery.port)
            if ap is None or ap.client != self.client:
                return
            signed = wire.reply_signed_portion(msg.nonce, self.client, ap.alias)
            reply = wire.frame_reply(msg.nonce, self.client, ap.alias, self.signing.sign(signed))
            send_later(tick + 1, ap.switch, ap.port, Packet(self.magic.value, reply))
        elif msg.msgtype == wire.MSG_REPORT:
            nonce = msg.report.nonce
            ok, report = verify_report(delivery.packet.payload, self.controller_key, expected_nonce=None)
            if ok and nonce not in self.outstanding:
                ok = False
            self.outstanding.pop(nonce, None)
            self.reports.append((tick, ok, report))


class Controller:
    """The trusted verification controller, driven by the scenario loop."""

    def __init__(
        self,
        topo: Topology,
        registry: KeyRegistry,
        magic: Ternary,
        seed: int | str = 0,
        timeout: int = DEFAULT_TIMEOUT,
        poll_rate: float = DEFAULT_POLL_RATE,
        history: int | None = None,
        window: int | None = None,
    ):
        from .snapshots import DEFAULT_HISTORY, DEFAULT_WINDOW

        self.topo = topo
        self.registry = registry
        self.magic = magic
        self.timeout = timeout
        self.window = window if window is not None else DEFAULT_WINDOW
        self.service = SnapshotService(
            topo, history=history if history is not None else DEFAULT_HISTORY, window=self.window
        )
        self.rng = random.Random(f"{seed}:controller")
        self._poll_rng = random.Random(f"{seed}:polls")
        self._poll_rate = poll_rate
        self._next_poll = self._poll_gap()
        self.sessions: dict[bytes, Session] = {}
        self.outstanding: dict[bytes, tuple[bytes, AccessPoint]] = {}  # nonce_a -> (nonce_q, target)
        self.seen_nonces: dict[str, list[bytes]] = {}
        self.findings: list[Finding] = []
        self.rejects: list[tuple[int, str]] = []
        self.reports_sent: list[tuple[int, str, str, bytes, str]] = []  # tick, client, kind, frame, body
        self.last_geo: dict[str, frozenset[str]] = {}

    # -- wiring ----------------------------------------------------------

    def _poll_gap(self) -> int:
        if self._poll_rate >= 1.0:
            return 1
        return 1 + int(math.log(1.0 - self._poll_rng.random()) / math.log(1.0 - self._poll_rate))

    def install_magic_rules(self, net: Network) -> None:
        """Install service-owned interception rules at access-point switches.

        The rules are part of the monitored configuration: if the
        adversary removes one, that shows up like any other table change.
        """
        rule = magic_rule(self.topo.width, self.magic)
        for sw in sorted({ap.switch for ap in self.topo.access_points}):
            net.apply_flow_mod(sw, "add", rule)

    def on_events(self, events: list[SwitchEvent], net: Network) -> None:
        for ev in events:
            try:
                self.service.ingest_event(ev)
            except GapDetected as gap:
                self.findings.append(
                    Finding(ev.tick, "gap", f"sw={gap.switch} expected_seq={gap.expected} got_seq={gap.got}")
                )
                self.service.resync(ev.switch, ev.seq - 1)
                self.service.ingest_event(ev)
            if ev.kind == "packet_in":
                self._handle_packet_in(ev, net)

    def on_tick(self, tick: int, net: Network) -> None:
        while self._next_poll <= tick:
            self.service.poll_all(net)
            self._next_poll += self._poll_gap()
        for f in self.service.poll_findings:
            self.findings.append(
                Finding(tick, "transient", f"poll_disagreement sw={f.switch} status={f.status} rule[{f.rule}]")
            )
        self.service.poll_findings.clear()
        due = [s for s in self.sessions.values() if s.deadline <= tick]
        for session in sorted(due, key=lambda s: s.nonce):
            self._finalize(session, tick, net)

    def finish(self, net: Network) -> None:
        """End-of-run sweep: report rules that came and went within the window."""
        for f in self.service.detect_transients(self.window):
            self.findings.append(Finding(net.tick, "transient", f.line()))

    # -- the protocol proper ----------------------------------------------

    def intercept(self, event: SwitchEvent) -> ClientQuery:
        """Decode + authenticate an intercepted query packet-in.

        Raises InterceptError on undecryptable payloads, replayed nonces,
        unenrolled clients, and queries arriving at a different client's
        access point (spoofing).
        """
        packet = event.packet
        if not self.magic.matches(packet.header):
            raise InterceptError("header does not match the magic pattern")
        try:
            msg = wire.parse_frame(packet.payload)
        except wire.WireError as e:
            raise InterceptError(f"unparseable frame: {e}") from None
        if msg.msgtype != wire.MSG_QUERY:
            raise InterceptError(f"not a query frame (msgtype {msg.msgtype})")
        try:
            plaintext = self.registry.controller_seal.unseal(msg.sealed)
        except ValueError:
            raise InterceptError("decryption failed") from None
        try:
            kind, client, nonce, params = wire.decode_query_plaintext(plaintext)
        except wire.WireError as e:
            raise InterceptError(f"bad query payload: {e}") from None
        if client not in self.registry.client_keys:
            raise InterceptError(f"client {client} is not enrolled")
        if nonce in self.seen_nonces.get(client, ()):
            raise InterceptError("replayed query nonce")
        ap = self.topo.access_point_at(event.switch, event.in_port)
        if ap is None:
            raise InterceptError("query did not enter at an access point")
        if ap.client != client:
            raise InterceptError(f"spoofed query: claims {client} but entered at {ap.alias}")
        seen = self.seen_nonces.setdefault(client, [])
        seen.append(nonce)
        del seen[:-REPLAY_WINDOW]
        return ClientQuery(client=client, kind=kind, nonce=nonce, params=params, request_point=ap)

    def _handle_packet_in(self, event: SwitchEvent, net: Network) -> None:
        try:
            msg = wire.parse_frame(event.packet.payload)
        except wire.WireError as e:
            self.rejects.append((event.tick, f"unparseable packet-in: {e}"))
            return
        if msg.msgtype == wire.MSG_QUERY:
            try:
                query = self.intercept(event)
            except InterceptError as e:
                self.rejects.append((event.tick, str(e)))
                return
            self._start_session(query, event.tick, net)
        elif msg.msgtype == wire.MSG_REPLY:
            self._handle_reply(msg, event.tick)
        else:
            self.rejects.append((event.tick, f"unexpected in-band msgtype {msg.msgtype}"))

    def _start_session(self, query: ClientQuery, tick: int, net: Network) -> None:
        snap = self.service.current()
        session = Session(
            nonce=query.nonce,
            client=query.client,
            kind=query.kind,
            request_point=query.request_point,
            body="",
            deadline=tick,
        )
        if query.kind == "isolation":
            own, foreign = verify.isolation_candidates(self.topo, snap, query.request_point, query.client)
            session.body = verify.render_isolation(query.client, query.request_point.alias, own, foreign)
            if foreign:
                aliases = ",".join(sorted(ap.alias for ap in foreign))
                self.findings.append(Finding(tick, "isolation", f"client={query.client} foreign={aliases}"))
            candidates = sorted(own | foreign, key=lambda ap: ap.alias)
            session.requested = len(candidates)
            session.deadline = tick + self.timeout
            for ap in candidates:
                nonce_a = self.rng.randbytes(wire.NONCE_LEN)
                session.challenges[nonce_a] = ap
                self.outstanding[nonce_a] = (query.nonce, ap)
                challenge = Packet(self.magic.value, wire.frame_challenge(nonce_a, ap.alias))
                net.packet_out(ap.switch, ap.port, challenge)
            self.sessions[query.nonce] = session
        elif query.kind == "sources":
            sources = verify.reachable_sources(self.topo, snap, query.request_point)
            session.body = verify.render_sources(query.client, query.request_point.alias, sources)
            self._finalize(session, tick, net)
        elif query.kind == "geo":
            report = verify.geo_exposure(self.topo, snap, query.client)
            session.body = verify.render_geo(query.client, report)
            regions = frozenset(report.regions)
            prev = self.last_geo.get(query.client)
            if prev is not None and regions - prev:
                grown = ",".join(sorted(regions - prev))
                self.findings.append(Finding(tick, "geo", f"client={query.client} new_regions={grown}"))
            self.last_geo[query.client] = regions
            self._finalize(session, tick, net)
        else:  # summary
            summary = verify.transfer_summary(self.topo, snap, query.client)
            session.body = verify.render_summary(query.client, summary)
            self._finalize(session, tick, net)

    def _handle_reply(self, msg: wire.Message, tick: int) -> None:
        entry = self.outstanding.get(msg.nonce)
        if entry is None:
            self.rejects.append((tick, "reply with unknown or already-used challenge nonce"))
            return
        nonce_q, target = entry
        if msg.alias != target.alias:
            self.rejects.append((tick, f"reply alias {msg.alias} does not match challenged endpoint"))
            return
        if msg.client != target.client:
            self.rejects.append((tick, f"reply claims {msg.client} for {target.alias}"))
            return
        key = self.registry.client_keys.get(msg.client)
        if key is None:
            self.rejects.append((tick, f"reply from unenrolled client {msg.client}"))
            return
        if not key.verify(msg.signature, msg.signed_portion):
            self.rejects.append((tick, f"reply signature check failed for {msg.alias}"))
            return
        del self.outstanding[msg.nonce]
        session = self.sessions.get(nonce_q)
        if session is None:
            self.rejects.append((tick, "reply for a closed session"))
            return
        session.verified.append(target.alias)

    def _finalize(self, session: Session, tick: int, net: Network) -> None:
        params = [("body", session.body)]
        if session.kind == "isolation":
            params.append(("verified", ",".join(sorted(session.verified)) or "-"))
        unsigned = wire.report_unsigned(
            session.kind, session.nonce, session.requested, len(session.verified), params
        )
        frame = wire.frame_report(unsigned, self.registry.controller_signing.sign(unsigned))
        self.sessions.pop(session.nonce, None)
        for nonce_a in list(session.challenges):
            self.outstanding.pop(nonce_a, None)
        self.reports_sent.append((tick, session.client, session.kind, frame, session.body))
        rp = session.request_point
        net.packet_out(rp.switch, rp.port, Packet(self.magic.value, frame))

    # -- convenience (spec-level operation, one call) ----------------------

    def run_isolation_protocol(self, query: ClientQuery, net: Network) -> None:
        """Start the isolation session for an already-intercepted query.

        The surrounding tick loop delivers challenges, collects replies
        and triggers finalization at the deadline; the report then goes
        out by packet-out at the request point.
        """
        if query.kind != "isolation":
            raise ValueError("run_isolation_protocol handles isolation queries")
        self._start_session(query, net.tick, net)


def default_magic(width: int) -> Ternary:
    """Reserved header pattern for protocol traffic: top four bits set."""
    if width <= 4:
        return Ternary.parse("1" * width)
    return Ternary.parse("1111" + "x" * (width - 4))


def build_agents(
    topo: Topology,
    registry: KeyRegistry,
    client_signing: dict[str, SigningKey],
    magic: Ternary,
    seed: int | str,
) -> dict[str, ClientAgent]:
    agents = {}
    for client in sorted(client_signing):
        agents[client] = ClientAgent(
            client=client,
            topo=topo,
            signing=client_signing[client],
            controller_key=registry.controller_signing.verify_key,
            controller_seal_pub=registry.controller_seal.public_raw,
            magic=magic,
            seed=seed,
        )
    return agents
