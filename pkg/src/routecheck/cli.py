"""Command-line surface.

Subcommands: run, query, snapshot dump, oracle, scenario check. Exit
codes: 0 clean, 1 config/usage errors, 2 security findings (run) or
oracle mismatches.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .oracle import MUTATIONS, run_cases
from .scenario import ScenarioError, parse_scenario
from .service import RunConfig, apply_width_override, run_session
from .snapshots import export_snapshot, parse_snapshot_dump
from .topology import TopologyError, load_topology
from . import verify

SEED_ENV = "RVAAS_SEED"


def _add_common(p: argparse.ArgumentParser, scenario: bool = True) -> None:
    p.add_argument("--topology", required=True, help="topology document path")
    if scenario:
        p.add_argument("--scenario", required=True, help="scenario script path")
    p.add_argument("--seed", type=int, default=0, help=f"run seed (overridden by ${SEED_ENV})")
    p.add_argument("--width", type=int, default=None, help="override header width")
    p.add_argument("--magic", default=None, help="magic ternary pattern for protocol traffic")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="routecheck", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario with the verification controller attached")
    _add_common(p_run)
    p_run.add_argument("--poll-rate", type=float, default=0.05, help="active poll rate per tick")
    p_run.add_argument("--timeout", type=int, default=8, help="auth reply timeout in ticks")
    p_run.add_argument("--history", type=int, default=256, help="snapshot ring size")
    p_run.add_argument("--window", type=int, default=1024, help="history retention window in ticks")
    p_run.add_argument("--out", default=None, help="artifact output directory")

    p_query = sub.add_parser("query", help="answer a client query from a snapshot dump")
    p_query.add_argument("--topology", required=True)
    p_query.add_argument("--snapshot", required=True, help="snapshot dump path")
    p_query.add_argument("--kind", required=True, choices=["isolation", "sources", "geo", "summary"])
    p_query.add_argument("--client", required=True)
    p_query.add_argument("--width", type=int, default=None)

    p_snap = sub.add_parser("snapshot", help="snapshot tooling")
    p_snap.add_argument("action", choices=["dump"])
    _add_common(p_snap)
    p_snap.add_argument("--poll-rate", type=float, default=0.05)
    p_snap.add_argument("--out", default=None, help="write the dump here instead of stdout")

    p_oracle = sub.add_parser("oracle", help="engine-vs-simulation equivalence over random networks")
    p_oracle.add_argument("--count", type=int, default=20)
    p_oracle.add_argument("--seed", type=int, default=0)
    p_oracle.add_argument("--width", type=int, default=8)
    p_oracle.add_argument("--switches", type=int, default=6)
    p_oracle.add_argument("--rules", type=int, default=12)
    p_oracle.add_argument("--mutate", default=None, choices=list(MUTATIONS),
                          help="inject a deliberate analysis bug (the harness must then fail)")

    p_scn = sub.add_parser("scenario", help="scenario tooling")
    p_scn.add_argument("action", choices=["check"])
    p_scn.add_argument("--topology", required=True)
    p_scn.add_argument("--scenario", required=True)
    p_scn.add_argument("--width", type=int, default=None)

    return parser


def _seed_of(args) -> int:
    env = os.environ.get(SEED_ENV)
    if env is not None:
        return int(env)
    return args.seed


def cmd_run(args) -> int:
    config = RunConfig(
        topology_path=args.topology,
        scenario_path=args.scenario,
        seed=_seed_of(args),
        poll_rate=args.poll_rate,
        magic=args.magic,
        width=args.width,
        history=args.history,
        window=args.window,
        timeout=args.timeout,
        out_dir=args.out,
    )
    result = run_session(config)
    for f in result.findings:
        print(f.line())
    print(f"findings={len(result.findings)} reports={len(result.controller.reports_sent)} exit={result.exit_code}")
    return result.exit_code


def cmd_query(args) -> int:
    topo_text = apply_width_override(Path(args.topology).read_text(), args.width)
    topo = load_topology(topo_text)
    snap = parse_snapshot_dump(Path(args.snapshot).read_text(), topo)
    aps = topo.client_aps(args.client)
    if not aps:
        raise TopologyError(f"unknown client {args.client!r}")
    point = aps[0]
    if args.kind == "isolation":
        own, foreign = verify.isolation_candidates(topo, snap, point, args.client)
        body = verify.render_isolation(args.client, point.alias, own, foreign)
    elif args.kind == "sources":
        sources = verify.reachable_sources(topo, snap, point)
        body = verify.render_sources(args.client, point.alias, sources)
    elif args.kind == "geo":
        body = verify.render_geo(args.client, verify.geo_exposure(topo, snap, args.client))
    else:
        body = verify.render_summary(args.client, verify.transfer_summary(topo, snap, args.client))
    print(body)
    return 0


def cmd_snapshot(args) -> int:
    config = RunConfig(
        topology_path=args.topology,
        scenario_path=args.scenario,
        seed=_seed_of(args),
        poll_rate=args.poll_rate,
        magic=args.magic,
        width=args.width,
    )
    result = run_session(config, write=False)
    dump = export_snapshot(result.final_snapshot())
    if args.out:
        Path(args.out).write_text(dump)
    else:
        sys.stdout.write(dump)
    return 0


def cmd_oracle(args) -> int:
    cases = run_cases(
        count=args.count,
        seed=_seed_of(args),
        width=args.width,
        max_switches=args.switches,
        max_rules=args.rules,
        mutation=args.mutate,
    )
    failed = 0
    for case in cases:
        verdict = "OK" if case.ok else "MISMATCH"
        print(f"case {case.index:03d} seed={case.seed} {verdict}")
        for m in case.mismatches:
            print(f"  {m}")
        failed += 0 if case.ok else 1
    print(f"cases={len(cases)} failed={failed}")
    return 0 if failed == 0 else 2


def cmd_scenario(args) -> int:
    topo_text = apply_width_override(Path(args.topology).read_text(), args.width)
    topo = load_topology(topo_text)
    parse_scenario(Path(args.scenario).read_text(), topo)
    print("scenario ok")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "query":
            return cmd_query(args)
        if args.command == "snapshot":
            return cmd_snapshot(args)
        if args.command == "oracle":
            return cmd_oracle(args)
        if args.command == "scenario":
            return cmd_scenario(args)
    except (TopologyError, ScenarioError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 1


if __name__ == "__main__":
    sys.exit(main())
