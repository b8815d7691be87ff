"""Command-line entry point: run experiments, query paths and assessments."""

from __future__ import annotations

import argparse
import json
import random
import sys
from pathlib import Path

from . import harness, lp, selection, threat, topology
from .routing import bidirectional_path_set, enumerate_paths
from .selection import _assess_pair_grid, choose_guards
from .threat import CircuitSpec, ThreatConfig, ThreatContext
from .topology import AdversaryMode, ParseError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

_EXPERIMENT_MODES = {"e1": AdversaryMode.SINGLE_AS,
                     "e3": AdversaryMode.SIBLING,
                     "e4": AdversaryMode.STATE}


class ConfigError(Exception):
    """Bad configuration or unreadable/invalid input file."""


class _Parser(argparse.ArgumentParser):
    # Usage errors are configuration errors, not runtime failures.
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value config file; "
                        "command-line flags override it")
    parser.add_argument("--topology", help="AS relationship file")
    parser.add_argument("--siblings", help="organization sibling file")
    parser.add_argument("--countries", help="AS country file")
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--mode", choices=[m.value for m in AdversaryMode],
                        default=None)
    parser.add_argument("--exclude-src-dst-ases", action="store_true",
                        default=None)
    parser.add_argument("--state-country", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="astoria",
                     description="AS-aware relay selection simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[], help="run an experiment")
    _add_common(run)
    run.add_argument("--consensus", help="relay consensus CSV")
    run.add_argument("--traces", help="request trace CSV")
    run.add_argument("--clients", help="client label,asn file")
    run.add_argument("--experiment", choices=["e1", "e2", "e3", "e4", "e5"])
    run.add_argument("--selector", choices=["vanilla", "uniform", "astoria",
                                            "perfect-balance"], default=None)
    run.add_argument("--guard-size", type=int, default=None)
    run.add_argument("--guard-sizes", default=None,
                     help="comma-separated sizes for the guard-set experiment")
    run.add_argument("--guard-sets-per-size", type=int, default=None)
    run.add_argument("--max-requests-per-circuit", type=int, default=None)
    run.add_argument("--safe-threshold", type=float, default=None)
    run.add_argument("--enumerate-cap", type=int, default=None)
    run.add_argument("--exclude-same-as-pairs", action="store_true",
                     default=None)
    run.add_argument("--tightness", action="store_true", default=None,
                     help="add the vulnerable-path-fraction distribution "
                          "to the report")
    run.add_argument("--workers", type=int, default=None,
                     help="parallel client workers (results are "
                          "independent of this)")
    run.add_argument("--out", default=".", help="output directory")

    assess_p = sub.add_parser("assess", help="assess one circuit")
    _add_common(assess_p)
    assess_p.add_argument("--src", type=int, required=True)
    assess_p.add_argument("--entry", type=int, required=True)
    assess_p.add_argument("--exit", type=int, required=True)
    assess_p.add_argument("--dst", type=int, required=True)

    paths_p = sub.add_parser("paths", help="query the path set between two ASes")
    _add_common(paths_p)
    paths_p.add_argument("--a", type=int, required=True)
    paths_p.add_argument("--b", type=int, required=True)
    paths_p.add_argument("--enumerate", type=int, default=0, metavar="CAP",
                         help="also enumerate up to CAP concrete paths per "
                              "direction")

    lp_p = sub.add_parser("lp-dump", help="dump the minimax program for a "
                                          "client/destination pair")
    _add_common(lp_p)
    lp_p.add_argument("--consensus", help="relay consensus CSV")
    lp_p.add_argument("--src", type=int, required=True)
    lp_p.add_argument("--dst", type=int, required=True)
    lp_p.add_argument("--guard-size", type=int, default=3)
    return parser


def _apply_config_file(args: argparse.Namespace) -> None:
    """Fill unset options from a flat key=value file; flags win."""
    if not args.config:
        return
    path = Path(args.config)
    if not path.is_file():
        raise ConfigError(f"{path}: config file not found")
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {lineno}: expected key=value")
        key, _, value = line.partition("=")
        dest = key.strip().replace("-", "_")
        value = value.strip()
        if not hasattr(args, dest):
            raise ConfigError(f"{path}: line {lineno}: unknown key {key.strip()!r}")
        if getattr(args, dest) is not None and dest != "config":
            continue  # explicit flag overrides the file
        current = getattr(args, dest)
        try:
            if dest in ("seed", "guard_size", "guard_sets_per_size",
                        "max_requests_per_circuit", "enumerate_cap",
                        "workers", "src", "entry", "exit", "dst", "a", "b",
                        "enumerate"):
                setattr(args, dest, int(value))
            elif dest in ("safe_threshold",):
                setattr(args, dest, float(value))
            elif dest in ("exclude_src_dst_ases", "exclude_same_as_pairs",
                          "tightness"):
                setattr(args, dest, value.lower() in ("1", "true", "yes"))
            else:
                setattr(args, dest, value)
        except ValueError:
            raise ConfigError(
                f"{path}: line {lineno}: invalid value for {key.strip()!r}"
            ) from None


def _require(args: argparse.Namespace, name: str) -> str:
    value = getattr(args, name, None)
    if not value:
        raise ConfigError(f"--{name.replace('_', '-')} is required")
    return value


def _load_file(loader, path_str: str):
    path = Path(path_str)
    if not path.is_file():
        raise ConfigError(f"{path}: file not found")
    with open(path, "r", encoding="utf-8") as fh:
        return loader(fh, source=str(path))


def _build_context(args: argparse.Namespace) -> ThreatContext:
    graph = _load_file(topology.load_topology, _require(args, "topology"))
    org = (_load_file(topology.load_siblings, args.siblings)
           if args.siblings else topology.OrgMap())
    cc = (_load_file(topology.load_countries, args.countries)
          if args.countries else topology.CountryMap())
    cfg = ThreatConfig(
        exclude_src_dst_ases=bool(args.exclude_src_dst_ases),
        state_country=args.state_country)
    return ThreatContext.build(graph, org, cc, cfg=cfg)


def _resolve_mode(args: argparse.Namespace, warnings: list[str]) -> AdversaryMode:
    experiment = getattr(args, "experiment", None)
    forced = _EXPERIMENT_MODES.get(experiment)
    requested = AdversaryMode(args.mode) if args.mode else None
    if forced is not None:
        if requested is not None and requested is not forced:
            warnings.append(f"experiment {experiment} fixes the adversary "
                            f"mode to {forced.value}; --mode "
                            f"{requested.value} ignored")
        return forced
    return requested or AdversaryMode.SINGLE_AS


def _json_default(obj):
    if isinstance(obj, frozenset):
        return sorted(obj, key=lambda k: (isinstance(k, str), str(k)))
    raise TypeError(f"not JSON serializable: {obj!r}")


def cmd_run(args: argparse.Namespace) -> int:
    warnings: list[str] = []
    if not args.experiment:
        raise ConfigError("--experiment is required")
    mode = _resolve_mode(args, warnings)
    config = harness.ExperimentConfig(
        experiment=args.experiment,
        selector=args.selector or "vanilla",
        mode=mode,
        guard_size=args.guard_size if args.guard_size is not None else 3,
        guard_sizes=tuple(int(k) for k in
                          (args.guard_sizes or "1,2,3").split(",")),
        guard_sets_per_size=(args.guard_sets_per_size
                             if args.guard_sets_per_size is not None else 20),
        seed=args.seed,
        max_requests_per_circuit=(args.max_requests_per_circuit
                                  if args.max_requests_per_circuit is not None
                                  else 50),
        safe_threshold=args.safe_threshold or 0.0,
        enumerate_cap=(args.enumerate_cap
                       if args.enumerate_cap is not None else 10_000),
        exclude_same_as_pairs=bool(args.exclude_same_as_pairs),
        tightness=bool(args.tightness),
        workers=args.workers if args.workers is not None else 1,
    )
    try:
        warnings.extend(config.validate())
    except harness.HarnessError as exc:
        raise ConfigError(str(exc)) from None
    if mode is AdversaryMode.STATE and not args.countries:
        warnings.append("state mode without --countries: every AS is an "
                        "unknown country and no attacker can match")
    if mode is AdversaryMode.SIBLING and not args.siblings:
        warnings.append("sibling mode without --siblings: every AS is its "
                        "own organization")
    for warning in warnings:
        print(f"warning: {warning}", file=sys.stderr)

    ctx = _build_context(args)
    consensus = _load_file(selection.load_consensus, _require(args, "consensus"))
    traces = _load_file(harness.load_traces, _require(args, "traces"))
    clients = _load_file(harness.load_clients, _require(args, "clients"))

    if config.experiment in harness.LIVE_EXPERIMENTS:
        metrics = harness.run_live_style(ctx, consensus, traces, clients,
                                         config)
    else:
        metrics = harness.run_enumeration_style(ctx, consensus, traces,
                                                clients, config)

    extras: dict = {}
    if metrics.circuit_records:
        extras["load_balance"] = harness.load_balance_report(
            metrics.circuit_records, consensus)
        if config.tightness:
            extras["tightness"] = harness.estimate_tightness(
                ctx, consensus, metrics.circuit_records, mode,
                cap=config.enumerate_cap)

    config_echo = config.echo()
    config_echo.update({
        "topology": args.topology, "siblings": args.siblings,
        "countries": args.countries, "consensus": args.consensus,
        "traces": args.traces, "clients": args.clients,
        "state_country": args.state_country,
        "exclude_src_dst_ases": bool(args.exclude_src_dst_ases),
    })
    body = metrics.report()
    body.pop("seeds", None)
    report = {"config": config_echo, "seeds": metrics.seeds,
              "metrics": body, **extras}

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    harness.write_report(out_dir / "report.json", report)
    harness.write_circuit_log(out_dir / "circuits.csv",
                              metrics.circuit_records)
    print(f"report written to {out_dir / 'report.json'}")
    print(f"circuit log written to {out_dir / 'circuits.csv'}")
    return EXIT_OK


def cmd_assess(args: argparse.Namespace) -> int:
    warnings: list[str] = []
    mode = _resolve_mode(args, warnings)
    ctx = _build_context(args)
    assessment = threat.assess(
        ctx, CircuitSpec(src=args.src, entry=args.entry, exit=args.exit,
                         dst=args.dst), mode)
    print(json.dumps({
        "src": args.src, "entry": args.entry, "exit": args.exit,
        "dst": args.dst, "mode": mode.value,
        "vulnerable": assessment.vulnerable,
        "assessable": assessment.assessable,
        "attackers": assessment.attackers,
    }, sort_keys=True, indent=2, default=_json_default))
    return EXIT_OK


def cmd_paths(args: argparse.Namespace) -> int:
    ctx = _build_context(args)
    union = bidirectional_path_set(ctx.cache, args.a, args.b)
    payload: dict = {"a": args.a, "b": args.b,
                     "path_set": sorted(union)}
    if args.enumerate:
        forward, trunc_f = enumerate_paths(ctx.cache.tree(args.b), args.a,
                                           args.enumerate)
        reverse, trunc_r = enumerate_paths(ctx.cache.tree(args.a), args.b,
                                           args.enumerate)
        payload["a_to_b"] = {"paths": forward, "truncated": trunc_f}
        payload["b_to_a"] = {"paths": reverse, "truncated": trunc_r}
    print(json.dumps(payload, sort_keys=True, indent=2))
    return EXIT_OK


def cmd_lp_dump(args: argparse.Namespace) -> int:
    warnings: list[str] = []
    mode = _resolve_mode(args, warnings)
    ctx = _build_context(args)
    consensus = _load_file(selection.load_consensus, _require(args, "consensus"))
    guards = choose_guards(consensus, args.guard_size,
                           random.Random(harness.derive_seed(args.seed,
                                                             "guards", 0)))
    grid = _assess_pair_grid(ctx, args.src, args.dst,
                             guards.relays(consensus),
                             consensus.exit_relays(), mode)
    assessable = [p for p in grid if p is not None]
    vulnerable = [p for p in assessable if p.attackers]
    print(f"guards: {', '.join(guards.fingerprints)}")
    print(f"assessable pairs: {len(assessable)}; "
          f"safe: {len(assessable) - len(vulnerable)}; "
          f"vulnerable: {len(vulnerable)}")
    if not vulnerable:
        print("no vulnerable pairs: the minimax program would not be invoked")
        return EXIT_OK
    problem = lp.SelectionProblem.from_attacker_sets(
        pairs=tuple((p.entry.fingerprint, p.exit.fingerprint)
                    for p in vulnerable),
        attacker_sets=tuple(p.attackers for p in vulnerable))
    dist = lp.solve_minimax(problem)
    print(lp.format_tableau(problem, dist))
    return EXIT_OK


_COMMANDS = {"run": cmd_run, "assess": cmd_assess, "paths": cmd_paths,
             "lp-dump": cmd_lp_dump}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    try:
        _apply_config_file(args)
        return _COMMANDS[args.command](args)
    except (ConfigError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - runtime failures exit 2
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
