"""Experiment harness: trace replay, grid enumeration, and statistics.

Replays website request traces through a selector per client AS (the
live-style experiments), or enumerates full entry/exit grids per
client-destination pair (the simulation-style experiments), and computes
the security and load-balance metrics. All randomness flows from one
master seed through named derived streams, so identical inputs give
byte-identical outputs regardless of worker count.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import multiprocessing
import random
import statistics
from dataclasses import asdict, dataclass, field
from typing import IO, Iterable, Sequence, Union

from .selection import (AstoriaSelector, CircuitPool, CircuitSelector,
                        Consensus, PerfectBalanceSelector, SelectionConfig,
                        SelectionError, UniformSelector, VanillaSelector,
                        choose_guards, get_or_build_circuit,
                        perfect_balance_distribution)
from .threat import (CircuitSpec, ThreatContext, assess,
                     attacker_free_fraction, vulnerable_path_fraction)
from .topology import AdversaryMode, ParseError, _parse_asn

LIVE_EXPERIMENTS = ("e1", "e3", "e4")
ENUMERATION_EXPERIMENTS = ("e2", "e5")

_Z_TABLE = {0.99: 2.576, 0.95: 1.960, 0.90: 1.645}


class HarnessError(RuntimeError):
    pass


@dataclass(frozen=True)
class TraceRequest:
    site: str
    dst_asn: int
    is_main: bool


def load_traces(reader: Union[IO, Iterable], source: str | None = None) -> list[TraceRequest]:
    """Load the trace CSV ``site,dst_asn,is_main``; one main request per site."""
    rows = csv.reader(line.decode("utf-8") if isinstance(line, bytes) else line
                      for line in reader)
    traces: list[TraceRequest] = []
    mains: dict[str, int] = {}
    header = None
    for lineno, row in enumerate(rows, start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if header is None:
            header = [c.strip() for c in row]
            if header != ["site", "dst_asn", "is_main"]:
                raise ParseError("expected header site,dst_asn,is_main",
                                 source=source, line=lineno)
            continue
        if len(row) != 3:
            raise ParseError(f"expected 3 columns, got {len(row)}",
                             source=source, line=lineno)
        site = row[0].strip()
        if not site:
            raise ParseError("empty site label", source=source, line=lineno)
        dst = _parse_asn(row[1].strip(), source, lineno)
        flag = row[2].strip()
        if flag not in ("0", "1"):
            raise ParseError(f"is_main must be 0 or 1, got {flag!r}",
                             source=source, line=lineno)
        is_main = flag == "1"
        if is_main:
            mains[site] = mains.get(site, 0) + 1
        traces.append(TraceRequest(site=site, dst_asn=dst, is_main=is_main))
    if header is None:
        raise ParseError("missing header row", source=source, line=1)
    for site in {t.site for t in traces}:
        if mains.get(site, 0) != 1:
            raise ParseError(
                f"site {site!r} must have exactly one main request",
                source=source)
    return traces


def load_clients(reader: Union[IO, Iterable], source: str | None = None) -> list[tuple[str, int]]:
    """Load ``label,asn`` client lines (no header)."""
    clients: list[tuple[str, int]] = []
    for lineno, raw in enumerate(reader, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ParseError(f"expected 'label,asn', got {line!r}",
                             source=source, line=lineno)
        label = parts[0].strip()
        if not label:
            raise ParseError("empty client label", source=source, line=lineno)
        clients.append((label, _parse_asn(parts[1].strip(), source, lineno)))
    if not clients:
        raise ParseError("clients file is empty", source=source)
    return clients


@dataclass
class ExperimentConfig:
    experiment: str
    selector: str = "vanilla"
    mode: AdversaryMode = AdversaryMode.SINGLE_AS
    guard_size: int = 3
    guard_sizes: tuple[int, ...] = (1, 2, 3)
    guard_sets_per_size: int = 20
    seed: int = 42
    max_requests_per_circuit: int = 50
    safe_threshold: float = 0.0
    enumerate_cap: int = 10_000
    exclude_same_as_pairs: bool = False
    tightness: bool = False
    workers: int = 1

    def validate(self) -> list[str]:
        """Check internal consistency; returns human-readable warnings."""
        warnings = []
        if self.experiment not in LIVE_EXPERIMENTS + ENUMERATION_EXPERIMENTS:
            raise HarnessError(f"unknown experiment {self.experiment!r}")
        if self.selector not in ("vanilla", "uniform", "astoria",
                                 "perfect-balance"):
            raise HarnessError(f"unknown selector {self.selector!r}")
        if self.experiment in ENUMERATION_EXPERIMENTS:
            warnings.append(
                f"experiment {self.experiment} enumerates relay grids; "
                f"selector {self.selector!r} is ignored")
        if not 1 <= self.guard_size <= 3:
            raise HarnessError("guard size must be between 1 and 3")
        if any(not 1 <= k <= 3 for k in self.guard_sizes):
            raise HarnessError("guard sizes must be between 1 and 3")
        if self.workers < 1:
            raise HarnessError("workers must be at least 1")
        return warnings

    def echo(self) -> dict:
        data = asdict(self)
        data["mode"] = self.mode.value
        data["guard_sizes"] = list(self.guard_sizes)
        return data


def derive_seed(master: int, *stream) -> int:
    """Derive an independent 64-bit stream seed by counter-splitting."""
    payload = ":".join([str(master), *map(str, stream)]).encode()
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(),
                          "big")


@dataclass
class CircuitRecord:
    client_asn: int
    site: str
    dst_asn: int
    entry_fp: str
    middle_fp: str
    exit_fp: str
    provenance: str
    vulnerable: bool | None  # None: circuit had an unreachable leg
    attackers: tuple = ()

    CSV_HEADER = ("client_asn", "site", "dst_asn", "entry_fp", "middle_fp",
                  "exit_fp", "provenance", "vulnerable", "attackers")

    def csv_row(self) -> tuple:
        vulnerable = "" if self.vulnerable is None else str(int(self.vulnerable))
        return (self.client_asn, self.site, self.dst_asn, self.entry_fp,
                self.middle_fp, self.exit_fp, self.provenance, vulnerable,
                ";".join(str(a) for a in self.attackers))


@dataclass
class Metrics:
    experiment: str
    summary: dict
    per_label: dict
    per_client: list
    circuit_records: list = field(default_factory=list)
    seeds: dict = field(default_factory=dict)

    def report(self) -> dict:
        return {
            "experiment": self.experiment,
            "summary": self.summary,
            "per_label": self.per_label,
            "per_client": self.per_client,
            "seeds": self.seeds,
        }


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def _make_selector(kind: str, ctx: ThreatContext, consensus: Consensus,
                   guards, src: int, mode: AdversaryMode, rng: random.Random,
                   cfg: SelectionConfig) -> CircuitSelector:
    if kind == "vanilla":
        return VanillaSelector(consensus, guards, rng, cfg)
    if kind == "uniform":
        return UniformSelector(consensus, rng, cfg)
    if kind == "astoria":
        return AstoriaSelector(ctx, consensus, guards, src, mode, rng, cfg)
    if kind == "perfect-balance":
        return PerfectBalanceSelector(consensus, rng, cfg)
    raise HarnessError(f"unknown selector {kind!r}")


@dataclass
class _LiveClientResult:
    label: str
    asn: int
    seed: int
    sites_main_assessable: int = 0
    sites_main_vulnerable: int = 0
    sites_any_assessable: int = 0
    sites_any_vulnerable: int = 0
    circuits_built: int = 0
    circuits_assessable: int = 0
    circuits_vulnerable: int = 0
    records: list = field(default_factory=list)

    def stats(self) -> dict:
        return {
            "label": self.label,
            "client_asn": self.asn,
            "seed": self.seed,
            "websites_main_vulnerable": _ratio(self.sites_main_vulnerable,
                                               self.sites_main_assessable),
            "websites_any_vulnerable": _ratio(self.sites_any_vulnerable,
                                              self.sites_any_assessable),
            "circuits_vulnerable": _ratio(self.circuits_vulnerable,
                                          self.circuits_assessable),
            "circuits_built": self.circuits_built,
        }


def _run_live_client(ctx: ThreatContext, consensus: Consensus,
                     traces: Sequence[TraceRequest], config: ExperimentConfig,
                     label: str, client_asn: int, client_idx: int
                     ) -> _LiveClientResult:
    seed = derive_seed(config.seed, "client", client_idx)
    select_rng = random.Random(seed)
    guards = None
    if config.selector in ("vanilla", "astoria"):
        guard_rng = random.Random(derive_seed(config.seed, "guards", client_idx))
        guards = choose_guards(consensus, config.guard_size, guard_rng)
    sel_cfg = SelectionConfig(
        max_requests_per_circuit=config.max_requests_per_circuit,
        safe_threshold=config.safe_threshold)
    selector = _make_selector(config.selector, ctx, consensus, guards,
                              client_asn, config.mode, select_rng, sel_cfg)
    pool = CircuitPool()
    result = _LiveClientResult(label=label, asn=client_asn, seed=seed)
    # Per-site verdicts: main request and any request, tracked separately
    # because unassessable usages are excluded from denominators.
    site_main: dict[str, bool] = {}
    site_any: dict[str, bool] = {}
    for event, request in enumerate(traces):
        circuit, built = get_or_build_circuit(pool, selector, request.dst_asn,
                                              event, sel_cfg)
        usage = assess(ctx, CircuitSpec(src=client_asn,
                                        entry=circuit.entry.asn,
                                        exit=circuit.exit.asn,
                                        dst=request.dst_asn), config.mode)
        if built:
            result.circuits_built += 1
            if usage.assessable:
                result.circuits_assessable += 1
                result.circuits_vulnerable += int(usage.vulnerable)
            result.records.append(CircuitRecord(
                client_asn=client_asn, site=request.site,
                dst_asn=request.dst_asn, entry_fp=circuit.entry.fingerprint,
                middle_fp=circuit.middle.fingerprint,
                exit_fp=circuit.exit.fingerprint,
                provenance=circuit.provenance,
                vulnerable=usage.vulnerable if usage.assessable else None,
                attackers=tuple(sorted(usage.attackers, key=_class_sort_key))))
        if usage.assessable:
            if request.is_main:
                site_main[request.site] = usage.vulnerable
            site_any[request.site] = site_any.get(request.site, False) \
                or usage.vulnerable
    result.sites_main_assessable = len(site_main)
    result.sites_main_vulnerable = sum(site_main.values())
    result.sites_any_assessable = len(site_any)
    result.sites_any_vulnerable = sum(site_any.values())
    return result


def _class_sort_key(key):
    return (isinstance(key, str), key)


def _map_jobs(fn, jobs: list[tuple], workers: int) -> list:
    if workers > 1 and len(jobs) > 1:
        with multiprocessing.Pool(processes=min(workers, len(jobs))) as pool:
            return pool.starmap(fn, jobs)
    return [fn(*args) for args in jobs]


def run_live_style(ctx: ThreatContext, consensus: Consensus,
                   traces: Sequence[TraceRequest],
                   clients: Sequence[tuple[str, int]],
                   config: ExperimentConfig) -> Metrics:
    """Trace-replay experiment: per-client circuits, three vulnerability stats."""
    if config.experiment not in LIVE_EXPERIMENTS:
        raise HarnessError(
            f"experiment {config.experiment!r} is not a live-style experiment")
    config.validate()
    for request in traces:
        if request.dst_asn not in ctx.graph:
            raise HarnessError(
                f"trace destination AS {request.dst_asn} not in topology")
    for _, asn in clients:
        if asn not in ctx.graph:
            raise HarnessError(f"client AS {asn} not in topology")
    jobs = [(ctx, consensus, tuple(traces), config, label, asn, idx)
            for idx, (label, asn) in enumerate(clients)]
    results: list[_LiveClientResult] = _map_jobs(_run_live_client, jobs,
                                                 config.workers)

    per_label: dict[str, dict] = {}
    totals = _LiveClientResult(label="", asn=0, seed=0)
    for res in results:
        agg = per_label.setdefault(res.label, {
            "sites_main_assessable": 0, "sites_main_vulnerable": 0,
            "sites_any_assessable": 0, "sites_any_vulnerable": 0,
            "circuits_built": 0, "circuits_assessable": 0,
            "circuits_vulnerable": 0, "clients": 0})
        for key in ("sites_main_assessable", "sites_main_vulnerable",
                    "sites_any_assessable", "sites_any_vulnerable",
                    "circuits_built", "circuits_assessable",
                    "circuits_vulnerable"):
            agg[key] += getattr(res, key)
            setattr(totals, key, getattr(totals, key) + getattr(res, key))
        agg["clients"] += 1
    for agg in per_label.values():
        agg["websites_main_vulnerable"] = _ratio(agg["sites_main_vulnerable"],
                                                 agg["sites_main_assessable"])
        agg["websites_any_vulnerable"] = _ratio(agg["sites_any_vulnerable"],
                                                agg["sites_any_assessable"])
        agg["circuits_vulnerable_fraction"] = _ratio(
            agg["circuits_vulnerable"], agg["circuits_assessable"])

    summary = {
        "selector": config.selector,
        "mode": config.mode.value,
        "clients": len(results),
        "websites_main_vulnerable": _ratio(totals.sites_main_vulnerable,
                                           totals.sites_main_assessable),
        "websites_any_vulnerable": _ratio(totals.sites_any_vulnerable,
                                          totals.sites_any_assessable),
        "circuits_vulnerable": _ratio(totals.circuits_vulnerable,
                                      totals.circuits_assessable),
        "circuits_built": totals.circuits_built,
        "circuits_assessable": totals.circuits_assessable,
    }
    records = [rec for res in results for rec in res.records]
    seeds = {"master": config.seed,
             "clients": {f"{res.label}:{res.asn}": res.seed
                         for res in results}}
    return Metrics(experiment=config.experiment, summary=summary,
                   per_label=per_label,
                   per_client=[res.stats() for res in results],
                   circuit_records=records, seeds=seeds)


def _enumeration_fractions(ctx: ThreatContext, client_asn: int,
                           destinations: Sequence[int],
                           entry_asns: Sequence[int],
                           exit_asns: Sequence[int],
                           mode: AdversaryMode,
                           exclude_same_as_pairs: bool) -> list[float | None]:
    return [attacker_free_fraction(ctx, client_asn, dst, entry_asns,
                                   exit_asns, mode,
                                   exclude_same_as_pairs).fraction
            for dst in destinations]


def _fraction_stats(fractions: list[float]) -> dict:
    if not fractions:
        return {"count": 0, "mean": None, "five_percent": None, "cdf": [],
                "safe_majority": None}
    mean = sum(fractions) / len(fractions)
    five_percent = 100.0 * sum(f < 0.05 for f in fractions) / len(fractions)
    majority = [1.0 if f > 0.5 else 0.0 for f in fractions]
    safe_majority = {"mean": sum(majority) / len(majority)}
    if len(majority) >= 2:
        low, high = confidence_interval(majority, level=0.99)
        safe_majority["ci99"] = [low, high]
    return {"count": len(fractions), "mean": mean,
            "five_percent": five_percent, "cdf": sorted(fractions),
            "safe_majority": safe_majority}


def run_enumeration_style(ctx: ThreatContext, consensus: Consensus,
                          traces: Sequence[TraceRequest],
                          clients: Sequence[tuple[str, int]],
                          config: ExperimentConfig) -> Metrics:
    """Grid experiments: attacker-free fractions over full relay grids.

    The all-relay variant covers every guard-flagged entry and exit-flagged
    exit; the guard-set variant repeats the grid with seeded guard sets of
    each configured size.
    """
    if config.experiment not in ENUMERATION_EXPERIMENTS:
        raise HarnessError(f"experiment {config.experiment!r} is not an "
                           f"enumeration-style experiment")
    config.validate()
    for _, asn in clients:
        if asn not in ctx.graph:
            raise HarnessError(f"client AS {asn} not in topology")
    destinations = list(dict.fromkeys(t.dst_asn for t in traces))
    for dst in destinations:
        if dst not in ctx.graph:
            raise HarnessError(f"trace destination AS {dst} not in topology")
    exit_asns = [r.asn for r in consensus.exit_relays()]
    if not exit_asns:
        raise HarnessError("consensus has no exit relays")
    seeds: dict = {"master": config.seed}
    per_client: list[dict] = []
    per_label: dict[str, dict] = {}

    if config.experiment == "e2":
        entry_asns = [r.asn for r in consensus.guard_relays()]
        if not entry_asns:
            raise HarnessError("consensus has no guard relays")
        jobs = [(ctx, asn, destinations, entry_asns, exit_asns, config.mode,
                 config.exclude_same_as_pairs)
                for _, asn in clients]
        rows = _map_jobs(_enumeration_fractions, jobs, config.workers)
        label_fractions: dict[str, list[float]] = {}
        all_fractions: list[float] = []
        undefined = 0
        for (label, asn), fracs in zip(clients, rows):
            defined = [f for f in fracs if f is not None]
            undefined += sum(f is None for f in fracs)
            all_fractions.extend(defined)
            label_fractions.setdefault(label, []).extend(defined)
            per_client.append({
                "label": label, "client_asn": asn,
                "fractions": [
                    {"dst_asn": dst, "fraction": f}
                    for dst, f in zip(destinations, fracs)],
            })
        per_label = {label: _fraction_stats(fracs)
                     for label, fracs in label_fractions.items()}
        summary = {"mode": config.mode.value,
                   "entries": len(entry_asns), "exits": len(exit_asns),
                   "destinations": len(destinations),
                   "undefined_pairs": undefined,
                   **_fraction_stats(all_fractions)}
        return Metrics(experiment="e2", summary=summary, per_label=per_label,
                       per_client=per_client, seeds=seeds)

    # Guard-set variant: repeat the grid per seeded guard set of each size.
    by_size: dict[int, list[float]] = {k: [] for k in config.guard_sizes}
    guard_set_info: dict[str, list[str]] = {}
    seeds["guard_sets"] = {}
    for k in config.guard_sizes:
        for set_idx in range(config.guard_sets_per_size):
            gs_seed = derive_seed(config.seed, "guardset", k, set_idx)
            seeds["guard_sets"][f"{k}:{set_idx}"] = gs_seed
            guards = choose_guards(consensus, k, random.Random(gs_seed))
            guard_set_info[f"{k}:{set_idx}"] = list(guards.fingerprints)
            entry_asns = [consensus.relay(fp).asn
                          for fp in guards.fingerprints]
            jobs = [(ctx, asn, destinations, entry_asns, exit_asns,
                     config.mode, config.exclude_same_as_pairs)
                    for _, asn in clients]
            rows = _map_jobs(_enumeration_fractions, jobs, config.workers)
            for (label, asn), fracs in zip(clients, rows):
                defined = [f for f in fracs if f is not None]
                by_size[k].extend(defined)
                per_client.append({
                    "label": label, "client_asn": asn, "guard_size": k,
                    "guard_set": set_idx,
                    "mean_fraction": (sum(defined) / len(defined)
                                      if defined else None)})
    summary = {
        "mode": config.mode.value,
        "guard_sets_per_size": config.guard_sets_per_size,
        "guard_sets": guard_set_info,
        "by_size": {str(k): _fraction_stats(fracs)
                    for k, fracs in by_size.items()},
    }
    return Metrics(experiment="e5", summary=summary, per_label={},
                   per_client=per_client, seeds=seeds)


def estimate_tightness(ctx: ThreatContext, consensus: Consensus,
                       records: Sequence[CircuitRecord], mode: AdversaryMode,
                       cap: int = 10_000) -> dict:
    """Distribution of vulnerable-path fractions over logged vulnerable circuits."""
    fractions = []
    for rec in records:
        if not rec.vulnerable:
            continue
        circuit = CircuitSpec(src=rec.client_asn,
                              entry=consensus.relay(rec.entry_fp).asn,
                              exit=consensus.relay(rec.exit_fp).asn,
                              dst=rec.dst_asn)
        fraction, truncated = vulnerable_path_fraction(ctx, circuit, mode, cap)
        fractions.append({"fraction": fraction, "truncated": truncated})
    return {"count": len(fractions), "fractions": fractions,
            "cdf": sorted(f["fraction"] for f in fractions)}


def middle_relay_risk(x_count: int, d_count: int, mu_low: float,
                      p_mid: float) -> dict:
    """Linkability bound for an adversarial middle relay.

    From a conservative safe-majority fraction mu_low, the expected number
    of client-destination pairs consistent with one observed (entry, exit)
    pair, the observations needed to shrink that to one, and the chance of
    a single middle relay making that many observations.
    """
    if x_count <= 1 or d_count <= 1:
        raise ValueError("population counts must exceed 1")
    if not 0 < mu_low < 1:
        raise ValueError("mu_low must lie strictly between 0 and 1")
    if not 0 < p_mid < 1:
        raise ValueError("p_mid must lie strictly between 0 and 1")
    total = x_count * d_count
    expected_safe = 0.5 * mu_low * total
    if expected_safe <= 1:
        raise ValueError("expected linkable-pair count must exceed 1")
    n = -math.log(total) / (math.log(expected_safe) - math.log(total))
    p = p_mid ** math.floor(n)
    return {"E_S": expected_safe, "n": n, "P": p}


def confidence_interval(samples: Sequence[float],
                        level: float = 0.99) -> tuple[float, float]:
    """Normal-approximation confidence interval for the sample mean."""
    if len(samples) < 2:
        raise ValueError("confidence interval requires at least 2 samples")
    try:
        z = _Z_TABLE[level]
    except KeyError:
        z = statistics.NormalDist().inv_cdf((1.0 + level) / 2.0)
    mean = sum(samples) / len(samples)
    half = z * statistics.stdev(samples) / math.sqrt(len(samples))
    return mean - half, mean + half


def load_balance_report(records: Sequence[CircuitRecord],
                        consensus: Consensus) -> dict:
    """Selected-relay shares vs the perfect load-balancing distribution."""
    if not records:
        raise ValueError("circuit log is empty")
    perfect = perfect_balance_distribution(consensus)
    counts: dict[str, int] = {r.fingerprint: 0 for r in consensus.relays}
    total = 0
    for rec in records:
        for fp in (rec.entry_fp, rec.middle_fp, rec.exit_fp):
            counts[fp] += 1
            total += 1
    per_relay = {
        fp: {"bandwidth": consensus.relay(fp).bandwidth,
             "empirical": counts[fp] / total,
             "perfect": perfect[fp]}
        for fp in sorted(counts)}
    # Decile view: relays by ascending bandwidth, ties broken by fingerprint.
    ordered = sorted(consensus.relays,
                     key=lambda r: (r.bandwidth, r.fingerprint))
    deciles = []
    n = len(ordered)
    for d in range(10):
        lo = d * n // 10
        hi = (d + 1) * n // 10
        chunk = ordered[lo:hi]
        deciles.append({
            "decile": d + 1,
            "relays": len(chunk),
            "empirical": sum(counts[r.fingerprint] for r in chunk) / total,
            "perfect": sum(perfect[r.fingerprint] for r in chunk),
        })
    return {"selections": total, "per_relay": per_relay,
            "by_decile": deciles}


def write_report(path, report: dict) -> None:
    """Serialize a report deterministically (sorted keys, trailing newline)."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_circuit_log(path, records: Sequence[CircuitRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CircuitRecord.CSV_HEADER)
        for rec in records:
            writer.writerow(rec.csv_row())
