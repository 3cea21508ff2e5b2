"""Two-bucket traffic model, flow accounting, and link-load statistics.

Traffic demand is fully proportional (no sampling): each AS's inbound demand
is its resolved inbound-weight share of the global total, split between
content-provider sources and gravity-style host-to-host sources by its
region's content fraction.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Mapping

from .engine import Rib, forward_path
from .errors import DegenerateTrafficError, ForwardingLoopError
from .strategies import Deployment, classify_clean
from .topology import ASGraph, AddressBlock, RelationshipKind, Specificity, sub_blocks

logger = logging.getLogger(__name__)

DEFAULT_REGION = "default"

_PART_NAMES = {
    Specificity.PARENT: "parent",
    Specificity.SUB_LOW: "low",
    Specificity.SUB_HIGH: "high",
}


@dataclass(frozen=True)
class RegionProfile:
    region: str
    cdn_fraction: float
    cdn_destination_shares: Mapping[int, float]

    def __post_init__(self):
        if not 0 <= self.cdn_fraction <= 1:
            raise ValueError("cdn_fraction must be in [0, 1]")
        if self.cdn_fraction > 0:
            total = sum(self.cdn_destination_shares.values())
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"cdn shares for {self.region} sum to {total}, not 1")


def parse_region_profiles(text: str) -> dict[str, RegionProfile]:
    """Parse ``region,cdn_fraction,super1:share1;super2:share2`` lines."""
    profiles: dict[str, RegionProfile] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        region, frac, shares_cell = (line.split(",", 2) + ["", ""])[:3]
        shares: dict[int, float] = {}
        for item in shares_cell.split(";"):
            if not item.strip():
                continue
            asn, share = item.split(":")
            shares[int(asn)] = float(share)
        profiles[region.strip()] = RegionProfile(region.strip(), float(frac), shares)
    return profiles


class TrafficMatrix:
    """Source -> destination traffic volumes in abstract units."""

    def __init__(self, flows: Mapping[tuple[int, int], float]):
        self.flows = dict(flows)
        for (s, d), v in self.flows.items():
            if s == d:
                raise ValueError(f"self-flow on AS {s}")
            if v < 0 or not math.isfinite(v):
                raise ValueError(f"invalid volume for flow {s}->{d}")

    def volume(self, src: int, dst: int) -> float:
        return self.flows.get((src, dst), 0.0)

    def total(self) -> float:
        return sum(self.flows.values())

    def items_sorted(self) -> list[tuple[tuple[int, int], float]]:
        return sorted(self.flows.items())

    def __len__(self) -> int:
        return len(self.flows)

    def to_csv(self) -> str:
        lines = ["src,dst,volume"]
        for (s, d), v in self.items_sorted():
            lines.append(f"{s},{d},{v!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "TrafficMatrix":
        flows: dict[tuple[int, int], float] = {}
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#") or line.startswith("src,"):
                continue
            s, d, v = line.split(",")
            flows[(int(s), int(d))] = float(v)
        return cls(flows)


def build_traffic_matrix(
    graph: ASGraph,
    profiles: Mapping[str, RegionProfile],
    total_units: float,
) -> TrafficMatrix:
    """Proportional two-bucket matrix normalized to ``total_units``.

    Content flows sourced at an AS hosting the provider's local cache are
    served inside the destination AS and dropped before normalization.
    """
    supers = {a for a in graph.ases() if graph.attributes(a).super_as}
    for name, profile in profiles.items():
        bad = set(profile.cdn_destination_shares) - supers
        if bad:
            raise ValueError(f"profile {name} references non-super ASes {sorted(bad)}")

    def profile_for(country: str) -> RegionProfile:
        prof = profiles.get(country) or profiles.get(DEFAULT_REGION)
        if prof is None:
            raise ValueError(f"no region profile for country {country!r} and no default")
        return prof

    out_weights = {a: graph.effective_traffic_weights(a)[1] for a in graph.ases()}
    hh_sources = [a for a in graph.ases() if a not in supers and out_weights[a] > 0]
    hh_total = sum(out_weights[a] for a in hh_sources)

    flows: dict[tuple[int, int], float] = {}
    for dst in graph.ases():
        attrs = graph.attributes(dst)
        demand = graph.effective_traffic_weights(dst)[0]
        if demand <= 0:
            continue
        profile = profile_for(attrs.country)
        cdn_demand = demand * profile.cdn_fraction
        if cdn_demand > 0:
            for src in sorted(profile.cdn_destination_shares):
                share = profile.cdn_destination_shares[src]
                if share <= 0 or src == dst or src in attrs.cdn_hosts:
                    continue  # local cache or self: served inside the AS
                flows[(src, dst)] = flows.get((src, dst), 0.0) + cdn_demand * share
        hh_demand = demand - cdn_demand
        if hh_demand > 0:
            denom = hh_total - (out_weights[dst] if dst not in supers and out_weights[dst] > 0 else 0.0)
            if denom <= 0:
                continue
            for src in hh_sources:
                if src == dst:
                    continue
                flows[(src, dst)] = flows.get((src, dst), 0.0) + hh_demand * out_weights[src] / denom
    raw_total = sum(flows.values())
    if raw_total <= 0:
        raise DegenerateTrafficError("traffic weights admit no flows")
    scale = total_units / raw_total
    return TrafficMatrix({k: v * scale for k, v in sorted(flows.items())})


@dataclass(frozen=True)
class FlowRecord:
    src: int
    dst: int
    part: str  # parent / low / high
    volume: float
    path: tuple[int, ...] | None
    clean: bool | None

    @property
    def reachable(self) -> bool:
        return self.path is not None


class FlowLedger:
    """Realized paths plus per-AS billable units and per-edge carried units."""

    def __init__(
        self,
        records: Iterable[FlowRecord],
        billable: Mapping[int, float],
        edge_load: Mapping[tuple[int, int], float],
        ases: frozenset[int] | None = None,
    ):
        self.records = tuple(records)
        self.billable = dict(billable)
        self.edge_load = dict(edge_load)
        self.ases = ases
        self.by_key = {(r.src, r.dst, r.part): r for r in self.records}

    def billable_units(self, asn: int) -> float:
        if self.ases is not None and asn not in self.ases:
            raise KeyError(f"AS {asn} is not part of this ledger")
        return self.billable.get(asn, 0.0)

    def total_volume(self) -> float:
        return sum((r.volume for r in self.records), 0.0)

    def reachable_volume(self) -> float:
        return sum((r.volume for r in self.records if r.reachable), 0.0)

    def unreachable_volume(self) -> float:
        return sum((r.volume for r in self.records if not r.reachable), 0.0)

    def flows_csv(self) -> str:
        lines = ["src,dst,part,volume,clean,path"]
        for r in sorted(self.records, key=lambda r: (r.src, r.dst, r.part)):
            path = " ".join(str(p) for p in r.path) if r.path else ""
            clean = "" if r.clean is None else str(r.clean).lower()
            lines.append(f"{r.src},{r.dst},{r.part},{r.volume!r},{clean},{path}")
        return "\n".join(lines) + "\n"

    def edges_csv(self) -> str:
        lines = ["from,to,units"]
        for (u, v) in sorted(self.edge_load):
            lines.append(f"{u},{v},{self.edge_load[(u, v)]!r}")
        return "\n".join(lines) + "\n"

    def billable_csv(self) -> str:
        lines = ["asn,units"]
        for asn in sorted(self.billable):
            lines.append(f"{asn},{self.billable[asn]!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, flows_text: str, edges_text: str, billable_text: str) -> "FlowLedger":
        records = []
        for row in csv.DictReader(io.StringIO(flows_text)):
            path = tuple(int(x) for x in row["path"].split()) if row["path"] else None
            clean = None if row["clean"] == "" else row["clean"] == "true"
            records.append(
                FlowRecord(int(row["src"]), int(row["dst"]), row["part"], float(row["volume"]), path, clean)
            )
        edges = {}
        for row in csv.DictReader(io.StringIO(edges_text)):
            edges[(int(row["from"]), int(row["to"]))] = float(row["units"])
        billable = {}
        for row in csv.DictReader(io.StringIO(billable_text)):
            billable[int(row["asn"])] = float(row["units"])
        return cls(records, billable, edges)


def account_flows(
    rib: Rib,
    matrix: TrafficMatrix,
    deployment: Deployment,
    sub_block_origins: frozenset[int] = frozenset(),
) -> FlowLedger:
    """Push every flow through hop-by-hop forwarding and account the results.

    Destinations in ``sub_block_origins`` have their volume split evenly
    across the two half-blocks so that longest-prefix effects show up; both
    the pre- and post-attack ledgers of one scenario must use the same split
    for flow records to stay comparable.
    """
    graph = rib.graph
    parents = graph.parent_blocks()
    records: list[FlowRecord] = []
    billable: dict[int, float] = {}
    edge_load: dict[tuple[int, int], float] = {}

    def account(src: int, dst: int, block: AddressBlock, part: str, volume: float) -> None:
        try:
            path = forward_path(rib, src, block)
        except ForwardingLoopError as exc:
            raise ForwardingLoopError(f"flow {src}->{dst} ({part}): {exc}") from exc
        if path is None:
            records.append(FlowRecord(src, dst, part, volume, None, None))
            return
        clean = classify_clean(path, deployment)
        records.append(FlowRecord(src, dst, part, volume, path, clean))
        for cur, nxt in zip(path, path[1:]):
            edge_load[(cur, nxt)] = edge_load.get((cur, nxt), 0.0) + volume
            kind = graph.relationship(cur, nxt)
            if kind is RelationshipKind.PROVIDER_OF:
                billable[cur] = billable.get(cur, 0.0) + volume
            elif kind is RelationshipKind.CUSTOMER_OF:
                billable[nxt] = billable.get(nxt, 0.0) + volume

    for (src, dst), volume in matrix.items_sorted():
        parent = parents[dst]
        if dst in sub_block_origins:
            low, high = sub_blocks(parent)
            account(src, dst, low, "low", volume / 2.0)
            account(src, dst, high, "high", volume / 2.0)
        else:
            account(src, dst, parent, "parent", volume)
    return FlowLedger(records, billable, edge_load, frozenset(graph.ases()))


@dataclass(frozen=True)
class LinkLoadStats:
    median_increase: float | None
    p90_increase: float | None
    increased_links: int
    newly_used_links: int


def _percentile(sorted_vals: list[float], q: float) -> float:
    if len(sorted_vals) == 1:
        return sorted_vals[0]
    pos = (len(sorted_vals) - 1) * q
    lo = math.floor(pos)
    hi = math.ceil(pos)
    if lo == hi:
        return sorted_vals[lo]
    return sorted_vals[lo] + (pos - lo) * (sorted_vals[hi] - sorted_vals[lo])


def link_load_stats(before: FlowLedger, after: FlowLedger) -> LinkLoadStats:
    """Relative load growth over links that must carry additional traffic."""
    increases = []
    newly_used = 0
    for edge in sorted(set(before.edge_load) | set(after.edge_load)):
        b = before.edge_load.get(edge, 0.0)
        a = after.edge_load.get(edge, 0.0)
        if a <= b:
            continue
        if b == 0.0:
            newly_used += 1
        else:
            increases.append((a - b) / b)
    if not increases:
        return LinkLoadStats(None, None, 0, newly_used)
    increases.sort()
    return LinkLoadStats(
        _percentile(increases, 0.5), _percentile(increases, 0.9), len(increases), newly_used
    )


def international_transit_fraction(graph: ASGraph, ledger: FlowLedger) -> dict[int, float]:
    """Per transit AS: fraction of carried volume bound for another country.

    Unknown destination countries count as international.
    """
    transited: dict[int, float] = {}
    international: dict[int, float] = {}
    for record in ledger.records:
        if record.path is None or len(record.path) < 3:
            continue
        dst_country = graph.attributes(record.dst).country
        for asn in record.path[1:-1]:
            transited[asn] = transited.get(asn, 0.0) + record.volume
            country = graph.attributes(asn).country
            if dst_country != country or dst_country == "unknown":
                international[asn] = international.get(asn, 0.0) + record.volume
    return {
        asn: international.get(asn, 0.0) / vol for asn, vol in sorted(transited.items()) if vol > 0
    }
