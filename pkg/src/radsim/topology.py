"""AS-relationship graph: ingestion, sibling aliasing, and coalition/cone queries.

The graph is immutable after construction; every operation that "modifies"
topology returns a new ASGraph. Relationship edges are stored in both
directions so that ``relationship(a, b)`` answers "what is a, relative to b's
neighbor a" in O(1).
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

from .errors import ConflictError, RelationshipParseError

logger = logging.getLogger(__name__)

UNKNOWN_COUNTRY = "unknown"


class RelationshipKind(Enum):
    PROVIDER_OF = "provider_of"
    CUSTOMER_OF = "customer_of"
    PEER_PEER = "peer_peer"
    SIBLING = "sibling"

    def inverse(self) -> "RelationshipKind":
        if self is RelationshipKind.PROVIDER_OF:
            return RelationshipKind.CUSTOMER_OF
        if self is RelationshipKind.CUSTOMER_OF:
            return RelationshipKind.PROVIDER_OF
        return self


class Specificity(Enum):
    PARENT = "parent"
    SUB_LOW = "sub_low"
    SUB_HIGH = "sub_high"


# block_id values by specificity; one parent block per origin in the baseline.
_BLOCK_IDS = {Specificity.PARENT: 0, Specificity.SUB_LOW: 1, Specificity.SUB_HIGH: 2}


@dataclass(frozen=True)
class AddressBlock:
    """A symbolic address block originated by one AS.

    ``weight`` is excluded from equality so blocks can be used as routing-table
    keys; identity is (origin, block_id, specificity).
    """

    origin: int
    block_id: int
    specificity: Specificity
    weight: float = field(compare=False, default=1.0)

    def __post_init__(self):
        if self.origin <= 0:
            raise ValueError("block origin must be a positive ASN")
        if self.weight < 0 or not math.isfinite(self.weight):
            raise ValueError("block weight must be finite and non-negative")

    @property
    def is_sub_block(self) -> bool:
        return self.specificity is not Specificity.PARENT


def parent_block(origin: int, weight: float = 1.0) -> AddressBlock:
    return AddressBlock(origin, 0, Specificity.PARENT, weight)


def sub_blocks(parent: AddressBlock) -> tuple[AddressBlock, AddressBlock]:
    """Split a parent block into its two half-weight sub-blocks."""
    if parent.specificity is not Specificity.PARENT:
        raise ValueError("only parent blocks can be split")
    half = parent.weight / 2.0
    return (
        AddressBlock(parent.origin, 1, Specificity.SUB_LOW, half),
        AddressBlock(parent.origin, 2, Specificity.SUB_HIGH, half),
    )


@dataclass(frozen=True)
class ASAttributes:
    country: str = UNKNOWN_COUNTRY
    ip_weight: float = 1.0
    traffic_in_weight: float | None = None
    traffic_out_weight: float | None = None
    super_as: bool = False
    # Super-AS numbers for which this AS hosts a local content cache.
    cdn_hosts: frozenset[int] = frozenset()

    def __post_init__(self):
        for w in (self.ip_weight, self.traffic_in_weight, self.traffic_out_weight):
            if w is not None and (w < 0 or not math.isfinite(w)):
                raise ValueError("weights must be finite and non-negative")


class ASGraph:
    """Immutable annotated AS-relationship graph."""

    def __init__(
        self,
        nodes: Mapping[int, ASAttributes],
        edges: Mapping[tuple[int, int], RelationshipKind],
        export_overrides: frozenset[tuple[int, int]] = frozenset(),
    ):
        self._nodes = dict(nodes)
        self._edges = dict(edges)
        # Optional per-edge annotation: (holder, neighbor) pairs for which the
        # holder always exports its best route (partial-transit hook).
        self.export_overrides = frozenset(export_overrides)
        self._validate()
        self._neighbors: dict[int, tuple[int, ...]] = {}
        self._customers: dict[int, tuple[int, ...]] = {}
        adj: dict[int, list[int]] = {asn: [] for asn in self._nodes}
        cust: dict[int, list[int]] = {asn: [] for asn in self._nodes}
        for (a, b), kind in self._edges.items():
            adj[b].append(a)
            if kind is RelationshipKind.CUSTOMER_OF:
                cust[b].append(a)
        for asn in self._nodes:
            self._neighbors[asn] = tuple(sorted(adj[asn]))
            self._customers[asn] = tuple(sorted(cust[asn]))
        # Cached per-AS relationship maps; treated as read-only by callers.
        self._rel_maps = {
            asn: {n: self._edges[(n, asn)] for n in self._neighbors[asn]}
            for asn in self._nodes
        }
        self._sorted_ases = tuple(sorted(self._nodes))

    def _validate(self) -> None:
        for asn in self._nodes:
            if asn <= 0:
                raise ValueError(f"invalid ASN {asn}")
        for (a, b), kind in self._edges.items():
            if a == b:
                raise ValueError(f"self-edge on AS {a}")
            if a not in self._nodes or b not in self._nodes:
                raise ValueError(f"edge ({a},{b}) references unknown AS")
            if self._edges.get((b, a)) is not kind.inverse():
                raise ValueError(f"edge ({a},{b}) lacks symmetric inverse")

    @property
    def nodes(self) -> Mapping[int, ASAttributes]:
        return self._nodes

    @property
    def edges(self) -> Mapping[tuple[int, int], RelationshipKind]:
        return self._edges

    def __contains__(self, asn: int) -> bool:
        return asn in self._nodes

    def __len__(self) -> int:
        return len(self._nodes)

    def ases(self) -> tuple[int, ...]:
        return self._sorted_ases

    def attributes(self, asn: int) -> ASAttributes:
        return self._nodes[asn]

    def relationship(self, a: int, b: int) -> RelationshipKind | None:
        """Kind of a relative to b (``PROVIDER_OF`` means a is b's provider)."""
        return self._edges.get((a, b))

    def neighbors(self, asn: int) -> tuple[int, ...]:
        return self._neighbors[asn]

    def customers(self, asn: int) -> tuple[int, ...]:
        return self._customers[asn]

    def degree(self, asn: int) -> int:
        return len(self._neighbors[asn])

    def neighbor_relationships(self, asn: int) -> dict[int, RelationshipKind]:
        """Map neighbor -> kind of neighbor relative to ``asn`` (read-only)."""
        return self._rel_maps[asn]

    def effective_traffic_weights(self, asn: int) -> tuple[float, float]:
        """Resolved (inbound, outbound) traffic weights for one AS.

        Sidecar-provided weights win; otherwise fall back to a degree/address
        heuristic that preserves the heavy tail of transit sizes.
        """
        attrs = self._nodes[asn]
        fallback = math.log1p(self.degree(asn)) * math.log1p(attrs.ip_weight)
        in_w = attrs.traffic_in_weight if attrs.traffic_in_weight is not None else fallback
        out_w = attrs.traffic_out_weight if attrs.traffic_out_weight is not None else fallback
        return in_w, out_w

    def parent_blocks(self) -> dict[int, AddressBlock]:
        """One parent address block per AS, weighted by address-space size."""
        return {asn: parent_block(asn, self._nodes[asn].ip_weight) for asn in self._nodes}

    def with_attributes(self, updates: Mapping[int, ASAttributes]) -> "ASGraph":
        nodes = dict(self._nodes)
        nodes.update(updates)
        return ASGraph(nodes, self._edges, self.export_overrides)


def parse_as_relationships(text: str) -> ASGraph:
    """Parse ``A|B|rel`` relationship lines into an annotated graph.

    rel -1 = A provider of B, 0 = peers, 2 = siblings; ``#`` starts a comment
    line. Contradictory duplicate declarations raise ConflictError.
    """
    edges: dict[tuple[int, int], RelationshipKind] = {}
    nodes: dict[int, ASAttributes] = {}
    default = ASAttributes()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("|")
        if len(parts) < 3:
            raise RelationshipParseError(line_no, f"expected A|B|rel, got {line!r}")
        try:
            a, b, rel = int(parts[0]), int(parts[1]), int(parts[2])
        except ValueError:
            raise RelationshipParseError(line_no, f"non-integer field in {line!r}") from None
        if a <= 0 or b <= 0:
            raise RelationshipParseError(line_no, f"ASNs must be positive in {line!r}")
        if a == b:
            raise RelationshipParseError(line_no, f"self relationship on AS {a}")
        if rel == -1:
            kind = RelationshipKind.PROVIDER_OF
        elif rel == 0:
            kind = RelationshipKind.PEER_PEER
        elif rel == 2:
            kind = RelationshipKind.SIBLING
        else:
            raise RelationshipParseError(line_no, f"unknown relationship code {rel}")
        existing = edges.get((a, b))
        if existing is not None and existing is not kind:
            raise ConflictError(
                f"line {line_no}: relationship {a}|{b} redeclared as "
                f"{kind.value}, previously {existing.value}"
            )
        edges[(a, b)] = kind
        edges[(b, a)] = kind.inverse()
        nodes.setdefault(a, default)
        nodes.setdefault(b, default)
    return ASGraph(nodes, edges)


def load_attributes(graph: ASGraph, text: str) -> ASGraph:
    """Attach the attribute sidecar (CSV with header) to a parsed graph.

    Columns: asn,country,ip_weight,traffic_in_weight,traffic_out_weight,super_as
    plus an optional trailing cdn_hosts column (semicolon-separated super-AS
    numbers hosted locally). Blank weight cells keep the fallback heuristic.
    """
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise ValueError("attribute sidecar is empty; header row required")
    required = {"asn", "country", "ip_weight", "traffic_in_weight", "traffic_out_weight", "super_as"}
    missing = required - set(reader.fieldnames)
    if missing:
        raise ValueError(f"attribute sidecar missing columns: {sorted(missing)}")
    updates: dict[int, ASAttributes] = {}
    for row in reader:
        asn = int(row["asn"])
        if asn not in graph:
            logger.warning("attribute row for unknown AS %d ignored", asn)
            continue
        country = (row["country"] or UNKNOWN_COUNTRY).strip() or UNKNOWN_COUNTRY
        ip_weight = float(row["ip_weight"]) if row["ip_weight"].strip() else 1.0
        in_w = float(row["traffic_in_weight"]) if row["traffic_in_weight"].strip() else None
        out_w = float(row["traffic_out_weight"]) if row["traffic_out_weight"].strip() else None
        super_as = row["super_as"].strip().lower() in ("1", "true", "yes")
        hosts_cell = (row.get("cdn_hosts") or "").strip()
        hosts = frozenset(int(x) for x in hosts_cell.split(";") if x.strip()) if hosts_cell else frozenset()
        if super_as and out_w is not None and out_w <= 0:
            raise ValueError(f"super AS {asn} must have positive outbound weight")
        updates[asn] = ASAttributes(country, ip_weight, in_w, out_w, super_as, hosts)
    return graph.with_attributes(updates)


def _sibling_components(graph: ASGraph) -> list[set[int]]:
    seen: set[int] = set()
    components = []
    for asn in graph.ases():
        if asn in seen:
            continue
        stack = [asn]
        comp = {asn}
        seen.add(asn)
        while stack:
            cur = stack.pop()
            for nbr in graph.neighbors(cur):
                if graph.relationship(nbr, cur) is RelationshipKind.SIBLING and nbr not in comp:
                    comp.add(nbr)
                    seen.add(nbr)
                    stack.append(nbr)
        components.append(comp)
    return components


def alias_siblings(graph: ASGraph) -> ASGraph:
    """Merge each sibling-connected component into its lowest-ASN member.

    External relationships are re-attached to the survivor. When the merged
    members held contradictory relationships with the same outside AS, the
    stronger commercial tie wins: outside-as-provider > outside-as-customer >
    peer. Weights are summed; the survivor's country is kept.
    """
    components = [c for c in _sibling_components(graph) if len(c) > 1]
    if not components:
        return graph
    alias: dict[int, int] = {}
    for comp in components:
        survivor = min(comp)
        for asn in comp:
            alias[asn] = survivor

    def canon(asn: int) -> int:
        return alias.get(asn, asn)

    nodes: dict[int, ASAttributes] = {}
    for asn in graph.ases():
        target = canon(asn)
        attrs = graph.attributes(asn)
        if target not in nodes:
            base = graph.attributes(target)
            nodes[target] = ASAttributes(
                base.country, 0.0, None, None, False, frozenset()
            )
        cur = nodes[target]
        in_w = None
        if cur.traffic_in_weight is not None or attrs.traffic_in_weight is not None:
            in_w = (cur.traffic_in_weight or 0.0) + (attrs.traffic_in_weight or 0.0)
        out_w = None
        if cur.traffic_out_weight is not None or attrs.traffic_out_weight is not None:
            out_w = (cur.traffic_out_weight or 0.0) + (attrs.traffic_out_weight or 0.0)
        nodes[target] = ASAttributes(
            cur.country,
            cur.ip_weight + attrs.ip_weight,
            in_w,
            out_w,
            cur.super_as or attrs.super_as,
            cur.cdn_hosts | attrs.cdn_hosts,
        )

    # Precedence when merged relationships conflict; higher wins.
    rank = {
        RelationshipKind.PROVIDER_OF: 3,
        RelationshipKind.CUSTOMER_OF: 2,
        RelationshipKind.PEER_PEER: 1,
    }
    merged: dict[tuple[int, int], RelationshipKind] = {}
    for (a, b), kind in graph.edges.items():
        if kind is RelationshipKind.SIBLING:
            continue
        ca, cb = canon(a), canon(b)
        if ca == cb:
            continue
        existing = merged.get((ca, cb))
        if existing is None or rank[kind] > rank[existing]:
            merged[(ca, cb)] = kind
            merged[(cb, ca)] = kind.inverse()
    overrides = frozenset(
        (canon(h), canon(n)) for h, n in graph.export_overrides if canon(h) != canon(n)
    )
    return ASGraph(nodes, merged, overrides)


def customer_cone(graph: ASGraph, root: int) -> frozenset[int]:
    """The root plus everything reachable by walking provider->customer edges."""
    if root not in graph:
        raise KeyError(f"unknown AS {root}")
    cone = {root}
    stack = [root]
    while stack:
        cur = stack.pop()
        for c in graph.customers(cur):
            if c not in cone:
                cone.add(c)
                stack.append(c)
    return frozenset(cone)


def select_coalition_top_degree(graph: ASGraph, fraction: float) -> frozenset[int]:
    """The ceil(fraction * |ASes|) highest-degree ASes; ties favor lower ASNs."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must be in (0, 1]")
    count = math.ceil(fraction * len(graph))
    ranked = sorted(graph.ases(), key=lambda a: (-graph.degree(a), a))
    return frozenset(ranked[:count])


def country_border_ases(graph: ASGraph, country: str) -> frozenset[int]:
    """ASes of one country having at least one neighbor in a different country.

    Neighbors with unknown country count as foreign.
    """
    out = set()
    for asn in graph.ases():
        if graph.attributes(asn).country != country:
            continue
        for nbr in graph.neighbors(asn):
            if graph.attributes(nbr).country != country:
                out.add(asn)
                break
    return frozenset(out)
