"""Path-vector route computation with business policies.

Each address block converges independently: candidate routes are ingested
from neighbors, ranked by an ordered decision process, and the selected best
is re-advertised under valley-free export rules (optionally extended for a
coalition). Convergence runs deterministic ascending-ASN sweeps in which an
AS sees the updates already made by lower-numbered ASes in the same sweep;
this schedule makes every run reproducible and settles the two-sided
oscillations that a strictly simultaneous schedule never resolves.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Mapping, Protocol

from .errors import ForwardingLoopError, NonConvergenceError
from .topology import AddressBlock, ASGraph, RelationshipKind, Specificity

logger = logging.getLogger(__name__)


class Rule(Enum):
    PREFER_CLEAN = "prefer_clean"
    LOCAL_PREFERENCE = "local_preference"
    SHORTEST_PATH = "shortest_path"
    CLEAN_TIEBREAK = "clean_tiebreak"
    LOWEST_NEXT_HOP = "lowest_next_hop"


_CLEAN_RULES = (Rule.PREFER_CLEAN, Rule.CLEAN_TIEBREAK)


class LearnedFrom(Enum):
    # Only the rank order matters; the numbers follow universal
    # customer > peer > provider practice, self-originated above everything.
    CUSTOMER = ("customer", 100)
    PEER = ("peer", 90)
    PROVIDER = ("provider", 80)
    SELF = ("self", 200)

    def __new__(cls, value, rank):
        obj = object.__new__(cls)
        obj._value_ = value
        obj.rank = rank
        return obj


LOCAL_PREF = {member: member.rank for member in LearnedFrom}

_REL_TO_LEARNED = {
    RelationshipKind.CUSTOMER_OF: LearnedFrom.CUSTOMER,
    RelationshipKind.PEER_PEER: LearnedFrom.PEER,
    RelationshipKind.PROVIDER_OF: LearnedFrom.PROVIDER,
}


@dataclass(frozen=True)
class DecisionProcess:
    rules: tuple[Rule, ...]

    def __post_init__(self):
        if not self.rules or self.rules[-1] is not Rule.LOWEST_NEXT_HOP:
            raise ValueError("decision process must end with the next-hop tiebreak")
        clean = [r for r in self.rules if r in _CLEAN_RULES]
        if len(clean) > 1:
            raise ValueError("at most one clean-preference rule is allowed")
        positional = [r for r in self.rules if r in (Rule.LOCAL_PREFERENCE, Rule.SHORTEST_PATH)]
        if positional != sorted(positional, key=(Rule.LOCAL_PREFERENCE, Rule.SHORTEST_PATH).index):
            raise ValueError("local preference must precede path length")


@dataclass(slots=True)
class Route:
    """One candidate path toward a block, as held by a specific AS.

    Instances are treated as immutable once built. For routes learned from a
    neighbor the next hop is the first path element; self-originated paths
    start at the origin itself (possibly followed by poison padding).
    """

    block: AddressBlock
    path: tuple[int, ...]
    next_hop: int
    learned_from: LearnedFrom


CleanPredicate = Callable[[Route], bool]


def _always_clean(_: Route) -> bool:
    return True


def ranking_key(
    process: DecisionProcess, clean: CleanPredicate = _always_clean
) -> Callable[[Route], tuple]:
    """Build the total order one decision process induces over candidates.

    Filtering candidate sets rule by rule, where a clean rule passes through
    untouched when nothing clean survives (the tainted fallback), is exactly
    a lexicographic comparison with the cleanliness bit sitting at the rule's
    position; the final component makes the order total for arbitrary inputs
    (live candidate sets hold one route per neighbor, so the next-hop
    component already decides).
    """
    rules = process.rules

    def key(route: Route) -> tuple:
        parts = []
        for rule in rules:
            if rule is Rule.LOCAL_PREFERENCE:
                parts.append(-route.learned_from.rank)
            elif rule is Rule.SHORTEST_PATH:
                parts.append(len(route.path))
            elif rule is Rule.LOWEST_NEXT_HOP:
                parts.append(route.next_hop)
            else:  # clean-preference rule at this position
                parts.append(0 if clean(route) else 1)
        parts.append(route.path)
        return tuple(parts)

    return key


def decide_best(
    candidates: Iterable[Route],
    process: DecisionProcess,
    clean: CleanPredicate = _always_clean,
) -> Route | None:
    """Rank candidates through the process rules; None when there are none."""
    pool = list(candidates)
    if not pool:
        return None
    return min(pool, key=ranking_key(process, clean))


BASELINE_PROCESS = DecisionProcess(
    (Rule.LOCAL_PREFERENCE, Rule.SHORTEST_PATH, Rule.LOWEST_NEXT_HOP)
)


def export_targets(
    route: Route,
    holder: int,
    neighbor_relationships: Mapping[int, RelationshipKind],
    resistor_extension: frozenset[int] | None = None,
    export_overrides: frozenset[tuple[int, int]] = frozenset(),
) -> frozenset[int]:
    """Neighbors that receive the holder's selected route.

    Valley-free baseline: customer-learned and self-originated routes go to
    every neighbor; peer/provider-learned routes go to customers only. With
    the coalition extension, member holders additionally send every best
    route to member neighbors.
    """
    targets: set[int] = set()
    to_all = route.learned_from in (LearnedFrom.CUSTOMER, LearnedFrom.SELF)
    coalition_holder = resistor_extension is not None and holder in resistor_extension
    for nbr, kind in neighbor_relationships.items():
        if to_all or kind is RelationshipKind.CUSTOMER_OF:
            targets.add(nbr)
        elif coalition_holder and nbr in resistor_extension:
            targets.add(nbr)
        elif (holder, nbr) in export_overrides:
            targets.add(nbr)
    return frozenset(targets)


def accept_route(receiver: int, advertised: Route, relationship: RelationshipKind) -> Route | None:
    """Loop-check an advertisement and attach the receiver-relative origin.

    ``relationship`` is the sender's kind relative to the receiver. Returns
    None when the receiver's ASN already appears in the path (normal BGP loop
    rejection, which is what reverse poisoning exploits).
    """
    if receiver in advertised.path:
        return None
    learned = _REL_TO_LEARNED[relationship]
    return Route(advertised.block, advertised.path, advertised.path[0], learned)


@dataclass(frozen=True)
class Origination:
    """How one block enters the routing system."""

    block: AddressBlock
    path: tuple[int, ...]
    advertise_to: frozenset[int] | None = None  # None = all neighbors

    @staticmethod
    def plain(block: AddressBlock) -> "Origination":
        return Origination(block, (block.origin,), None)


class ConvergenceObserver(Protocol):
    def route_offered(self, receiver: int, route: Route, accepted: bool) -> None: ...


class Rib:
    """Converged routing state: per AS, per block, candidates and the best."""

    def __init__(
        self,
        graph: ASGraph,
        blocks: Iterable[AddressBlock],
        best: dict[AddressBlock, dict[int, Route]],
        candidates: dict[AddressBlock, dict[int, dict[int, Route]]] | None = None,
    ):
        self.graph = graph
        self.blocks = tuple(sorted(blocks, key=lambda b: (b.origin, b.block_id)))
        self._best = best
        self._candidates = candidates
        self._by_origin: dict[int, dict[Specificity, AddressBlock]] = {}
        for b in self.blocks:
            self._by_origin.setdefault(b.origin, {})[b.specificity] = b

    def best(self, asn: int, block: AddressBlock) -> Route | None:
        return self._best.get(block, {}).get(asn)

    def candidates(self, asn: int, block: AddressBlock) -> tuple[Route, ...]:
        if self._candidates is None:
            raise ValueError("rib was converged without candidate retention")
        per_as = self._candidates.get(block, {}).get(asn, {})
        return tuple(per_as[k] for k in sorted(per_as))

    def blocks_for_origin(self, origin: int) -> dict[Specificity, AddressBlock]:
        return dict(self._by_origin.get(origin, {}))

    def most_specific_route(self, asn: int, block: AddressBlock) -> Route | None:
        """Longest-prefix selection: the sub-block route if installed, else parent."""
        route = self.best(asn, block)
        if route is not None or not block.is_sub_block:
            return route
        parent = self._by_origin.get(block.origin, {}).get(Specificity.PARENT)
        if parent is None:
            return None
        return self.best(asn, parent)

    def merged(self, other: "Rib") -> "Rib":
        """Combine block states from two ribs over the same graph."""
        best = dict(self._best)
        best.update(other._best)
        cands = None
        if self._candidates is not None and other._candidates is not None:
            cands = dict(self._candidates)
            cands.update(other._candidates)
        return Rib(self.graph, set(self.blocks) | set(other.blocks), best, cands)


class _ExportPlan:
    """Per-AS export target sets, shared across all blocks of one run."""

    def __init__(self, graph: ASGraph, coalition: frozenset[int] | None):
        self.to_all: dict[int, tuple[int, ...]] = {}
        self.restricted: dict[int, tuple[int, ...]] = {}
        overrides = graph.export_overrides
        for asn in graph.ases():
            self.to_all[asn] = graph.neighbors(asn)
            allowed = set(graph.customers(asn))
            if coalition is not None and asn in coalition:
                allowed.update(n for n in graph.neighbors(asn) if n in coalition)
            if overrides:
                allowed.update(n for h, n in overrides if h == asn)
            self.restricted[asn] = tuple(sorted(allowed))


def _solve_block(
    graph: ASGraph,
    origination: Origination,
    process_for: Callable[[int], Callable[[Route], tuple]],
    clean: CleanPredicate,
    plan: _ExportPlan,
    max_sweeps: int,
    observer: ConvergenceObserver | None,
) -> tuple[dict[int, Route], dict[int, dict[int, Route]]]:
    block = origination.block
    origin = block.origin
    rels = graph.neighbor_relationships
    candidates: dict[int, dict[int, Route]] = {}
    best: dict[int, Route] = {origin: Route(block, origination.path, origin, LearnedFrom.SELF)}
    exported: dict[int, dict[int, tuple[int, ...]]] = {}
    inbox: dict[int, dict[int, tuple[int, ...] | None]] = {}

    pending_next: set[int] = set()

    def export_from(holder: int, heap: list[int] | None, in_heap: set[int], cursor: int) -> None:
        current = best.get(holder)
        if current is None:
            targets: tuple[int, ...] = ()
            adv_path: tuple[int, ...] = ()
        else:
            learned = current.learned_from
            if learned is LearnedFrom.CUSTOMER or learned is LearnedFrom.SELF:
                targets = plan.to_all[holder]
                adv_path = current.path if learned is LearnedFrom.SELF else (holder,) + current.path
            else:
                targets = plan.restricted[holder]
                adv_path = (holder,) + current.path
            if holder == origin and origination.advertise_to is not None:
                targets = tuple(t for t in targets if t in origination.advertise_to)
        prev = exported.get(holder)
        if prev is None:
            prev = exported[holder] = {}
        touched = []
        for nbr in targets:
            if prev.get(nbr) != adv_path:
                inbox.setdefault(nbr, {})[holder] = adv_path
                prev[nbr] = adv_path
                touched.append(nbr)
        if len(prev) > len(targets):
            target_set = set(targets)
            for nbr in [n for n in prev if n not in target_set]:
                inbox.setdefault(nbr, {})[holder] = None
                del prev[nbr]
                touched.append(nbr)
        for nbr in touched:
            if heap is not None and nbr > cursor:
                if nbr not in in_heap:
                    heapq.heappush(heap, nbr)
                    in_heap.add(nbr)
            else:
                pending_next.add(nbr)

    # The origin's advertisement seeds the first sweep.
    export_from(origin, None, set(), 0)

    sweeps = 0
    while pending_next:
        sweeps += 1
        if sweeps > max_sweeps:
            raise NonConvergenceError([block])
        heap = sorted(pending_next)
        in_heap = set(heap)
        pending_next = set()
        while heap:
            asn = heapq.heappop(heap)
            in_heap.discard(asn)
            updates = inbox.pop(asn, None)
            if updates is None:
                continue
            cand = candidates.get(asn)
            if cand is None:
                cand = candidates[asn] = {}
            my_rels = rels(asn)
            for sender in sorted(updates):
                path = updates[sender]
                if path is None:
                    cand.pop(sender, None)
                    continue
                if asn in path:
                    if observer is not None:
                        observer.route_offered(
                            asn, Route(block, path, sender, LearnedFrom.SELF), False
                        )
                    cand.pop(sender, None)
                    continue
                accepted = Route(block, path, sender, _REL_TO_LEARNED[my_rels[sender]])
                if observer is not None:
                    observer.route_offered(asn, accepted, True)
                cand[sender] = accepted
            if asn == origin:
                continue  # the origin always keeps its self-originated route
            new_best = min(cand.values(), key=process_for(asn)) if cand else None
            if new_best != best.get(asn):
                if new_best is None:
                    del best[asn]
                else:
                    best[asn] = new_best
                export_from(asn, heap, in_heap, asn)
    return best, candidates


def converge(
    graph: ASGraph,
    blocks: Iterable[AddressBlock],
    process_per_as: Mapping[int, DecisionProcess] | None = None,
    coalition: frozenset[int] | None = None,
    clean: CleanPredicate = _always_clean,
    originations: Mapping[AddressBlock, Origination] | None = None,
    max_sweeps: int | None = None,
    observer: ConvergenceObserver | None = None,
    keep_candidates: bool = True,
    threads: int = 1,
) -> Rib:
    """Converge every block to its deterministic fixed point.

    Raises NonConvergenceError naming all oscillating blocks once every block
    has been attempted.
    """
    block_list = sorted(blocks, key=lambda b: (b.origin, b.block_id))
    for b in block_list:
        if b.origin not in graph:
            raise KeyError(f"block origin {b.origin} not in graph")
    procs = dict(process_per_as or {})
    key_cache: dict[DecisionProcess, Callable[[Route], tuple]] = {}

    def key_for(process: DecisionProcess) -> Callable[[Route], tuple]:
        func = key_cache.get(process)
        if func is None:
            func = key_cache[process] = ranking_key(process, clean)
        return func

    baseline_key = key_for(BASELINE_PROCESS)
    proc_keys = {asn: key_for(p) for asn, p in procs.items()}

    def process_for(asn: int) -> Callable[[Route], tuple]:
        return proc_keys.get(asn, baseline_key)

    cap = max_sweeps if max_sweeps is not None else 10 * len(graph)
    orig_map = dict(originations or {})
    plan = _ExportPlan(graph, coalition)

    def solve(block: AddressBlock):
        origination = orig_map.get(block, Origination.plain(block))
        return _solve_block(graph, origination, process_for, clean, plan, cap, observer)

    best: dict[AddressBlock, dict[int, Route]] = {}
    cands: dict[AddressBlock, dict[int, dict[int, Route]]] = {}
    failed: list[AddressBlock] = []
    if threads > 1 and observer is None and len(block_list) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda b: _try_solve(solve, b), block_list))
        for block, outcome in zip(block_list, results):
            if outcome is None:
                failed.append(block)
            else:
                best[block], cands[block] = outcome
    else:
        for block in block_list:
            try:
                best[block], cands[block] = solve(block)
            except NonConvergenceError:
                failed.append(block)
    if failed:
        raise NonConvergenceError(failed)
    return Rib(graph, block_list, best, cands if keep_candidates else None)


def _try_solve(solve, block):
    try:
        return solve(block)
    except NonConvergenceError:
        return None


def forward_path(rib: Rib, source: int, block: AddressBlock) -> tuple[int, ...] | None:
    """Hop-by-hop walk toward a block using most-specific routes.

    Returns the realized AS path ending at the origin, or None when some hop
    has no covering route. A revisited AS raises ForwardingLoopError.
    """
    if source not in rib.graph:
        raise KeyError(f"unknown AS {source}")
    origin = block.origin
    walk = [source]
    seen = {source}
    cur = source
    while cur != origin:
        route = rib.most_specific_route(cur, block)
        if route is None:
            return None
        nxt = route.next_hop
        if nxt in seen:
            raise ForwardingLoopError(f"forwarding loop at AS {nxt} toward {origin}")
        walk.append(nxt)
        seen.add(nxt)
        cur = nxt
    return tuple(walk)


def export_rib(rib: Rib) -> str:
    """Flat text export of selected routes, one line per (holder, block)."""
    lines = ["asn,origin_asn,specificity,path,learned_from"]
    for block in rib.blocks:
        per_as = rib._best.get(block, {})
        for asn in sorted(per_as):
            route = per_as[asn]
            path = " ".join(str(p) for p in route.path)
            lines.append(
                f"{asn},{block.origin},{block.specificity.value},{path},{route.learned_from.value}"
            )
    return "\n".join(lines) + "\n"
