"""Reverse poisoning: hole-punched sub-block advertisements.

FRRP pads the sub-block path with every known deployer so deployers
self-reject via loop detection while everyone else treats the padding as
inert. SelARP never falsifies the path; it steers propagation by advertising
the sub-blocks to a greedily chosen subset of neighbors.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping

from .engine import CleanPredicate, DecisionProcess, Origination, Rib, converge, forward_path
from .errors import NonConvergenceError
from .strategies import Deployment, classify_clean
from .topology import AddressBlock, ASGraph, sub_blocks
from .traffic import TrafficMatrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HolePunchedAdvertisement:
    block: AddressBlock
    path: tuple[int, ...]
    mode: str  # "frrp" or "selarp"
    advertise_to: frozenset[int] | None  # None = all neighbors

    def to_origination(self) -> Origination:
        return Origination(self.block, self.path, self.advertise_to)


def frrp_advertisements(
    graph: ASGraph, member: int, deployment: Deployment
) -> tuple[HolePunchedAdvertisement, HolePunchedAdvertisement]:
    """Both half-block advertisements with deployer-padded paths.

    The padding is appended in ascending ASN order; any order triggers the
    same loop detection, a fixed one keeps outputs byte-stable.
    """
    if not deployment.deployers:
        raise ValueError("hole punching around an empty deployment is meaningless")
    parent = graph.parent_blocks()[member]
    low, high = sub_blocks(parent)
    path = (member, *deployment.sorted(), member)
    return (
        HolePunchedAdvertisement(low, path, "frrp", None),
        HolePunchedAdvertisement(high, path, "frrp", None),
    )


def selarp_advertisements(
    graph: ASGraph, member: int, advertise_to: frozenset[int]
) -> tuple[HolePunchedAdvertisement, HolePunchedAdvertisement]:
    """Unfalsified half-block advertisements restricted to chosen neighbors."""
    parent = graph.parent_blocks()[member]
    low, high = sub_blocks(parent)
    return (
        HolePunchedAdvertisement(low, (member,), "selarp", advertise_to),
        HolePunchedAdvertisement(high, (member,), "selarp", advertise_to),
    )


@dataclass(frozen=True)
class ReversePoisonContext:
    """Converged attack state the per-member greedy runs against."""

    graph: ASGraph
    matrix: TrafficMatrix
    deployment: Deployment
    parent_rib: Rib  # post-attack rib over parent blocks only
    process_per_as: Mapping[int, DecisionProcess] = field(default_factory=dict)
    coalition: frozenset[int] | None = None
    clean: CleanPredicate | None = None
    max_sweeps: int | None = None


def _solve_member_sub_blocks(
    ctx: ReversePoisonContext, member: int, advertise_to: frozenset[int]
) -> Rib:
    adverts = selarp_advertisements(ctx.graph, member, advertise_to)
    originations = {adv.block: adv.to_origination() for adv in adverts}
    kwargs = {}
    if ctx.clean is not None:
        kwargs["clean"] = ctx.clean
    return converge(
        ctx.graph,
        [adv.block for adv in adverts],
        process_per_as=ctx.process_per_as,
        coalition=ctx.coalition,
        originations=originations,
        max_sweeps=ctx.max_sweeps,
        **kwargs,
    )


def _inbound_flows(ctx: ReversePoisonContext, member: int) -> list[tuple[int, float]]:
    return [
        (src, vol)
        for (src, dst), vol in ctx.matrix.items_sorted()
        if dst == member and vol > 0
    ]


def selarp_greedy(
    ctx: ReversePoisonContext,
    member: int,
    objective: str = "units",
) -> frozenset[int]:
    """Greedy neighbor selection for one member's hole-punched routes.

    Each round test-advertises to every not-yet-selected neighbor, propagates
    the sub-blocks to a fresh fixed point, withdraws, and commits the neighbor
    with the highest strictly positive gain (ties to the lower ASN), stopping
    when no candidate improves the objective.

    ``units`` scores traffic deflected off deployers relative to the
    no-poisoning attack state; ``ip_weight`` scores address-weighted ASes
    holding a clean hole-punched route.
    """
    if objective not in ("units", "ip_weight"):
        raise ValueError(f"unknown objective {objective!r}")
    graph = ctx.graph
    parent = graph.parent_blocks()[member]
    inbound = _inbound_flows(ctx, member)
    baseline_tainted: dict[int, bool] = {}
    for src, _ in inbound:
        walk = forward_path(ctx.parent_rib, src, parent)
        baseline_tainted[src] = walk is not None and not classify_clean(walk, ctx.deployment)

    def score(advertise_to: frozenset[int]) -> float:
        sub_rib = _solve_member_sub_blocks(ctx, member, advertise_to)
        merged = ctx.parent_rib.merged(sub_rib)
        halves = [b for b in sub_rib.blocks]
        if objective == "ip_weight":
            total = 0.0
            for asn in graph.ases():
                if asn == member:
                    continue
                for half in halves:
                    route = sub_rib.best(asn, half)
                    if route is not None and classify_clean(route.path, ctx.deployment):
                        total += graph.attributes(asn).ip_weight / 2.0
            return total
        deflected = 0.0
        for src, vol in inbound:
            if not baseline_tainted[src]:
                continue
            for half in halves:
                walk = forward_path(merged, src, half)
                if walk is not None and classify_clean(walk, ctx.deployment):
                    deflected += vol / 2.0
        return deflected

    selected: set[int] = set()
    unadvertised = set(graph.neighbors(member))
    current = 0.0
    while unadvertised:
        round_gain = 0.0
        round_choice: int | None = None
        for candidate in sorted(unadvertised):
            try:
                temp = score(frozenset(selected | {candidate}))
            except NonConvergenceError as exc:
                logger.warning(
                    "selarp test advertisement %d->%d skipped: %s", member, candidate, exc
                )
                continue
            if temp - current > round_gain:
                round_gain = temp - current
                round_choice = candidate
        if round_choice is None:
            break
        selected.add(round_choice)
        unadvertised.discard(round_choice)
        current += round_gain
    return frozenset(selected)
