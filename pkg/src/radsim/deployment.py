"""Originator-side placement of middleboxes: greedy and ring deployments."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

from .engine import Rib, forward_path
from .strategies import Deployment
from .topology import ASGraph, country_border_ases
from .traffic import TrafficMatrix

logger = logging.getLogger(__name__)


class ObjectiveMode(Enum):
    TARGETED = "targeted"
    GLOBAL = "global"


@dataclass(frozen=True)
class DeploymentObjective:
    mode: ObjectiveMode
    size: int
    members: frozenset[int] = frozenset()

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("deployment size must be >= 1")
        if self.mode is ObjectiveMode.TARGETED and not self.members:
            raise ValueError("targeted deployment needs a resistor member set")


@dataclass(frozen=True)
class GreedyRound:
    chosen: int
    score: float


def select_deployers_detailed(
    graph: ASGraph,
    rib: Rib,
    matrix: TrafficMatrix,
    objective: DeploymentObjective,
) -> tuple[Deployment, tuple[GreedyRound, ...]]:
    """Iterative greedy placement over pre-attack forwarding paths.

    Candidates are transit ASes (at least one customer) outside the resistor;
    each round the candidate covering the most still-clean traffic is chosen
    and the flows it taints leave the pool. Ties favor the lower ASN.
    """
    parents = graph.parent_blocks()
    weighted_paths: list[tuple[float, frozenset[int]]] = []
    for (src, dst), volume in matrix.items_sorted():
        if volume <= 0:
            continue
        if objective.mode is ObjectiveMode.TARGETED and src not in objective.members:
            continue
        path = forward_path(rib, src, parents[dst])
        if path is None:
            continue
        weighted_paths.append((volume, frozenset(path)))

    candidates = sorted(
        a for a in graph.ases() if graph.customers(a) and a not in objective.members
    )
    chosen: list[int] = []
    rounds: list[GreedyRound] = []
    remaining = weighted_paths
    while len(chosen) < objective.size and candidates:
        scores = {c: 0.0 for c in candidates}
        for volume, ases in remaining:
            for c in ases:
                if c in scores:
                    scores[c] += volume
        best = max(candidates, key=lambda c: (scores[c], -c))
        if scores[best] <= 0:
            logger.warning(
                "deployer pool exhausted after %d of %d picks (no coverable traffic left)",
                len(chosen),
                objective.size,
            )
            break
        chosen.append(best)
        rounds.append(GreedyRound(best, scores[best]))
        candidates.remove(best)
        remaining = [(v, ases) for v, ases in remaining if best not in ases]
    return Deployment(frozenset(chosen)), tuple(rounds)


def select_deployers(
    graph: ASGraph,
    rib: Rib,
    matrix: TrafficMatrix,
    objective: DeploymentObjective,
) -> Deployment:
    deployment, _ = select_deployers_detailed(graph, rib, matrix, objective)
    return deployment


def ring_deployment(graph: ASGraph, country: str) -> Deployment:
    """Middleboxes on every AS of one country that links to a foreign AS."""
    return Deployment(country_border_ases(graph, country))
