"""Resistor strategies: cleanliness, decision processes, and export extensions.

Only resistor members run a modified decision process; every other AS keeps
the baseline ranking. A clean rule always falls through when no clean
candidate survives, so no strategy ever disconnects the resistor from a
destination.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .engine import BASELINE_PROCESS, CleanPredicate, DecisionProcess, Route, Rule


class StrategyKind(Enum):
    BASELINE = "baseline"
    ORIGINAL_RAD = "original_rad"
    LOCAL_PREF = "local_pref"
    PATH_LENGTH = "path_length"
    TIEBREAK = "tiebreak"


@dataclass(frozen=True)
class ResistorConfig:
    members: frozenset[int]
    strategy: StrategyKind
    frrp_enabled: bool = False
    selarp_enabled: bool = False

    def __post_init__(self):
        if not self.members:
            raise ValueError("resistor must have at least one member")
        if self.frrp_enabled and self.selarp_enabled:
            raise ValueError("FRRP and SelARP are mutually exclusive")
        if (self.frrp_enabled or self.selarp_enabled) and self.strategy is StrategyKind.TIEBREAK:
            # Hole punching lengthens inbound paths, defeating the point of
            # a strategy whose goal is zero path-length change.
            raise ValueError("reverse poisoning is incompatible with the tiebreak strategy")


@dataclass(frozen=True)
class Deployment:
    deployers: frozenset[int] = frozenset()

    def __contains__(self, asn: int) -> bool:
        return asn in self.deployers

    def __len__(self) -> int:
        return len(self.deployers)

    def sorted(self) -> tuple[int, ...]:
        return tuple(sorted(self.deployers))

    def without(self, asn: int) -> "Deployment":
        return Deployment(self.deployers - {asn})


def classify_clean(path: tuple[int, ...] | list[int], deployment: Deployment) -> bool:
    """True iff no AS on the path, origin included, hosts a middlebox."""
    return not any(asn in deployment.deployers for asn in path)


def route_cleanliness(deployment: Deployment) -> CleanPredicate:
    """Per-route cleanliness used during route selection.

    Poisoned advertisements pad the AS path after the first occurrence of the
    originating AS; traffic never visits the padding, so cleanliness is judged
    on the prefix up to and including the origin's first appearance.
    """
    deployers = deployment.deployers

    def clean(route: Route) -> bool:
        origin = route.block.origin
        for asn in route.path:
            if asn in deployers:
                return False
            if asn == origin:
                break
        return True

    return clean


_PROCESSES = {
    StrategyKind.BASELINE: BASELINE_PROCESS,
    StrategyKind.ORIGINAL_RAD: DecisionProcess(
        (Rule.PREFER_CLEAN, Rule.LOCAL_PREFERENCE, Rule.SHORTEST_PATH, Rule.LOWEST_NEXT_HOP)
    ),
    StrategyKind.LOCAL_PREF: DecisionProcess(
        (Rule.PREFER_CLEAN, Rule.LOCAL_PREFERENCE, Rule.SHORTEST_PATH, Rule.LOWEST_NEXT_HOP)
    ),
    StrategyKind.PATH_LENGTH: DecisionProcess(
        (Rule.LOCAL_PREFERENCE, Rule.PREFER_CLEAN, Rule.SHORTEST_PATH, Rule.LOWEST_NEXT_HOP)
    ),
    StrategyKind.TIEBREAK: DecisionProcess(
        (Rule.LOCAL_PREFERENCE, Rule.SHORTEST_PATH, Rule.CLEAN_TIEBREAK, Rule.LOWEST_NEXT_HOP)
    ),
}


def build_decision_process(strategy: StrategyKind) -> DecisionProcess:
    """The ranked rule list a resistor member runs under one strategy."""
    return _PROCESSES[strategy]


def resistor_export_extension(strategy: StrategyKind, members: frozenset[int]) -> frozenset[int] | None:
    """Coalition export set, or None when normal advertisement rules apply.

    Only the strongest strategy forces members to advertise every best path
    to adjacent members; the cheaper strategies change route selection alone.
    """
    if strategy is StrategyKind.ORIGINAL_RAD:
        return members
    return None


def member_processes(config: ResistorConfig) -> dict[int, DecisionProcess]:
    """Per-AS decision-process overrides for one resistor configuration."""
    process = build_decision_process(config.strategy)
    return {m: process for m in sorted(config.members)}
