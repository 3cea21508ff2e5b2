"""Revenue consequences of an attack: direct losses, resistor costs,
defection opportunity costs, detection scaling, and unit-to-USD conversion."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping

from .engine import LearnedFrom, Rib
from .errors import NonConvergenceError
from .strategies import Deployment, ResistorConfig, StrategyKind
from .topology import RelationshipKind, Specificity, sub_blocks
from .traffic import FlowLedger, LinkLoadStats

logger = logging.getLogger(__name__)

# Annual USD revenue per simulated traffic unit (2014 global transit revenue
# divided by total simulated units). Kept as an exact decimal so conversion
# rounds once.
DEFAULT_USD_RATIO = "1.66652e-20"


def to_usd(units: float, ratio: str | float = DEFAULT_USD_RATIO) -> float:
    """Convert traffic units to annual USD with a single final rounding."""
    if units < 0:
        raise ValueError("traffic units must be non-negative")
    exact = Fraction(units) * Fraction(str(ratio))
    return float(exact)


@dataclass(frozen=True)
class DetectionModel:
    alpha: float  # true-positive rate
    psi: float  # false-positive rate

    def __post_init__(self):
        for rate in (self.alpha, self.psi):
            if not 0 <= rate <= 1:
                raise ValueError("detection rates must be in [0, 1]")


@dataclass(frozen=True)
class DetectionAdjustedCost:
    deployer_expected: float
    nondeployer_expected: float
    disincentive_margin: float


def detection_adjusted_cost(cost_usd: float, model: DetectionModel) -> DetectionAdjustedCost:
    """Expected costs under imperfect middlebox identification."""
    if cost_usd < 0:
        raise ValueError("cost must be non-negative")
    return DetectionAdjustedCost(
        model.alpha * cost_usd,
        model.psi * cost_usd,
        (model.alpha - model.psi) * cost_usd,
    )


@dataclass(frozen=True)
class DeployerLoss:
    deployer: int
    billable_before: float
    billable_after: float

    @property
    def delta_raw(self) -> float:
        return self.billable_before - self.billable_after

    @property
    def loss(self) -> float:
        """Originator-reimbursable loss; deployers that gained cost nothing."""
        return max(0.0, self.delta_raw)


def direct_deployment_cost(
    before: FlowLedger, after: FlowLedger, deployment: Deployment
) -> dict[int, DeployerLoss]:
    """Per-deployer revenue drop between the pre- and post-attack ledgers."""
    losses = {}
    for d in deployment.sorted():
        losses[d] = DeployerLoss(d, before.billable_units(d), after.billable_units(d))
    return losses


def total_direct_cost(losses: Mapping[int, DeployerLoss]) -> float:
    return sum(entry.loss for entry in losses.values())


@dataclass(frozen=True)
class ResistorCost:
    transit_conversion_units: float
    provider_shift_units: float


def _block_for_part(rib: Rib, dst: int, part: str):
    parent = rib.blocks_for_origin(dst)[Specificity.PARENT]
    if part == "parent":
        return parent
    low, high = sub_blocks(parent)
    return low if part == "low" else high


def resistor_cost(
    before: FlowLedger,
    after: FlowLedger,
    rib_before: Rib,
    rib_after: Rib,
    config: ResistorConfig,
) -> ResistorCost:
    """Costs the resistor must reimburse its members for.

    Transit conversion: post-attack traffic a member carries for a provider
    or peer that only the coalition advertisement extension exposed it to.
    Provider shift: member-responsible traffic whose selected route left the
    customer-learned class.
    """
    graph = rib_after.graph
    members = config.members
    transit = 0.0
    shift = 0.0
    for record in after.records:
        if record.path is None:
            continue
        block = _block_for_part(rib_after, record.dst, record.part)
        for i, asn in enumerate(record.path[:-1]):
            if asn not in members:
                continue
            route_after = rib_after.most_specific_route(asn, block)
            if route_after is None:
                continue
            upstream = record.path[i - 1] if i > 0 else None
            if upstream is not None:
                upstream_kind = graph.relationship(upstream, asn)
                if (
                    upstream_kind in (RelationshipKind.PROVIDER_OF, RelationshipKind.PEER_PEER)
                    and route_after.learned_from in (LearnedFrom.PEER, LearnedFrom.PROVIDER)
                ):
                    transit += record.volume
            responsible = upstream is None or (
                graph.relationship(upstream, asn) is RelationshipKind.CUSTOMER_OF
            )
            if responsible:
                route_before = rib_before.most_specific_route(asn, block)
                if (
                    route_before is not None
                    and route_before.learned_from is LearnedFrom.CUSTOMER
                    and route_after.learned_from in (LearnedFrom.PEER, LearnedFrom.PROVIDER)
                ):
                    shift += record.volume
    return ResistorCost(transit, shift)


@dataclass(frozen=True)
class DefectionEntry:
    deployer: int
    gain_raw: float | None  # None when the counterfactual failed to converge
    error: str | None = None

    @property
    def gain(self) -> float:
        return max(0.0, self.gain_raw) if self.gain_raw is not None else 0.0


@dataclass(frozen=True)
class DefectionReport:
    entries: tuple[DefectionEntry, ...]
    total_defection_units: float
    direct_units: float

    @property
    def grand_total_units(self) -> float:
        return self.direct_units + self.total_defection_units


def defection_cost(
    deployment: Deployment,
    actual_after: FlowLedger,
    rerun_without: Callable[[Deployment], FlowLedger],
    direct_units: float,
) -> DefectionReport:
    """Single-defector opportunity costs.

    For each deployer the whole attack pipeline is rerun without it; the
    billable traffic it would capture by defecting is what the originator
    must additionally defray.
    """
    entries = []
    total = 0.0
    for d in deployment.sorted():
        try:
            counterfactual = rerun_without(deployment.without(d))
        except NonConvergenceError as exc:
            logger.warning("defection counterfactual for AS %d failed: %s", d, exc)
            entries.append(DefectionEntry(d, None, str(exc)))
            continue
        gain = counterfactual.billable_units(d) - actual_after.billable_units(d)
        entries.append(DefectionEntry(d, gain))
        total += max(0.0, gain)
    return DefectionReport(tuple(entries), total, direct_units)


@dataclass(frozen=True)
class DeflectionQos:
    deflected_fraction: float | None  # None when nothing was tainted
    initial_tainted_fraction: float | None
    mean_path_len_delta: float
    inbound_path_len_delta: float
    changed_paths: int
    inbound_changed_paths: int


def deflection_and_qos(
    before: FlowLedger,
    after: FlowLedger,
    deployment: Deployment,
    config: ResistorConfig,
) -> DeflectionQos:
    """Deflected-traffic fraction and path-length deltas for one attack."""
    members = config.members
    tainted_before = 0.0
    deflected = 0.0
    sourced = 0.0
    deltas: list[tuple[float, int]] = []
    inbound_deltas: list[tuple[float, int]] = []
    for key, rec_b in before.by_key.items():
        src, dst, _ = key
        rec_a = after.by_key.get(key)
        if rec_a is None or rec_b.path is None or rec_a.path is None:
            continue
        if src in members:
            sourced += rec_b.volume
            if not rec_b.clean:
                tainted_before += rec_b.volume
                if rec_a.clean:
                    deflected += rec_a.volume
            if rec_a.path != rec_b.path:
                deltas.append((rec_b.volume, len(rec_a.path) - len(rec_b.path)))
        if dst in members and rec_a.path != rec_b.path:
            inbound_deltas.append((rec_b.volume, len(rec_a.path) - len(rec_b.path)))

    def weighted_mean(pairs: list[tuple[float, int]]) -> float:
        total = sum(v for v, _ in pairs)
        if total <= 0:
            return 0.0
        return sum(v * d for v, d in pairs) / total

    return DeflectionQos(
        deflected_fraction=(deflected / tainted_before) if tainted_before > 0 else None,
        initial_tainted_fraction=(tainted_before / sourced) if sourced > 0 else None,
        mean_path_len_delta=weighted_mean(deltas),
        inbound_path_len_delta=weighted_mean(inbound_deltas),
        changed_paths=len(deltas),
        inbound_changed_paths=len(inbound_deltas),
    )
