"""Scenario execution: topology -> traffic -> routing -> attack -> economics.

All outputs are deterministic functions of the scenario inputs; running the
same scenario twice produces byte-identical report files.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

from . import deployment as deployment_mod
from . import economics, poisoning, strategies, traffic, topology
from .engine import Rib, converge, export_rib
from .errors import ScenarioError
from .scenario import ScenarioConfig
from .strategies import Deployment, ResistorConfig, StrategyKind
from .traffic import FlowLedger, TrafficMatrix

logger = logging.getLogger(__name__)


def load_topology(cfg: ScenarioConfig) -> topology.ASGraph:
    graph = topology.parse_as_relationships(cfg.relationships_text)
    if cfg.attributes_text is not None:
        graph = topology.load_attributes(graph, cfg.attributes_text)
    if cfg.merge_siblings:
        graph = topology.alias_siblings(graph)
    return graph


def resolve_members(cfg: ScenarioConfig, graph: topology.ASGraph) -> frozenset[int]:
    if cfg.resistor_members is not None:
        missing = cfg.resistor_members - set(graph.ases())
        if missing:
            raise ScenarioError(f"resistor members not in topology: {sorted(missing)}")
        return cfg.resistor_members
    if cfg.resistor_country is not None:
        members = frozenset(
            a for a in graph.ases() if graph.attributes(a).country == cfg.resistor_country
        )
        if not members:
            raise ScenarioError(f"no ASes in resistor country {cfg.resistor_country!r}")
        return members
    return topology.select_coalition_top_degree(graph, cfg.resistor_top_degree_fraction)


def resolve_matrix(cfg: ScenarioConfig, graph: topology.ASGraph) -> TrafficMatrix:
    if cfg.matrix_text is not None:
        matrix = TrafficMatrix.from_csv(cfg.matrix_text)
        unknown = {a for pair in matrix.flows for a in pair if a not in graph}
        if unknown:
            raise ScenarioError(f"matrix references unknown ASes: {sorted(unknown)}")
        return matrix
    profiles = traffic.parse_region_profiles(cfg.profiles_text)
    return traffic.build_traffic_matrix(graph, profiles, cfg.total_units)


def resolve_deployment(
    cfg: ScenarioConfig,
    graph: topology.ASGraph,
    rib_before: Rib,
    matrix: TrafficMatrix,
    members: frozenset[int],
) -> Deployment:
    """Deployer selection; members can never deploy, whatever the mode."""
    if cfg.deployment_mode == "explicit":
        missing = cfg.explicit_deployers - set(graph.ases())
        if missing:
            raise ScenarioError(f"deployers not in topology: {sorted(missing)}")
        chosen = cfg.explicit_deployers
    elif cfg.deployment_mode == "ring":
        chosen = deployment_mod.ring_deployment(graph, cfg.ring_country).deployers
    else:
        mode = (
            deployment_mod.ObjectiveMode.TARGETED
            if cfg.deployment_mode == "targeted"
            else deployment_mod.ObjectiveMode.GLOBAL
        )
        objective = deployment_mod.DeploymentObjective(mode, cfg.deployment_size, members)
        return deployment_mod.select_deployers(graph, rib_before, matrix, objective)
    overlap = chosen & members
    if overlap:
        logger.warning("dropping resistor members from deployment: %s", sorted(overlap))
    return Deployment(frozenset(chosen - members))


@dataclass(frozen=True)
class AttackState:
    rib_after: Rib
    ledger_after: FlowLedger
    selarp_sets: dict[int, frozenset[int]]


def run_attack(
    graph: topology.ASGraph,
    matrix: TrafficMatrix,
    config: ResistorConfig,
    deployment: Deployment,
    convergence_cap: int | None = None,
    threads: int = 1,
    selarp_objective: str = "units",
) -> AttackState:
    """Converge the attacked network and account its flows."""
    procs = strategies.member_processes(config)
    coalition = strategies.resistor_export_extension(config.strategy, config.members)
    clean = strategies.route_cleanliness(deployment)
    parents = list(graph.parent_blocks().values())
    rib_parent = converge(
        graph,
        parents,
        process_per_as=procs,
        coalition=coalition,
        clean=clean,
        max_sweeps=convergence_cap,
        threads=threads,
    )
    rib_after = rib_parent
    selarp_sets: dict[int, frozenset[int]] = {}
    sub_origins: frozenset[int] = frozenset()
    if (config.frrp_enabled or config.selarp_enabled) and deployment.deployers:
        sub_origins = config.members
        originations = {}
        if config.frrp_enabled:
            for member in sorted(config.members):
                for adv in poisoning.frrp_advertisements(graph, member, deployment):
                    originations[adv.block] = adv.to_origination()
        else:
            ctx = poisoning.ReversePoisonContext(
                graph=graph,
                matrix=matrix,
                deployment=deployment,
                parent_rib=rib_parent,
                process_per_as=procs,
                coalition=coalition,
                clean=clean,
                max_sweeps=convergence_cap,
            )
            for member in sorted(config.members):
                chosen = poisoning.selarp_greedy(ctx, member, selarp_objective)
                selarp_sets[member] = chosen
                for adv in poisoning.selarp_advertisements(graph, member, chosen):
                    originations[adv.block] = adv.to_origination()
        sub_rib = converge(
            graph,
            list(originations),
            process_per_as=procs,
            coalition=coalition,
            clean=clean,
            originations=originations,
            max_sweeps=convergence_cap,
            threads=threads,
        )
        rib_after = rib_parent.merged(sub_rib)
    ledger_after = traffic.account_flows(rib_after, matrix, deployment, sub_origins)
    return AttackState(rib_after, ledger_after, selarp_sets)


@dataclass
class RunResult:
    scenario_hash: str
    graph: topology.ASGraph
    matrix: TrafficMatrix
    resistor: ResistorConfig
    deployment: Deployment
    rib_before: Rib
    rib_after: Rib
    ledger_before: FlowLedger
    ledger_after: FlowLedger
    losses: dict[int, economics.DeployerLoss]
    resistor_cost: economics.ResistorCost
    qos: economics.DeflectionQos
    link_stats: traffic.LinkLoadStats
    intl_fraction: dict[int, float]
    defection: economics.DefectionReport | None
    detection: economics.DetectionAdjustedCost | None
    selarp_sets: dict[int, frozenset[int]]
    usd_ratio: str

    @property
    def direct_units(self) -> float:
        return economics.total_direct_cost(self.losses)

    @property
    def grand_total_units(self) -> float:
        total = self.direct_units
        if self.defection is not None:
            total += self.defection.total_defection_units
        return total


def run_scenario(cfg: ScenarioConfig, out_dir: str | Path | None = None) -> RunResult:
    graph = load_topology(cfg)
    members = resolve_members(cfg, graph)
    config = ResistorConfig(members, cfg.strategy, cfg.frrp, cfg.selarp)
    matrix = resolve_matrix(cfg, graph)

    parents = list(graph.parent_blocks().values())
    rib_before = converge(
        graph, parents, max_sweeps=cfg.convergence_cap, threads=cfg.threads
    )
    deployment = resolve_deployment(cfg, graph, rib_before, matrix, members)

    attack = run_attack(
        graph,
        matrix,
        config,
        deployment,
        convergence_cap=cfg.convergence_cap,
        threads=cfg.threads,
        selarp_objective=cfg.selarp_objective,
    )
    sub_origins = members if (config.frrp_enabled or config.selarp_enabled) and deployment.deployers else frozenset()
    ledger_before = traffic.account_flows(rib_before, matrix, deployment, sub_origins)

    losses = economics.direct_deployment_cost(ledger_before, attack.ledger_after, deployment)
    res_cost = economics.resistor_cost(
        ledger_before, attack.ledger_after, rib_before, attack.rib_after, config
    )
    qos = economics.deflection_and_qos(ledger_before, attack.ledger_after, deployment, config)
    link_stats = traffic.link_load_stats(ledger_before, attack.ledger_after)
    intl = traffic.international_transit_fraction(graph, attack.ledger_after)

    defection = None
    if cfg.defection and deployment.deployers:

        def rerun(reduced: Deployment) -> FlowLedger:
            return run_attack(
                graph,
                matrix,
                config,
                reduced,
                convergence_cap=cfg.convergence_cap,
                threads=cfg.threads,
                selarp_objective=cfg.selarp_objective,
            ).ledger_after

        defection = economics.defection_cost(
            deployment,
            attack.ledger_after,
            rerun,
            economics.total_direct_cost(losses),
        )

    detection = None
    if cfg.alpha is not None:
        grand_units = economics.total_direct_cost(losses)
        if defection is not None:
            grand_units += defection.total_defection_units
        detection = economics.detection_adjusted_cost(
            economics.to_usd(grand_units, cfg.usd_ratio),
            economics.DetectionModel(cfg.alpha, cfg.psi),
        )

    result = RunResult(
        scenario_hash=cfg.scenario_hash(),
        graph=graph,
        matrix=matrix,
        resistor=config,
        deployment=deployment,
        rib_before=rib_before,
        rib_after=attack.rib_after,
        ledger_before=ledger_before,
        ledger_after=attack.ledger_after,
        losses=losses,
        resistor_cost=res_cost,
        qos=qos,
        link_stats=link_stats,
        intl_fraction=intl,
        defection=defection,
        detection=detection,
        selarp_sets=attack.selarp_sets,
        usd_ratio=cfg.usd_ratio,
    )
    if out_dir is not None:
        write_outputs(result, cfg, Path(out_dir))
    return result


def _fmt(value) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def report_rows(result: RunResult) -> list[tuple[str, str]]:
    """Flat (key, value) pairs; the source of both report renderings."""
    usd = lambda units: economics.to_usd(units, result.usd_ratio)  # noqa: E731
    rows: list[tuple[str, str]] = []
    add = lambda k, v: rows.append((k, _fmt(v)))  # noqa: E731
    add("scenario.hash", result.scenario_hash)
    add("scenario.strategy", result.resistor.strategy.value)
    add("scenario.frrp", result.resistor.frrp_enabled)
    add("scenario.selarp", result.resistor.selarp_enabled)
    add("scenario.resistor_members", len(result.resistor.members))
    add("topology.ases", len(result.graph))
    add("traffic.flows", len(result.matrix))
    add("traffic.total_units", result.matrix.total())
    add("traffic.unreachable_units", result.ledger_after.unreachable_volume())
    add("deployment.size", len(result.deployment))
    add("deployment.deployers", " ".join(str(d) for d in result.deployment.sorted()))
    add("deflection.initial_tainted_fraction", result.qos.initial_tainted_fraction)
    add("deflection.deflected_fraction", result.qos.deflected_fraction)
    add("qos.mean_path_len_delta", result.qos.mean_path_len_delta)
    add("qos.inbound_path_len_delta", result.qos.inbound_path_len_delta)
    add("qos.changed_paths", result.qos.changed_paths)
    add("qos.inbound_changed_paths", result.qos.inbound_changed_paths)
    add("links.median_increase", result.link_stats.median_increase)
    add("links.p90_increase", result.link_stats.p90_increase)
    add("links.increased", result.link_stats.increased_links)
    add("links.newly_used", result.link_stats.newly_used_links)
    add("international.transit_ases", len(result.intl_fraction))
    if result.intl_fraction:
        over_third = sum(1 for f in result.intl_fraction.values() if f > 1 / 3)
        add("international.share_over_one_third", over_third / len(result.intl_fraction))
    else:
        add("international.share_over_one_third", None)
    for deployer in result.deployment.sorted():
        loss = result.losses[deployer]
        add(f"cost.direct.as{deployer}.units", loss.loss)
        add(f"cost.direct.as{deployer}.raw_delta", loss.delta_raw)
        add(f"cost.direct.as{deployer}.usd", usd(loss.loss))
    add("cost.direct.total_units", result.direct_units)
    add("cost.direct.total_usd", usd(result.direct_units))
    add("cost.resistor.transit_conversion_units", result.resistor_cost.transit_conversion_units)
    add("cost.resistor.transit_conversion_usd", usd(result.resistor_cost.transit_conversion_units))
    add("cost.resistor.provider_shift_units", result.resistor_cost.provider_shift_units)
    add("cost.resistor.provider_shift_usd", usd(result.resistor_cost.provider_shift_units))
    if result.defection is not None:
        for entry in result.defection.entries:
            add(f"defection.as{entry.deployer}.gain_raw", entry.gain_raw)
            add(f"defection.as{entry.deployer}.gain_units", entry.gain)
            if entry.error:
                add(f"defection.as{entry.deployer}.error", entry.error)
        add("defection.total_units", result.defection.total_defection_units)
        add("defection.total_usd", usd(result.defection.total_defection_units))
        add("total.grand_units", result.defection.grand_total_units)
        add("total.grand_usd", usd(result.defection.grand_total_units))
    if result.detection is not None:
        add("detection.deployer_expected_usd", result.detection.deployer_expected)
        add("detection.nondeployer_expected_usd", result.detection.nondeployer_expected)
        add("detection.margin_usd", result.detection.disincentive_margin)
    if result.selarp_sets:
        for member in sorted(result.selarp_sets):
            chosen = " ".join(str(n) for n in sorted(result.selarp_sets[member]))
            add(f"selarp.as{member}.advertise_to", chosen)
    return rows


def render_report_text(result: RunResult) -> str:
    lines = ["attack economics report", "======================="]
    section = None
    for key, value in report_rows(result):
        head = key.split(".", 1)[0]
        if head != section:
            section = head
            lines.append("")
            lines.append(f"[{section}]")
        lines.append(f"  {key} = {value}")
    return "\n".join(lines) + "\n"


def render_report_csv(result: RunResult) -> str:
    lines = ["key,value"]
    for key, value in report_rows(result):
        lines.append(f"{key},{value}")
    return "\n".join(lines) + "\n"


def write_outputs(result: RunResult, cfg: ScenarioConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.txt").write_text(render_report_text(result))
    (out_dir / "report.csv").write_text(render_report_csv(result))
    (out_dir / "scenario_resolved.txt").write_text(cfg.resolved_text())
    # Input copies make the directory self-contained for later recomputation.
    (out_dir / "inputs_relationships.txt").write_text(cfg.relationships_text)
    if cfg.attributes_text is not None:
        (out_dir / "inputs_attributes.csv").write_text(cfg.attributes_text)
    (out_dir / "deployment.txt").write_text(
        "".join(f"{d}\n" for d in result.deployment.sorted())
    )
    (out_dir / "matrix.csv").write_text(result.matrix.to_csv())
    for phase, ledger in (("before", result.ledger_before), ("after", result.ledger_after)):
        (out_dir / f"flows_{phase}.csv").write_text(ledger.flows_csv())
        (out_dir / f"edges_{phase}.csv").write_text(ledger.edges_csv())
        (out_dir / f"billable_{phase}.csv").write_text(ledger.billable_csv())
    if cfg.export_ribs:
        (out_dir / "rib_before.csv").write_text(export_rib(result.rib_before))
        (out_dir / "rib_after.csv").write_text(export_rib(result.rib_after))
    if result.selarp_sets:
        lines = [
            f"{m}: {' '.join(str(n) for n in sorted(result.selarp_sets[m]))}"
            for m in sorted(result.selarp_sets)
        ]
        (out_dir / "selarp_sets.txt").write_text("\n".join(lines) + "\n")


def _rib_from_csv(graph: topology.ASGraph, text: str) -> Rib:
    from .engine import LearnedFrom, Route
    from .topology import AddressBlock, Specificity

    spec_by_name = {s.value: s for s in Specificity}
    block_ids = {Specificity.PARENT: 0, Specificity.SUB_LOW: 1, Specificity.SUB_HIGH: 2}
    best: dict[AddressBlock, dict[int, Route]] = {}
    blocks: set[AddressBlock] = set()
    for raw in text.splitlines()[1:]:
        if not raw.strip():
            continue
        asn_s, origin_s, spec_s, path_s, learned_s = raw.split(",")
        spec = spec_by_name[spec_s]
        block = AddressBlock(int(origin_s), block_ids[spec], spec)
        path = tuple(int(x) for x in path_s.split())
        learned = LearnedFrom(learned_s)
        next_hop = int(asn_s) if learned is LearnedFrom.SELF else path[0]
        blocks.add(block)
        best.setdefault(block, {})[int(asn_s)] = Route(block, path, next_hop, learned)
    return Rib(graph, blocks, best)


def recompute_report(out_dir: str | Path) -> list[tuple[str, str]]:
    """Rebuild the economics report from a saved run directory.

    Routing is not repeated, so defection counterfactuals are unavailable;
    detection scaling (when configured) applies to the direct total only.
    """
    from .scenario import parse_key_values

    out_dir = Path(out_dir)
    pairs = parse_key_values((out_dir / "scenario_resolved.txt").read_text())
    graph = topology.parse_as_relationships((out_dir / "inputs_relationships.txt").read_text())
    attrs_file = out_dir / "inputs_attributes.csv"
    if attrs_file.exists():
        graph = topology.load_attributes(graph, attrs_file.read_text())
    if pairs.get("merge_siblings", "true").lower() not in ("0", "false", "no", "off"):
        graph = topology.alias_siblings(graph)
    deployers = frozenset(
        int(line) for line in (out_dir / "deployment.txt").read_text().split() if line
    )
    deployment = Deployment(deployers)
    strategy = StrategyKind(pairs.get("strategy", "baseline"))
    if "resistor_members" in pairs:
        members = frozenset(
            int(x) for x in pairs["resistor_members"].replace(",", " ").split() if x
        )
    elif "resistor_country" in pairs:
        members = frozenset(
            a for a in graph.ases() if graph.attributes(a).country == pairs["resistor_country"]
        )
    else:
        members = topology.select_coalition_top_degree(
            graph, float(pairs["resistor_top_degree_fraction"])
        )
    config = ResistorConfig(
        members,
        strategy,
        pairs.get("frrp", "false").lower() in ("1", "true", "yes", "on"),
        pairs.get("selarp", "false").lower() in ("1", "true", "yes", "on"),
    )

    def load_ledger(phase: str) -> FlowLedger:
        return FlowLedger.from_csv(
            (out_dir / f"flows_{phase}.csv").read_text(),
            (out_dir / f"edges_{phase}.csv").read_text(),
            (out_dir / f"billable_{phase}.csv").read_text(),
        )

    before = load_ledger("before")
    after = load_ledger("after")
    rib_before = _rib_from_csv(graph, (out_dir / "rib_before.csv").read_text())
    rib_after = _rib_from_csv(graph, (out_dir / "rib_after.csv").read_text())

    usd_ratio = pairs.get("usd_ratio", "1.66652e-20")
    losses = economics.direct_deployment_cost(before, after, deployment)
    res_cost = economics.resistor_cost(before, after, rib_before, rib_after, config)
    qos = economics.deflection_and_qos(before, after, deployment, config)
    link_stats = traffic.link_load_stats(before, after)
    intl = traffic.international_transit_fraction(graph, after)

    rows: list[tuple[str, str]] = [("scenario.strategy", strategy.value)]
    direct_total = economics.total_direct_cost(losses)
    for deployer in deployment.sorted():
        loss = losses[deployer]
        rows.append((f"cost.direct.as{deployer}.units", _fmt(loss.loss)))
        rows.append((f"cost.direct.as{deployer}.raw_delta", _fmt(loss.delta_raw)))
        rows.append((f"cost.direct.as{deployer}.usd", _fmt(economics.to_usd(loss.loss, usd_ratio))))
    rows.append(("cost.direct.total_units", _fmt(direct_total)))
    rows.append(("cost.direct.total_usd", _fmt(economics.to_usd(direct_total, usd_ratio))))
    rows.append(
        ("cost.resistor.transit_conversion_units", _fmt(res_cost.transit_conversion_units))
    )
    rows.append(("cost.resistor.provider_shift_units", _fmt(res_cost.provider_shift_units)))
    rows.append(("deflection.initial_tainted_fraction", _fmt(qos.initial_tainted_fraction)))
    rows.append(("deflection.deflected_fraction", _fmt(qos.deflected_fraction)))
    rows.append(("qos.mean_path_len_delta", _fmt(qos.mean_path_len_delta)))
    rows.append(("qos.inbound_path_len_delta", _fmt(qos.inbound_path_len_delta)))
    rows.append(("links.median_increase", _fmt(link_stats.median_increase)))
    rows.append(("links.p90_increase", _fmt(link_stats.p90_increase)))
    rows.append(("international.transit_ases", _fmt(len(intl))))
    if "alpha" in pairs:
        model = economics.DetectionModel(float(pairs["alpha"]), float(pairs["psi"]))
        det = economics.detection_adjusted_cost(
            economics.to_usd(direct_total, usd_ratio), model
        )
        rows.append(("detection.deployer_expected_usd", _fmt(det.deployer_expected)))
        rows.append(("detection.nondeployer_expected_usd", _fmt(det.nondeployer_expected)))
        rows.append(("detection.margin_usd", _fmt(det.disincentive_margin)))
    lines = ["key,value"] + [f"{k},{v}" for k, v in rows]
    (out_dir / "report_recomputed.csv").write_text("\n".join(lines) + "\n")
    return rows
