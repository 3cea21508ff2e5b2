import math

import pytest

from radsim.economics import (
    DetectionModel,
    defection_cost,
    deflection_and_qos,
    detection_adjusted_cost,
    direct_deployment_cost,
    resistor_cost,
    to_usd,
    total_direct_cost,
)
from radsim.engine import converge
from radsim.errors import NonConvergenceError
from radsim.strategies import (
    Deployment,
    ResistorConfig,
    StrategyKind,
    member_processes,
    resistor_export_extension,
    route_cleanliness,
)
from radsim.topology import parse_as_relationships
from radsim.traffic import TrafficMatrix, account_flows


def attack_ledger(graph, matrix, config, deployment, with_rib=False):
    procs = member_processes(config)
    coalition = resistor_export_extension(config.strategy, config.members)
    clean = route_cleanliness(deployment)
    rib = converge(
        graph, graph.parent_blocks().values(), process_per_as=procs,
        coalition=coalition, clean=clean,
    )
    ledger = account_flows(rib, matrix, deployment)
    return (ledger, rib) if with_rib else ledger


@pytest.fixture
def g5_tiebreak(g5):
    matrix = TrafficMatrix({(1, 4): 10.0})
    deployment = Deployment(frozenset({2}))
    config = ResistorConfig(frozenset({1}), StrategyKind.TIEBREAK)
    rib_before = converge(g5, g5.parent_blocks().values())
    before = account_flows(rib_before, matrix, deployment)
    after, rib_after = attack_ledger(g5, matrix, config, deployment, with_rib=True)
    return g5, matrix, config, deployment, before, after, rib_before, rib_after


class TestToUsd:
    def test_zero(self):
        assert to_usd(0.0) == 0.0

    def test_paper_ratio(self):
        assert abs(to_usd(1e20) - 1.66652) < 1e-25

    def test_total_transit_revenue_scale(self):
        assert to_usd(2.94e29) == pytest.approx(4.9e9, rel=0.01)

    def test_linearity_within_ulp(self):
        a, b = 123.25, 9876.5
        lhs = to_usd(a + b)
        rhs = to_usd(a) + to_usd(b)
        assert abs(lhs - rhs) <= 4 * math.ulp(max(abs(lhs), abs(rhs), 1.0))

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            to_usd(-1.0)

    def test_override_ratio(self):
        assert to_usd(10.0, "0.5") == 5.0


class TestDetection:
    def test_perfect_detection(self):
        got = detection_adjusted_cost(100.0, DetectionModel(1.0, 0.0))
        assert (got.deployer_expected, got.nondeployer_expected, got.disincentive_margin) == (
            100.0, 0.0, 100.0,
        )

    def test_equal_rates_zero_margin(self):
        got = detection_adjusted_cost(100.0, DetectionModel(0.4, 0.4))
        assert got.disincentive_margin == 0.0

    def test_arithmetic(self):
        got = detection_adjusted_cost(100.0, DetectionModel(0.8, 0.1))
        assert (got.deployer_expected, got.nondeployer_expected) == (80.0, 10.0)
        assert got.disincentive_margin == pytest.approx(70.0)

    def test_margin_sign_matches_rate_gap(self):
        for alpha, psi in [(0.9, 0.1), (0.1, 0.9), (0.5, 0.5)]:
            got = detection_adjusted_cost(50.0, DetectionModel(alpha, psi))
            assert math.copysign(1, got.disincentive_margin) == math.copysign(1, alpha - psi) or (
                got.disincentive_margin == 0 and alpha == psi
            )

    def test_rates_validated(self):
        with pytest.raises(ValueError):
            DetectionModel(1.5, 0.0)


class TestDirectCost:
    def test_identical_ledgers_zero(self, g5_tiebreak):
        _, _, _, deployment, before, *_ = g5_tiebreak
        losses = direct_deployment_cost(before, before, deployment)
        assert total_direct_cost(losses) == 0.0

    def test_g5_tiebreak_loss(self, g5_tiebreak):
        g5, _, _, deployment, before, after, *_ = g5_tiebreak
        losses = direct_deployment_cost(before, after, deployment)
        assert losses[2].loss == 20.0
        # AS 3 gains the same traffic
        assert after.billable_units(3) - before.billable_units(3) == 20.0

    def test_empty_deployment_empty_map(self, g5_tiebreak):
        _, _, _, _, before, after, *_ = g5_tiebreak
        assert direct_deployment_cost(before, after, Deployment()) == {}

    def test_unknown_deployer_raises(self, g5_tiebreak):
        _, _, _, _, before, after, *_ = g5_tiebreak
        with pytest.raises(KeyError):
            direct_deployment_cost(before, after, Deployment(frozenset({99})))

    def test_gaining_deployer_contributes_zero(self, g5_tiebreak):
        g5, _, _, _, before, after, *_ = g5_tiebreak
        losses = direct_deployment_cost(before, after, Deployment(frozenset({2, 3})))
        assert losses[3].delta_raw == -20.0
        assert losses[3].loss == 0.0
        assert total_direct_cost(losses) == 20.0

    def test_off_path_deployer_invariance(self, g5_tiebreak):
        g5, _, _, _, before, after, *_ = g5_tiebreak
        with_extra = direct_deployment_cost(before, after, Deployment(frozenset({2, 5})))
        assert with_extra[5].loss == 0.0
        assert total_direct_cost(with_extra) == 20.0


class TestResistorCost:
    def test_tiebreak_and_path_length_cost_free(self, g5):
        matrix = TrafficMatrix({(1, 4): 10.0})
        deployment = Deployment(frozenset({2}))
        rib_before = converge(g5, g5.parent_blocks().values())
        before = account_flows(rib_before, matrix, deployment)
        for strategy in (StrategyKind.TIEBREAK, StrategyKind.PATH_LENGTH):
            config = ResistorConfig(frozenset({1}), strategy)
            after, rib_after = attack_ledger(g5, matrix, config, deployment, with_rib=True)
            cost = resistor_cost(before, after, rib_before, rib_after, config)
            assert cost.transit_conversion_units == 0.0
            assert cost.provider_shift_units == 0.0

    def test_original_rad_transit_conversion(self):
        # Member 1 (customer of member 2) finds the only clean path to 5's
        # block; the coalition advertisement makes 1 transit for provider 2.
        text = "\n".join(
            [
                "2|1|-1",  # 2 provider of member 1
                "4|1|-1",  # 4 provider of 1 (clean detour)
                "2|3|-1",  # 3 is 2's customer (tainted deployer path)
                "3|5|-1",
                "4|5|-1",
                "2|6|-1",  # extra stub keeps 6 nodes
            ]
        )
        g = parse_as_relationships(text)
        matrix = TrafficMatrix({(2, 5): 10.0})
        deployment = Deployment(frozenset({3}))
        config = ResistorConfig(frozenset({1, 2}), StrategyKind.ORIGINAL_RAD)
        rib_before = converge(g, g.parent_blocks().values())
        before = account_flows(rib_before, matrix, deployment)
        after, rib_after = attack_ledger(g, matrix, config, deployment, with_rib=True)
        b5 = g.parent_blocks()[5]
        assert rib_after.best(2, b5).path == (1, 4, 5)
        cost = resistor_cost(before, after, rib_before, rib_after, config)
        assert cost.transit_conversion_units == 10.0

    def test_local_pref_provider_shift(self):
        # Member 1's customer route to 5 is tainted; the clean route comes
        # from its provider 4.
        text = "\n".join(
            [
                "1|3|-1",  # 3 customer of member 1
                "3|5|-1",  # tainted customer chain 1->3->5
                "4|1|-1",  # 4 provider of 1
                "4|5|-1",
            ]
        )
        g = parse_as_relationships(text)
        matrix = TrafficMatrix({(1, 5): 8.0})
        deployment = Deployment(frozenset({3}))
        config = ResistorConfig(frozenset({1}), StrategyKind.LOCAL_PREF)
        rib_before = converge(g, g.parent_blocks().values())
        before = account_flows(rib_before, matrix, deployment)
        after, rib_after = attack_ledger(g, matrix, config, deployment, with_rib=True)
        b5 = g.parent_blocks()[5]
        assert rib_before.best(1, b5).path == (3, 5)
        assert rib_after.best(1, b5).path == (4, 5)
        cost = resistor_cost(before, after, rib_before, rib_after, config)
        assert cost.provider_shift_units == 8.0
        assert cost.transit_conversion_units == 0.0


class TestDefection:
    def test_irrelevant_deployer_gains_nothing(self, g5):
        matrix = TrafficMatrix({(1, 4): 10.0})
        deployment = Deployment(frozenset({2, 5}))
        config = ResistorConfig(frozenset({1}), StrategyKind.TIEBREAK)
        actual = attack_ledger(g5, matrix, config, deployment)
        report = defection_cost(
            deployment,
            actual,
            lambda reduced: attack_ledger(g5, matrix, config, reduced),
            direct_units=0.0,
        )
        by_as = {e.deployer: e for e in report.entries}
        assert by_as[5].gain == 0.0

    def test_g5_two_deployer_variant(self, g5):
        # deployers {2,3}: no clean path to 4; removing 3 frees [1,3,4]
        matrix = TrafficMatrix({(1, 4): 10.0})
        deployment = Deployment(frozenset({2, 3}))
        config = ResistorConfig(frozenset({1}), StrategyKind.TIEBREAK)
        actual = attack_ledger(g5, matrix, config, deployment)
        report = defection_cost(
            deployment,
            actual,
            lambda reduced: attack_ledger(g5, matrix, config, reduced),
            direct_units=0.0,
        )
        by_as = {e.deployer: e for e in report.entries}
        assert by_as[3].gain == 20.0
        assert by_as[2].gain == 0.0
        assert report.total_defection_units == 20.0
        assert report.grand_total_units == 20.0

    def test_counterfactual_error_excluded(self, g5):
        matrix = TrafficMatrix({(1, 4): 10.0})
        deployment = Deployment(frozenset({2, 3}))
        config = ResistorConfig(frozenset({1}), StrategyKind.TIEBREAK)
        actual = attack_ledger(g5, matrix, config, deployment)

        def rerun(reduced):
            if 3 not in reduced.deployers:
                raise NonConvergenceError([])
            return attack_ledger(g5, matrix, config, reduced)

        report = defection_cost(deployment, actual, rerun, direct_units=0.0)
        by_as = {e.deployer: e for e in report.entries}
        assert by_as[3].error is not None
        assert by_as[3].gain == 0.0
        assert report.total_defection_units == by_as[2].gain


class TestDeflectionQos:
    def test_g5_full_deflection(self, g5_tiebreak):
        _, _, config, deployment, before, after, *_ = g5_tiebreak
        qos = deflection_and_qos(before, after, deployment, config)
        assert qos.deflected_fraction == 1.0
        assert qos.initial_tainted_fraction == 1.0
        assert qos.mean_path_len_delta == 0.0

    def test_no_deployment_not_applicable(self, g5):
        matrix = TrafficMatrix({(1, 4): 10.0})
        config = ResistorConfig(frozenset({1}), StrategyKind.TIEBREAK)
        rib = converge(g5, g5.parent_blocks().values())
        ledger = account_flows(rib, matrix, Deployment())
        qos = deflection_and_qos(ledger, ledger, Deployment(), config)
        assert qos.deflected_fraction is None
        assert qos.mean_path_len_delta == 0.0

    def test_tiebreak_zero_delta_on_corpus(self):
        from corpus import random_graph, random_actors, unit_flows

        for seed in range(20):
            g = random_graph(seed)
            members, deployers = random_actors(seed, g)
            matrix = TrafficMatrix(unit_flows(g))
            deployment = Deployment(deployers)
            config = ResistorConfig(members, StrategyKind.TIEBREAK)
            rib_before = converge(g, g.parent_blocks().values())
            before = account_flows(rib_before, matrix, deployment)
            after = attack_ledger(g, matrix, config, deployment)
            qos = deflection_and_qos(before, after, deployment, config)
            assert qos.mean_path_len_delta == 0.0
