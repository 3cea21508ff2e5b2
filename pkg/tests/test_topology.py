import pytest

from radsim.errors import ConflictError, RelationshipParseError
from radsim.topology import (
    ASAttributes,
    ASGraph,
    RelationshipKind,
    Specificity,
    alias_siblings,
    country_border_ases,
    customer_cone,
    load_attributes,
    parse_as_relationships,
    select_coalition_top_degree,
    sub_blocks,
)

from conftest import G5_RELATIONSHIPS, build_g5
from corpus import random_graph

P = RelationshipKind.PROVIDER_OF
C = RelationshipKind.CUSTOMER_OF
PEER = RelationshipKind.PEER_PEER


class TestParse:
    def test_single_provider_edge(self):
        g = parse_as_relationships("1|2|-1")
        assert g.relationship(1, 2) is P
        assert g.relationship(2, 1) is C

    def test_peer_edge_symmetric(self):
        g = parse_as_relationships("1|2|0")
        assert g.relationship(1, 2) is PEER
        assert g.relationship(2, 1) is PEER

    def test_comments_and_blanks_ignored(self):
        g = parse_as_relationships("# header\n\n1|2|-1\n")
        assert len(g) == 2

    def test_contradictory_duplicate_is_conflict(self):
        with pytest.raises(ConflictError):
            parse_as_relationships("1|2|0\n1|2|-1")

    def test_contradictory_reverse_declaration(self):
        with pytest.raises(ConflictError):
            parse_as_relationships("1|2|-1\n2|1|-1")

    def test_consistent_duplicate_allowed(self):
        g = parse_as_relationships("1|2|0\n2|1|0")
        assert g.relationship(1, 2) is PEER

    def test_malformed_line_reports_number(self):
        with pytest.raises(RelationshipParseError) as err:
            parse_as_relationships("1|2|-1\nbogus line")
        assert err.value.line_no == 2

    def test_self_edge_rejected(self):
        with pytest.raises(RelationshipParseError):
            parse_as_relationships("3|3|0")

    def test_unknown_code_rejected(self):
        with pytest.raises(RelationshipParseError):
            parse_as_relationships("1|2|7")

    def test_g5_roundtrip(self):
        g = parse_as_relationships(G5_RELATIONSHIPS)
        assert g.ases() == (1, 2, 3, 4, 5)
        assert g.relationship(5, 2) is P
        assert g.edges == build_g5().edges


class TestAttributes:
    SIDE = (
        "asn,country,ip_weight,traffic_in_weight,traffic_out_weight,super_as\n"
        "1,us,4.0,2.0,3.0,false\n"
        "2,de,1.0,,,true\n"
    )

    def test_loads_values(self):
        g = load_attributes(parse_as_relationships("1|2|-1"), self.SIDE)
        assert g.attributes(1).country == "us"
        assert g.attributes(1).ip_weight == 4.0
        assert g.effective_traffic_weights(1) == (2.0, 3.0)

    def test_blank_weights_use_fallback(self):
        g = load_attributes(parse_as_relationships("1|2|-1"), self.SIDE)
        in_w, out_w = g.effective_traffic_weights(2)
        assert in_w == out_w > 0

    def test_unknown_asn_rows_skipped(self):
        extra = self.SIDE + "9,fr,1,1,1,false\n"
        g = load_attributes(parse_as_relationships("1|2|-1"), extra)
        assert 9 not in g

    def test_missing_column_rejected(self):
        with pytest.raises(ValueError):
            load_attributes(parse_as_relationships("1|2|-1"), "asn,country\n1,us\n")

    def test_super_as_with_zero_out_weight_rejected(self):
        bad = (
            "asn,country,ip_weight,traffic_in_weight,traffic_out_weight,super_as\n"
            "1,us,1,1,0,true\n"
        )
        with pytest.raises(ValueError):
            load_attributes(parse_as_relationships("1|2|-1"), bad)

    def test_cdn_hosts_column(self):
        side = (
            "asn,country,ip_weight,traffic_in_weight,traffic_out_weight,super_as,cdn_hosts\n"
            "1,us,1,1,1,false,2\n"
        )
        g = load_attributes(parse_as_relationships("1|2|-1"), side)
        assert g.attributes(1).cdn_hosts == frozenset({2})


class TestAliasSiblings:
    def test_merge_keeps_lowest_asn(self):
        g = parse_as_relationships("1|2|2\n3|2|-1")
        merged = alias_siblings(g)
        assert merged.ases() == (1, 3)
        assert merged.relationship(3, 1) is P

    def test_no_siblings_is_identity(self, g5):
        assert alias_siblings(g5).edges == g5.edges

    def test_conflict_precedence_provider_over_peer(self):
        g = parse_as_relationships("1|2|2\n3|1|0\n3|2|-1")
        merged = alias_siblings(g)
        assert merged.relationship(3, 1) is P

    def test_idempotent(self):
        g = parse_as_relationships("1|2|2\n2|3|2\n4|3|-1\n4|5|0")
        once = alias_siblings(g)
        twice = alias_siblings(once)
        assert once.edges == twice.edges
        assert once.ases() == twice.ases()

    def test_weights_summed(self):
        g = parse_as_relationships("1|2|2\n3|2|-1")
        g = load_attributes(
            g,
            "asn,country,ip_weight,traffic_in_weight,traffic_out_weight,super_as\n"
            "1,us,2.0,1.0,1.0,false\n"
            "2,de,3.0,2.0,2.0,false\n",
        )
        merged = alias_siblings(g)
        assert merged.attributes(1).ip_weight == 5.0
        assert merged.attributes(1).traffic_in_weight == 3.0
        assert merged.attributes(1).country == "us"

    def test_sibling_chain_merges_transitively(self):
        g = parse_as_relationships("1|2|2\n2|3|2\n9|3|-1")
        merged = alias_siblings(g)
        assert merged.ases() == (1, 9)
        assert merged.relationship(9, 1) is P


class TestCone:
    def test_chain(self):
        g = parse_as_relationships("1|2|-1\n2|3|-1")
        assert customer_cone(g, 1) == {1, 2, 3}

    def test_stub_is_itself(self, g5):
        assert customer_cone(g5, 1) == {1}

    def test_g5_root_five(self, g5):
        assert customer_cone(g5, 5) == {5, 2, 3, 1, 4}

    def test_unknown_root(self, g5):
        with pytest.raises(KeyError):
            customer_cone(g5, 99)

    def test_provider_cone_contains_customer_cone(self):
        for seed in range(25):
            g = random_graph(seed)
            for (a, b), kind in g.edges.items():
                if kind is P:
                    assert customer_cone(g, a) >= customer_cone(g, b)


class TestCoalition:
    def test_full_fraction_selects_all(self, g5):
        assert select_coalition_top_degree(g5, 1.0) == {1, 2, 3, 4, 5}

    def test_g5_tie_breaks_to_lower_asn(self, g5):
        # degree 3 for ASes 2 and 3; the lower ASN wins the single slot
        assert select_coalition_top_degree(g5, 0.2) == {2}

    def test_ceiling_arithmetic(self):
        g = random_graph(3, n=10)
        assert len(select_coalition_top_degree(g, 0.25)) == 3

    def test_invalid_fraction(self, g5):
        with pytest.raises(ValueError):
            select_coalition_top_degree(g5, 0.0)


class TestBorder:
    def test_all_same_country_empty(self):
        g = build_g5(countries={a: "us" for a in (1, 2, 3, 4, 5)})
        assert country_border_ases(g, "us") == frozenset()

    def test_two_as_graph(self):
        g = parse_as_relationships("1|2|-1")
        g = load_attributes(
            g,
            "asn,country,ip_weight,traffic_in_weight,traffic_out_weight,super_as\n"
            "1,us,1,,,false\n2,de,1,,,false\n",
        )
        assert country_border_ases(g, "us") == {1}

    def test_g5_mixed_countries(self):
        g = build_g5(countries={1: "ir", 2: "us", 3: "de", 4: "ir", 5: "us"})
        assert country_border_ases(g, "us") == {2, 5}

    def test_unknown_country_is_empty(self, g5):
        assert country_border_ases(g5, "zz") == frozenset()


class TestInvariants:
    def test_edge_symmetry_after_parse_and_alias(self):
        for seed in range(20):
            g = random_graph(seed)
            for (a, b), kind in g.edges.items():
                assert g.relationship(b, a) is kind.inverse()

    def test_graph_rejects_asymmetric_edges(self):
        nodes = {1: ASAttributes(), 2: ASAttributes()}
        with pytest.raises(ValueError):
            ASGraph(nodes, {(1, 2): P})

    def test_sub_blocks_halve_parent(self, g5):
        parent = g5.parent_blocks()[4]
        low, high = sub_blocks(parent)
        assert low.weight + high.weight == parent.weight
        assert low.specificity is Specificity.SUB_LOW
        assert high.origin == parent.origin
