import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from radsim.topology import ASAttributes, ASGraph, RelationshipKind

G5_RELATIONSHIPS = """\
# canonical five-AS test graph
2|1|-1
3|1|-1
2|4|-1
3|4|-1
5|2|-1
5|3|-1
"""


def build_g5(countries=None, ip_weights=None) -> ASGraph:
    P = RelationshipKind.PROVIDER_OF
    edges = {}
    for a, b in [(2, 1), (3, 1), (2, 4), (3, 4), (5, 2), (5, 3)]:
        edges[(a, b)] = P
        edges[(b, a)] = P.inverse()
    countries = countries or {}
    ip_weights = ip_weights or {}
    nodes = {
        asn: ASAttributes(
            country=countries.get(asn, "unknown"),
            ip_weight=ip_weights.get(asn, 1.0),
        )
        for asn in (1, 2, 3, 4, 5)
    }
    return ASGraph(nodes, edges)


@pytest.fixture
def g5() -> ASGraph:
    return build_g5()
