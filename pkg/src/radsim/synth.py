"""Deterministic synthetic Internet-like topologies for scale exercises."""

from __future__ import annotations

import random

from .topology import ASAttributes, ASGraph, RelationshipKind

_COUNTRIES = [f"c{i:02d}" for i in range(30)]


def synth_topology(n: int, seed: int = 0, clique: int = 12) -> ASGraph:
    """A provider hierarchy with preferential attachment and stray peering.

    Produces roughly Internet-shaped degree distributions: a fully meshed
    top clique, every later AS multihomed to 1-2 transit parents chosen
    preferentially by degree, and ~15% extra peer links.
    """
    rng = random.Random(seed)
    clique = min(clique, n)
    edges: dict[tuple[int, int], RelationshipKind] = {}
    degree = [0] * (n + 1)

    def add(a: int, b: int, kind: RelationshipKind) -> None:
        edges[(a, b)] = kind
        edges[(b, a)] = kind.inverse()
        degree[a] += 1
        degree[b] += 1

    for i in range(1, clique + 1):
        for j in range(i + 1, clique + 1):
            add(i, j, RelationshipKind.PEER_PEER)
    # Weighted parent pool keeps selection O(1) per attachment.
    pool = list(range(1, clique + 1)) * 3
    for node in range(clique + 1, n + 1):
        parents = set()
        for _ in range(rng.choice((1, 1, 2))):
            parents.add(pool[rng.randrange(len(pool))])
        for p in parents:
            add(p, node, RelationshipKind.PROVIDER_OF)
            pool.append(p)
        pool.append(node)
    extra = int(0.15 * n)
    for _ in range(extra):
        a = rng.randint(1, n)
        b = pool[rng.randrange(len(pool))]
        if a != b and (a, b) not in edges:
            add(a, b, RelationshipKind.PEER_PEER)
    nodes = {}
    for asn in range(1, n + 1):
        nodes[asn] = ASAttributes(
            country=_COUNTRIES[rng.randrange(len(_COUNTRIES))],
            ip_weight=round(rng.paretovariate(1.2), 3),
        )
    return ASGraph(nodes, edges)
