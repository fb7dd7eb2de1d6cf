"""Partitioning of check nodes into scheduling clusters.

A clustering splits the m check nodes into ceil(m/z) disjoint clusters of
at most z nodes each. Each cluster's neighborhood (the distinct variable
nodes adjacent to any of its check nodes, ascending) defines the bit
vector whose hard decisions index the cluster's state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .codes import TannerGraph


@dataclass(frozen=True, eq=False)
class Clustering:
    graph: TannerGraph
    z: int
    method: str
    clusters: tuple
    cluster_vns: tuple
    neighbor_counts: np.ndarray

    @classmethod
    def from_clusters(cls, graph: TannerGraph, z: int, clusters, method: str = "custom"
                      ) -> "Clustering":
        m = graph.m
        if not 1 <= z <= m:
            raise ValueError(f"cluster size z={z} outside [1, {m}]")
        clusters = tuple(tuple(sorted(int(c) for c in cl)) for cl in clusters)
        expected = math.ceil(m / z)
        if len(clusters) != expected:
            raise ValueError(
                f"expected {expected} clusters for m={m}, z={z}, got {len(clusters)}"
            )
        flat = [c for cl in clusters for c in cl]
        if sorted(flat) != list(range(m)):
            raise ValueError("clusters must partition the check-node set")
        if any(len(cl) == 0 or len(cl) > z for cl in clusters):
            raise ValueError(f"cluster sizes must lie in [1, z={z}]")
        cluster_vns = []
        counts = []
        for cl in clusters:
            vns = np.unique(np.concatenate([graph.cn_neighbors[c] for c in cl]))
            cluster_vns.append(vns)
            counts.append(len(vns))
        return cls(
            graph=graph,
            z=z,
            method=method,
            clusters=clusters,
            cluster_vns=tuple(cluster_vns),
            neighbor_counts=np.array(counts, dtype=np.int64),
        )

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    def state_space_size(self) -> int:
        """Sum over clusters of 2**l_a (exact, arbitrary precision)."""
        return sum(1 << int(l) for l in self.neighbor_counts)

    @cached_property
    def cluster_cn_degree_sum(self) -> np.ndarray:
        """Per cluster, the number of CN-to-VN messages one flood emits."""
        return np.array(
            [sum(self.graph.cn_degree(c) for c in cl) for cl in self.clusters],
            dtype=np.int64,
        )

    def __repr__(self) -> str:
        return (
            f"Clustering(z={self.z}, method={self.method!r}, "
            f"{self.n_clusters} clusters)"
        )


def count_four_cycles(graph: TannerGraph, cns) -> int:
    """Number of length-4 cycles in the subgraph induced by the given CNs.

    Two checks sharing s variable nodes contribute C(s, 2) four-cycles.
    """
    cns = sorted(set(int(c) for c in cns))
    total = 0
    for i, c1 in enumerate(cns):
        set1 = set(graph.cn_neighbors[c1].tolist())
        for c2 in cns[i + 1:]:
            s = len(set1.intersection(graph.cn_neighbors[c2].tolist()))
            total += s * (s - 1) // 2
    return total


def _pairwise_four_cycles(graph: TannerGraph) -> np.ndarray:
    """Matrix P with P[c1, c2] = C(|N(c1) ∩ N(c2)|, 2)."""
    m = graph.m
    shared = np.zeros((m, m), dtype=np.int64)
    for v in range(graph.n):
        nb = graph.vn_neighbors[v]
        for i in range(len(nb)):
            for j in range(i + 1, len(nb)):
                shared[nb[i], nb[j]] += 1
                shared[nb[j], nb[i]] += 1
    return shared * (shared - 1) // 2


def _cycle_max_clusters(graph: TannerGraph, z: int) -> list:
    """Greedy agglomeration maximizing intra-cluster four-cycles.

    Starts from singletons and repeatedly merges the feasible pair
    (union size <= z) adding the most four-cycles, ties to the lowest
    cluster indices, until ceil(m/z) clusters remain. If no feasible pair
    exists before the target is reached, the smallest cluster is dissolved
    and its checks reassigned greedily, again by four-cycle gain.
    """
    m = graph.m
    target = math.ceil(m / z)
    pair4 = _pairwise_four_cycles(graph)
    clusters: list[list[int]] = [[c] for c in range(m)]

    def gain(a: list[int], b: list[int]) -> int:
        return int(pair4[np.ix_(a, b)].sum())

    while len(clusters) > target:
        best = None
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                if len(clusters[i]) + len(clusters[j]) > z:
                    continue
                g = gain(clusters[i], clusters[j])
                if best is None or g > best[0]:
                    best = (g, i, j)
        if best is None:
            # Stuck above target: dissolve the smallest cluster and
            # reassign its checks into remaining spare capacity.
            victim = min(range(len(clusters)), key=lambda i: (len(clusters[i]), i))
            orphans = clusters.pop(victim)
            for c in orphans:
                cand = [i for i in range(len(clusters)) if len(clusters[i]) < z]
                host = max(cand, key=lambda i: (gain([c], clusters[i]), -i))
                clusters[host].append(c)
        else:
            _, i, j = best
            clusters[i] = clusters[i] + clusters[j]
            clusters.pop(j)
    return clusters


def make_clusters(
    graph: TannerGraph,
    z: int,
    method: str = "sequential",
    rng_seed: int | None = None,
) -> Clustering:
    """Build a Clustering with the requested grouping method.

    ``sequential`` groups consecutive check indices {az, ..., az+z-1};
    ``cycle_max`` applies the greedy four-cycle agglomeration. Both are
    deterministic; ``rng_seed`` is accepted for interface stability and
    currently unused. For z == 1 all methods coincide.
    """
    m = graph.m
    if not 1 <= z <= m:
        raise ValueError(f"cluster size z={z} outside [1, {m}]")
    if method not in ("sequential", "cycle_max"):
        raise ValueError(f"unknown clustering method {method!r}")
    if method == "sequential" or z == 1:
        clusters = [tuple(range(a * z, min((a + 1) * z, m)))
                    for a in range(math.ceil(m / z))]
    else:
        clusters = _cycle_max_clusters(graph, z)
    return Clustering.from_clusters(graph, z, clusters, method=method)
