"""Quality-guided agglomerative clustering of workload queries.

Starts from singletons and repeatedly applies the pair merge that lowers the
partition quality the most. Merging ``Ca`` and ``Cb`` moves their cross pairs
from the similarity term to the within-dissimilarity term, so the change in
quality is ``dissim_c(Ca, Cb) - sim_c(Ca, Cb)``. The loop stops at a local
minimum: no single merge lowers quality. Ties go to the lowest
``(a, b)`` cluster-index pair, clusters being ordered by smallest member.
"""

from __future__ import annotations

from .matrix import Partition, QueryAttributeMatrix, dissim_q, sim_q


def cluster(m: QueryAttributeMatrix) -> Partition:
    n = len(m)
    if n == 0:
        raise ValueError("nothing to cluster")
    # pairwise merge gain: dissim - sim (negative lowers quality)
    delta = [[dissim_q(m.bits[i], m.bits[j]) - sim_q(m.bits[i], m.bits[j]) for j in range(n)] for i in range(n)]
    clusters: list[list[int]] = [[i] for i in range(n)]
    while len(clusters) > 1:
        best: tuple[int, int] | None = None
        best_gain = 0
        for a in range(len(clusters)):
            for b in range(a + 1, len(clusters)):
                gain = sum(delta[k][l] for k in clusters[a] for l in clusters[b])
                if gain < best_gain:
                    best_gain, best = gain, (a, b)
        if best is None:
            break
        a, b = best
        clusters[a] = sorted(clusters[a] + clusters[b])
        del clusters[b]
        clusters.sort(key=lambda c: c[0])
    return Partition.of(clusters)
