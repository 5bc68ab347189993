"""Day-level clustering: DTW distances, UPGMA, tree cuts and separation scores."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import numba
import numpy as np

from .series import NUM_STATES, DayVector


# ---------------------------------------------------------------------------
# DTW

@numba.njit(cache=True)
def _dtw(a, b):
    n, m = a.shape[0], b.shape[0]
    prev = np.full(m + 1, np.inf)
    cur = np.full(m + 1, np.inf)
    prev[0] = 0.0
    for i in range(1, n + 1):
        cur[0] = np.inf
        ai = a[i - 1]
        for j in range(1, m + 1):
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = abs(ai - b[j - 1]) + best
        prev, cur = cur, prev
    return prev[m]


def dtw_distance(a: Sequence[float], b: Sequence[float]) -> float:
    """Unconstrained DTW with local cost ``|a_i - b_j|`` and unit-weight
    steps (i-1, j), (i, j-1), (i-1, j-1); returns the total path cost."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("DTW needs two non-empty sequences")
    return float(_dtw(a, b))


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    values: np.ndarray
    labels: Tuple[str, ...] = ()

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("distance matrix must be square")
        if not np.array_equal(v, v.T):
            raise ValueError("distance matrix must be symmetric")
        if np.any(v < 0) or np.any(np.isnan(v)):
            raise ValueError("distances must be non-negative numbers")
        if np.any(np.diag(v) != 0):
            raise ValueError("distance matrix diagonal must be zero")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        labels = tuple(self.labels) or tuple(str(i) for i in range(v.shape[0]))
        if len(labels) != v.shape[0]:
            raise ValueError("one label per row is required")
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.values.shape[0]


def downsample_states(states: np.ndarray, factor: int) -> np.ndarray:
    """Majority state per consecutive bucket of ``factor`` epochs (ties to
    the lowest code; a short final bucket is dropped)."""
    states = np.asarray(states, dtype=np.int64)
    if factor < 1:
        raise ValueError("downsampling factor must be >= 1")
    if factor == 1:
        return states.astype(np.float64)
    k = states.size // factor
    buckets = states[:k * factor].reshape(k, factor)
    counts = np.stack([(buckets == s).sum(axis=1) for s in range(NUM_STATES)], axis=1)
    return counts.argmax(axis=1).astype(np.float64)


def downsample_mean(values: np.ndarray, factor: int) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    k = values.size // factor
    return values[:k * factor].reshape(k, factor).mean(axis=1)


def pairwise_distances(sequences: Sequence[np.ndarray], labels: Sequence[str] = ()) -> DistanceMatrix:
    """DTW between every pair, each pair computed once and mirrored."""
    n = len(sequences)
    if n < 2:
        raise ValueError("need at least two sequences")
    seqs = [np.ascontiguousarray(s, dtype=np.float64) for s in sequences]
    out = np.zeros((n, n))
    for i, j in combinations(range(n), 2):
        out[i, j] = out[j, i] = _dtw(seqs[i], seqs[j])
    return DistanceMatrix(out, tuple(labels))


def pairwise_dtw(days: Sequence[DayVector], downsample: int = 10) -> DistanceMatrix:
    """DTW over ordinal state codes (Wake=0 .. Sleep=3) of each day."""
    if len(days) < 2:
        raise ValueError("need at least two days")
    lengths = {d.states.size for d in days}
    if len(lengths) != 1:
        raise ValueError(f"days have inconsistent lengths {sorted(lengths)}")
    seqs = [downsample_states(d.states, downsample) for d in days]
    return pairwise_distances(seqs, [d.name for d in days])


# ---------------------------------------------------------------------------
# UPGMA

@dataclass(frozen=True)
class Leaf:
    name: str
    patient_id: str = ""
    day_index: int = -1
    has_attack: bool = False


@dataclass(frozen=True)
class Merge:
    """Merge of clusters ``left`` and ``right``. Ids below the leaf count are
    leaves; merge ``k`` creates cluster ``n_leaves + k``."""
    left: int
    right: int
    height: float
    size: int


@dataclass
class Dendrogram:
    leaves: List[Leaf]
    merges: List[Merge] = field(default_factory=list)

    @property
    def n_leaves(self) -> int:
        return len(self.leaves)

    @property
    def root(self) -> int:
        return self.n_leaves + len(self.merges) - 1 if self.merges else 0

    def height(self, node: int) -> float:
        return 0.0 if node < self.n_leaves else self.merges[node - self.n_leaves].height

    def children(self, node: int) -> Tuple[int, ...]:
        if node < self.n_leaves:
            return ()
        m = self.merges[node - self.n_leaves]
        return (m.left, m.right)

    def is_ultrametric(self) -> bool:
        return all(self.height(c) <= m.height for m in self.merges for c in (m.left, m.right))


def upgma(matrix: DistanceMatrix, leaves: Optional[Sequence[Leaf]] = None) -> Dendrogram:
    """Average-linkage agglomeration.

    The distance between clusters A and C is the mean of all leaf-pair
    distances across them, kept as a running cross-pair sum so that merging
    A and B gives ``sum(AB, C) = sum(A, C) + sum(B, C)`` (equivalent to the
    size-weighted update of the averages). Ties go to the lexicographically
    smallest pair of cluster keys, a cluster's key being its lowest leaf index.
    """
    d = matrix.values
    n = d.shape[0]
    if n < 2:
        raise ValueError("UPGMA needs at least two leaves")
    if leaves is None:
        leaves = [Leaf(name) for name in matrix.labels]
    if len(leaves) != n:
        raise ValueError("one leaf per matrix row is required")

    sums = d.copy()
    size = np.ones(n)
    key = np.arange(n)                     # lowest leaf index of the cluster in each slot
    node_id = np.arange(n)                 # dendrogram id of the cluster in each slot
    active = np.ones(n, dtype=bool)
    avg = sums.copy()
    np.fill_diagonal(avg, np.inf)
    merges: List[Merge] = []
    for step in range(n - 1):
        best = avg.min()
        cand_i, cand_j = np.nonzero(avg == best)
        ki, kj = key[cand_i], key[cand_j]
        lo, hi = np.minimum(ki, kj), np.maximum(ki, kj)
        pick = np.lexsort((hi, lo))[0]
        i, j = cand_i[pick], cand_j[pick]
        if key[j] < key[i]:
            i, j = j, i
        merges.append(Merge(int(node_id[i]), int(node_id[j]), float(best), int(size[i] + size[j])))
        sums[i, :] += sums[j, :]
        sums[:, i] = sums[i, :]
        size[i] += size[j]
        node_id[i] = n + step
        active[j] = False
        avg[i, :] = sums[i, :] / (size[i] * size)
        avg[:, i] = avg[i, :]
        avg[j, :] = np.inf
        avg[:, j] = np.inf
        avg[~active, :] = np.inf
        avg[:, ~active] = np.inf
        avg[i, i] = np.inf
    return Dendrogram(list(leaves), merges)


def cut_tree(dendrogram: Dendrogram, k: int) -> np.ndarray:
    """Cluster label per leaf after undoing the ``k - 1`` last (highest)
    merges. Labels are numbered by first appearance in leaf order."""
    n = dendrogram.n_leaves
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in 1..{n}")
    parent = list(range(2 * n - 1))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for step, m in enumerate(dendrogram.merges[:n - k]):
        new = n + step
        parent[find(m.left)] = new
        parent[find(m.right)] = new
    roots = [find(i) for i in range(n)]
    relabel: Dict[int, int] = {}
    return np.array([relabel.setdefault(r, len(relabel)) for r in roots])


# ---------------------------------------------------------------------------
# separation scores

def purity(assignment: Sequence[int], labels: Sequence) -> float:
    assignment = np.asarray(assignment)
    labels = np.asarray(labels)
    if assignment.shape != labels.shape:
        raise ValueError("one label per assigned leaf is required")
    total = 0
    for c in np.unique(assignment):
        _, counts = np.unique(labels[assignment == c], return_counts=True)
        total += counts.max()
    return total / assignment.size


def adjusted_rand_index(assignment: Sequence[int], labels: Sequence) -> float:
    """Hubert-Arabie adjusted Rand index by pair counting; 1.0 when both
    partitions are trivial in the same way."""
    a = np.unique(np.asarray(assignment), return_inverse=True)[1]
    b = np.unique(np.asarray(labels), return_inverse=True)[1]
    if a.shape != b.shape:
        raise ValueError("one label per assigned leaf is required")
    table = np.zeros((a.max() + 1, b.max() + 1), dtype=np.int64)
    np.add.at(table, (a, b), 1)
    comb2 = lambda x: x * (x - 1) / 2.0
    index = comb2(table).sum()
    rows = comb2(table.sum(axis=1)).sum()
    cols = comb2(table.sum(axis=0)).sum()
    total = comb2(a.size)
    expected = rows * cols / total if total else 0.0
    maximum = (rows + cols) / 2.0
    if maximum == expected:
        return 1.0
    return float((index - expected) / (maximum - expected))


def separation_score(assignment: Sequence[int], labels: Sequence) -> Tuple[float, float]:
    if len(assignment) != len(labels):
        raise ValueError(f"{len(assignment)} assignments but {len(labels)} labels")
    return purity(assignment, labels), adjusted_rand_index(assignment, labels)
