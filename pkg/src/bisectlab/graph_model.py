"""Planted bisection instances, compact graphs, labellings and majority censuses."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np
import scipy.sparse as sp

PathLike = Union[str, Path]


class Sense(enum.Enum):
    """Whether within-class edges are more likely (p > q) or less likely."""

    ASSORTATIVE = "assortative"
    DISASSORTATIVE = "disassortative"

    @property
    def sign(self) -> int:
        return 1 if self is Sense.ASSORTATIVE else -1

    @classmethod
    def from_params(cls, p: float, q: float) -> "Sense":
        return cls.DISASSORTATIVE if p < q else cls.ASSORTATIVE


@dataclass(frozen=True)
class ModelParams:
    n: int
    p: float
    q: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        for name in ("p", "q"):
            val = getattr(self, name)
            if not (0.0 <= val <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {val!r}")

    @classmethod
    def from_ab(cls, n: int, a: float, b: float) -> "ModelParams":
        """Logarithmic parametrisation p = a ln n / n, q = b ln n / n."""
        scale = math.log(n) / n
        return cls(n, a * scale, b * scale)

    @property
    def sense(self) -> Sense:
        return Sense.from_params(self.p, self.q)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph stored as sorted neighbour lists (CSR layout).

    ``offsets`` has ``num_nodes + 1`` entries; the neighbours of ``v`` are
    ``indices[offsets[v]:offsets[v + 1]]`` in ascending order.
    """

    num_nodes: int
    offsets: np.ndarray
    indices: np.ndarray

    @classmethod
    def from_edges(cls, num_nodes: int, u: Iterable[int], v: Iterable[int]) -> "Graph":
        """Build from an undirected edge list; duplicates are merged, self-loops rejected."""
        u = np.asarray(u, dtype=np.int64).ravel()
        v = np.asarray(v, dtype=np.int64).ravel()
        if u.shape != v.shape:
            raise ValueError("edge endpoint arrays differ in length")
        if u.size and (min(u.min(), v.min()) < 0 or max(u.max(), v.max()) >= num_nodes):
            raise ValueError("edge endpoint out of range")
        if np.any(u == v):
            raise ValueError("self-loops are not allowed")
        src = np.concatenate([u, v])
        dst = np.concatenate([v, u])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        if src.size:
            keep = np.ones(src.size, dtype=bool)
            keep[1:] = (src[1:] != src[:-1]) | (dst[1:] != dst[:-1])
            src, dst = src[keep], dst[keep]
        counts = np.bincount(src, minlength=num_nodes)
        offsets = np.zeros(num_nodes + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        return cls(int(num_nodes), _freeze(offsets), _freeze(dst.astype(np.int64)))

    @classmethod
    def empty(cls, num_nodes: int) -> "Graph":
        return cls.from_edges(num_nodes, [], [])

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.num_nodes == other.num_nodes
            and np.array_equal(self.offsets, other.offsets)
            and np.array_equal(self.indices, other.indices)
        )

    __hash__ = None

    def __repr__(self):
        return f"Graph(num_nodes={self.num_nodes}, num_edges={self.num_edges})"

    @property
    def num_edges(self) -> int:
        return int(self.indices.size // 2)

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.offsets[v] : self.offsets[v + 1]]

    @cached_property
    def degrees(self) -> np.ndarray:
        return _freeze(np.diff(self.offsets))

    @cached_property
    def sources(self) -> np.ndarray:
        """Row index of each entry of ``indices``."""
        return _freeze(np.repeat(np.arange(self.num_nodes, dtype=np.int64), self.degrees))

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Each undirected edge once as ``(u, v)`` with ``u < v``, lexicographic order."""
        mask = self.sources < self.indices
        return self.sources[mask], self.indices[mask]

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Read-only sparse adjacency operator (one O(|E|) product per call)."""
        data = np.ones(self.indices.size, dtype=np.float64)
        return sp.csr_matrix(
            (data, self.indices, self.offsets), shape=(self.num_nodes, self.num_nodes)
        )

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.adjacency @ x

    def check_invariants(self) -> None:
        """Raise ``AssertionError`` if symmetry, sortedness or loop-freeness fails."""
        off, idx = self.offsets, self.indices
        assert off.size == self.num_nodes + 1 and off[0] == 0 and off[-1] == idx.size
        assert np.all(np.diff(off) >= 0)
        src = self.sources
        assert not np.any(src == idx), "self-loop"
        same_row = src[1:] == src[:-1]
        assert np.all(idx[1:][same_row] > idx[:-1][same_row]), "unsorted or duplicate"
        fwd = set(zip(src.tolist(), idx.tolist()))
        assert all((b, a) in fwd for a, b in fwd), "asymmetric"


@dataclass(frozen=True, eq=False)
class Labelling:
    """A +1/-1 vector over the nodes; ``balanced`` asserts a zero sum."""

    signs: np.ndarray
    balanced: bool = False

    def __post_init__(self):
        s = np.array(self.signs, dtype=np.int8).ravel()
        if not np.all(np.abs(s) == 1):
            raise ValueError("labels must be +1 or -1")
        if self.balanced and int(s.sum(dtype=np.int64)) != 0:
            raise ValueError("labelling flagged balanced but does not sum to zero")
        object.__setattr__(self, "signs", _freeze(s))

    @classmethod
    def auto(cls, signs) -> "Labelling":
        """Wrap ``signs`` and set ``balanced`` from the data."""
        s = np.asarray(signs, dtype=np.int8)
        return cls(s, balanced=int(s.sum(dtype=np.int64)) == 0)

    @classmethod
    def from_plus_set(cls, num_nodes: int, plus) -> "Labelling":
        s = -np.ones(num_nodes, dtype=np.int8)
        s[np.asarray(list(plus) if not isinstance(plus, np.ndarray) else plus, dtype=np.int64)] = 1
        return cls.auto(s)

    def __len__(self):
        return int(self.signs.size)

    def __neg__(self) -> "Labelling":
        return Labelling(-self.signs, self.balanced)

    def __eq__(self, other):
        if not isinstance(other, Labelling):
            return NotImplemented
        return np.array_equal(self.signs, other.signs)

    __hash__ = None

    def __repr__(self):
        return f"Labelling(len={len(self)}, plus={self.plus_count}, balanced={self.balanced})"

    @property
    def plus_count(self) -> int:
        return int(np.count_nonzero(self.signs == 1))

    def plus_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.signs == 1)

    def minus_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.signs == -1)


@dataclass(frozen=True)
class PlantedInstance:
    graph: Graph
    hidden: Labelling
    params: ModelParams
    seed: int

    def __post_init__(self):
        if not self.hidden.balanced:
            raise ValueError("hidden labelling must be balanced")
        if self.graph.num_nodes != 2 * self.params.n:
            raise ValueError("graph size does not match 2n")
        if len(self.hidden) != self.graph.num_nodes:
            raise ValueError("hidden labelling length does not match the graph")


@dataclass(frozen=True)
class MajorityCensus:
    margins: np.ndarray
    minority_count: int
    epsilon: float
    v_epsilon: np.ndarray
    # Probability used for the V_eps scale and where it came from ("model" or "estimated").
    p_used: float = float("nan")
    p_source: str = "model"

    @property
    def minorities(self) -> np.ndarray:
        return np.flatnonzero(self.margins <= 0)


# ---------------------------------------------------------------------------
# generation


def _skip_sample(rng: np.random.Generator, total: int, prob: float) -> np.ndarray:
    """Indices in ``range(total)`` kept independently with probability ``prob``.

    Walks the index stream with geometric gaps so the cost is O(#kept).
    """
    if total <= 0 or prob <= 0.0:
        return np.empty(0, dtype=np.int64)
    if prob >= 1.0:
        return np.arange(total, dtype=np.int64)
    chunks = []
    pos = -1
    expected = total * prob
    batch = int(expected + 6.0 * math.sqrt(expected) + 16)
    log_miss = math.log1p(-prob)
    while True:
        # inverse-transform geometric gaps, clipped before the cast so tiny
        # probabilities cannot overflow the running sum
        u = 1.0 - rng.random(batch)
        with np.errstate(over="ignore"):
            gaps = np.minimum(np.floor(np.log(u) / log_miss) + 1.0, total + 1.0).astype(np.int64)
        idx = pos + np.cumsum(gaps, dtype=np.int64)
        if idx[-1] >= total:
            chunks.append(idx[idx < total])
            break
        chunks.append(idx)
        pos = int(idx[-1])
        batch = max(16, int((total - pos) * prob * 1.2) + 16)
    return np.concatenate(chunks)


def _triangular_pairs(k: np.ndarray, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Map lexicographic pair indices over ``{(i, j): i < j < size}`` to ``(i, j)``."""
    rows = np.arange(size, dtype=np.int64)
    starts = rows * (2 * size - rows - 1) // 2
    i = np.searchsorted(starts, k, side="right") - 1
    j = k - starts[i] + i + 1
    return i, j


def generate(params: ModelParams, seed: int) -> PlantedInstance:
    """Sample ``(G, sigma)`` from the planted bisection model with ``2n`` nodes.

    The hidden labelling is a seeded shuffle of ``n`` pluses and ``n`` minuses.
    Within-class pairs of each class and the cross pairs are three independent
    pair streams, each skip-sampled so the cost is linear in the edge count.
    """
    n = params.n
    rng = np.random.Generator(np.random.PCG64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF)))
    signs = np.concatenate([np.ones(n, dtype=np.int8), -np.ones(n, dtype=np.int8)])
    signs = signs[rng.permutation(2 * n)]
    plus = np.flatnonzero(signs == 1)
    minus = np.flatnonzero(signs == -1)

    us, vs = [], []
    within = n * (n - 1) // 2
    for cls_nodes in (plus, minus):
        k = _skip_sample(rng, within, params.p)
        i, j = _triangular_pairs(k, n)
        us.append(cls_nodes[i])
        vs.append(cls_nodes[j])
    k = _skip_sample(rng, n * n, params.q)
    us.append(plus[k // n])
    vs.append(minus[k % n])

    graph = Graph.from_edges(2 * n, np.concatenate(us), np.concatenate(vs))
    return PlantedInstance(graph, Labelling(signs, balanced=True), params, int(seed))


# ---------------------------------------------------------------------------
# metrics


def overlap_error(a: Labelling, b: Labelling) -> float:
    """Sign-invariant mislabelling fraction ``1 - |<a, b>| / len``."""
    if len(a) != len(b):
        raise ValueError(f"labelling lengths differ: {len(a)} vs {len(b)}")
    if len(a) == 0:
        return 0.0
    inner = int(np.dot(a.signs.astype(np.int64), b.signs.astype(np.int64)))
    return 1.0 - abs(inner) / len(a)


def hamming_up_to_sign(a: Labelling, b: Labelling) -> int:
    """Number of disagreements, minimised over the global sign of ``b``."""
    if len(a) != len(b):
        raise ValueError(f"labelling lengths differ: {len(a)} vs {len(b)}")
    diff = int(np.count_nonzero(a.signs != b.signs))
    return min(diff, len(a) - diff)


def all_margins(g: Graph, lab: Labelling, sense: Sense) -> np.ndarray:
    """Vector of :func:`majority_margin` over every node."""
    if len(lab) != g.num_nodes:
        raise ValueError("labelling length does not match graph")
    s = lab.signs.astype(np.int64)
    neigh_sum = np.bincount(g.sources, weights=s[g.indices], minlength=g.num_nodes)
    neigh_sum = np.rint(neigh_sum).astype(np.int64)
    return sense.sign * s * neigh_sum


def majority_margin(g: Graph, lab: Labelling, v: int, sense: Sense) -> int:
    """Same-side minus other-side neighbour count of ``v``; negated when disassortative.

    ``v`` has a majority of size ``k`` iff the margin is at least ``k``.
    """
    nb = g.neighbors(v)
    same = int(np.count_nonzero(lab.signs[nb] == lab.signs[v]))
    return sense.sign * (2 * same - nb.size)


def estimate_dominant_p(g: Graph, lab: Labelling, sense: Sense) -> float:
    """Empirical edge density on the side of the dominant probability.

    Same-side density when assortative, cross-side density otherwise.
    """
    u, v = g.edges()
    same_edges = int(np.count_nonzero(lab.signs[u] == lab.signs[v]))
    n_plus = lab.plus_count
    n_minus = len(lab) - n_plus
    same_pairs = n_plus * (n_plus - 1) // 2 + n_minus * (n_minus - 1) // 2
    cross_pairs = n_plus * n_minus
    if sense is Sense.ASSORTATIVE:
        return same_edges / same_pairs if same_pairs else 0.0
    return (u.size - same_edges) / cross_pairs if cross_pairs else 0.0


def census(
    g: Graph,
    lab: Labelling,
    sense: Sense,
    epsilon: float,
    params: Optional[ModelParams] = None,
) -> MajorityCensus:
    """Margins, minority count and the ``V_eps`` set of weak or high-degree nodes.

    ``V_eps`` holds nodes with margin below ``eps * sqrt(n p ln n)`` or degree
    above ``100 n p``. ``p`` is the dominant model probability when ``params``
    is given, otherwise it is estimated from ``lab``.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    margins = all_margins(g, lab, sense)
    n = g.num_nodes // 2
    if params is not None:
        p_used, source = max(params.p, params.q), "model"
    else:
        p_used, source = estimate_dominant_p(g, lab, sense), "estimated"
    log_n = math.log(n) if n > 1 else 0.0
    weak = margins < epsilon * math.sqrt(n * p_used * log_n)
    heavy = g.degrees > 100.0 * n * p_used
    return MajorityCensus(
        margins=_freeze(margins),
        minority_count=int(np.count_nonzero(margins <= 0)),
        epsilon=float(epsilon),
        v_epsilon=_freeze(np.flatnonzero(weak | heavy)),
        p_used=float(p_used),
        p_source=source,
    )


# ---------------------------------------------------------------------------
# graph transforms


def induced_subgraph(g: Graph, keep) -> tuple[Graph, np.ndarray]:
    """Subgraph on ``keep`` relabelled ``0..k-1`` in ascending original order.

    Returns the subgraph and ``mapping`` with ``mapping[new] = old``.
    """
    mask = np.zeros(g.num_nodes, dtype=bool)
    keep_arr = np.asarray(keep if not isinstance(keep, (set, frozenset)) else sorted(keep), dtype=np.int64)
    mask[keep_arr] = True
    mapping = np.flatnonzero(mask)
    new_id = np.full(g.num_nodes, -1, dtype=np.int64)
    new_id[mapping] = np.arange(mapping.size)
    # relabelling is monotone, so filtered rows stay sorted and no re-sort is needed
    sel = mask[g.sources] & mask[g.indices]
    counts = np.bincount(new_id[g.sources[sel]], minlength=mapping.size)
    offsets = np.zeros(mapping.size + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    sub = Graph(int(mapping.size), _freeze(offsets), _freeze(new_id[g.indices[sel]]))
    return sub, _freeze(mapping)


def complement(g: Graph) -> Graph:
    """Graph on the same nodes joining exactly the non-adjacent distinct pairs. O(n^2)."""
    n = g.num_nodes
    dense = np.ones((n, n), dtype=bool)
    np.fill_diagonal(dense, False)
    dense[g.sources, g.indices] = False
    u, v = np.nonzero(np.triu(dense, k=1))
    return Graph.from_edges(n, u, v)


# ---------------------------------------------------------------------------
# file formats


def write_graph(g: Graph, path: PathLike) -> None:
    u, v = g.edges()
    with open(path, "w", newline="\n") as fh:
        fh.write(f"{g.num_nodes} {u.size}\n")
        fh.writelines(f"{a} {b}\n" for a, b in zip(u.tolist(), v.tolist()))


def read_graph(path: PathLike) -> Graph:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: expected header 'num_nodes m'")
        num_nodes, m = int(header[0]), int(header[1])
        data = np.loadtxt(fh, dtype=np.int64, ndmin=2) if m else np.empty((0, 2), np.int64)
    if data.shape != (m, 2):
        raise ValueError(f"{path}: header announces {m} edges, found {data.shape[0]}")
    if m and np.any(data[:, 0] >= data[:, 1]):
        raise ValueError(f"{path}: edges must be written with u < v")
    return Graph.from_edges(num_nodes, data[:, 0], data[:, 1])


def write_labels(lab: Labelling, path: PathLike) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.writelines("+1\n" if s == 1 else "-1\n" for s in lab.signs.tolist())


def read_labels(path: PathLike) -> Labelling:
    signs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            tok = line.strip()
            if tok == "+1":
                signs.append(1)
            elif tok == "-1":
                signs.append(-1)
            else:
                raise ValueError(f"{path}:{lineno}: expected '+1' or '-1', got {tok!r}")
    return Labelling.auto(np.array(signs, dtype=np.int8))
