"""Exact small-instance ground truth: likelihood, brute-force MAP / min-bisection, swap check."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .graph_model import Graph, Labelling, Sense, all_margins

MAX_BRUTEFORCE_NODES = 24
_CHUNK = 1 << 17


class InstanceTooLarge(ValueError):
    pass


class SwapInequalityViolation(AssertionError):
    """A guaranteed minority swap lowered the likelihood."""


@dataclass(frozen=True)
class LikelihoodBreakdown:
    log_likelihood: float
    # (|A|, |B|, |E & A|, |E & B|): same-side pairs, cross pairs, and the edges among each
    counts: tuple[int, int, int, int]


def _xlogy(k, x: float):
    """``k * ln(x)`` with ``0 * ln(0) = 0``; vectorised over ``k``."""
    k = np.asarray(k, dtype=np.float64)
    if x > 0.0:
        return k * math.log(x)
    return np.where(k == 0, 0.0, -np.inf)


def _loglik(n_same, n_cross, e_same, e_cross, p: float, q: float):
    return (
        _xlogy(e_same, p)
        + _xlogy(e_cross, q)
        + _xlogy(np.asarray(n_same) - e_same, 1.0 - p)
        + _xlogy(np.asarray(n_cross) - e_cross, 1.0 - q)
    )


def log_likelihood(g: Graph, tau: Labelling, p: float, q: float) -> LikelihoodBreakdown:
    """``ln Pr(G | sigma = tau)`` assembled from the four pair/edge counts."""
    if len(tau) != g.num_nodes:
        raise ValueError("labelling length does not match graph")
    n_plus = tau.plus_count
    n_minus = len(tau) - n_plus
    n_same = n_plus * (n_plus - 1) // 2 + n_minus * (n_minus - 1) // 2
    n_cross = n_plus * n_minus
    u, v = g.edges()
    e_same = int(np.count_nonzero(tau.signs[u] == tau.signs[v]))
    e_cross = int(u.size) - e_same
    ll = float(_loglik(n_same, n_cross, e_same, e_cross, p, q))
    return LikelihoodBreakdown(ll, (n_same, n_cross, e_same, e_cross))


@dataclass(frozen=True)
class BruteForceResult:
    """Optimal value and every optimal balanced labelling (node 0 always on the + side).

    ``plus_sets`` has one row per optimum listing its ``+`` nodes in ascending order.
    """

    value: float
    plus_sets: np.ndarray
    num_nodes: int

    def labellings(self) -> list[Labelling]:
        return [Labelling.from_plus_set(self.num_nodes, row) for row in self.plus_sets]

    def as_set(self) -> frozenset[tuple[int, ...]]:
        return frozenset(tuple(row) for row in self.plus_sets.tolist())


def _enumerate_same_edge_counts(g: Graph):
    """Yield ``(plus_sets, same_side_edge_counts)`` chunks over sign-canonical balanced labellings."""
    size = g.num_nodes
    if size % 2:
        raise ValueError("balanced labellings need an even number of nodes")
    if size > MAX_BRUTEFORCE_NODES:
        raise InstanceTooLarge(f"{size} nodes exceeds the enumeration cap of {MAX_BRUTEFORCE_NODES}")
    half = size // 2
    u, v = g.edges()
    combos = itertools.combinations(range(1, size), half - 1)
    while True:
        chunk = list(itertools.islice(combos, _CHUNK))
        if not chunk:
            break
        rest = np.array(chunk, dtype=np.int64).reshape(len(chunk), half - 1)
        plus_sets = np.hstack([np.zeros((len(chunk), 1), dtype=np.int64), rest])
        member = np.zeros((len(chunk), size), dtype=bool)
        np.put_along_axis(member, plus_sets, True, axis=1)
        same = np.zeros(len(chunk), dtype=np.int64)
        for a, b in zip(u.tolist(), v.tolist()):
            same += member[:, a] == member[:, b]
        yield plus_sets, same


def _collect(g: Graph, score_fn, maximize: bool) -> BruteForceResult:
    best = -math.inf if maximize else math.inf
    winners: list[np.ndarray] = []
    for plus_sets, same in _enumerate_same_edge_counts(g):
        scores = score_fn(same)
        top = scores.max() if maximize else scores.min()
        better = top > best if maximize else top < best
        if better:
            best, winners = top, []
        if top == best:
            winners.append(plus_sets[scores == best])
    half = g.num_nodes // 2
    rows = np.vstack(winners) if winners else np.empty((0, half), dtype=np.int64)
    return BruteForceResult(float(best), rows, g.num_nodes)


def map_bruteforce(g: Graph, p: float, q: float) -> BruteForceResult:
    """All balanced maximisers of the likelihood, up to global sign, by exhaustive search."""
    half = g.num_nodes // 2
    n_same, n_cross = half * (half - 1), half * half
    num_edges = g.num_edges

    def score(same):
        return _loglik(n_same, n_cross, same, num_edges - same, p, q)

    return _collect(g, score, maximize=True)


def min_bisection_bruteforce(g: Graph) -> BruteForceResult:
    """Minimum number of cut edges over balanced bipartitions, with all minimisers."""
    num_edges = g.num_edges
    return _collect(g, lambda same: num_edges - same, maximize=False)


# ---------------------------------------------------------------------------
# minority swap


@dataclass
class SwapReport:
    pair_exists: bool
    witness: Optional[tuple[int, int]] = None
    ll_before: float = math.nan
    ll_after: float = math.nan
    holds: Optional[bool] = None
    plus_minorities: int = 0
    minus_minorities: int = 0
    pairs_checked: int = 0
    guaranteed_pairs: int = 0
    # adjacent opposite-label minorities whose margins sum to -1 or 0 (assortative only):
    # the swap keeps one fewer or two fewer same-side edges, so the likelihood can drop
    adjacent_tie_pairs: int = 0
    adjacent_tie_failures: int = 0


def swap(tau: Labelling, u: int, v: int) -> Labelling:
    s = tau.signs.copy()
    s[u], s[v] = s[v], s[u]
    return Labelling(s, tau.balanced)


def _guaranteed(sense: Sense, adjacent: bool, margin_sum: int) -> bool:
    if not adjacent or sense is Sense.DISASSORTATIVE:
        return True
    return margin_sum <= -2


def minority_swap_check(
    g: Graph,
    tau: Labelling,
    p: float,
    q: float,
    sense: Sense,
    exhaustive: bool = False,
) -> SwapReport:
    """Find a ``+`` minority ``u`` and ``-`` minority ``v``; check that swapping them does not lower the likelihood.

    The inequality is certain when ``u`` and ``v`` are not adjacent. It also
    holds for adjacent pairs when disassortative, or when the two margins sum
    to at most -2. An adjacent pair whose margins sum to -1 or 0 in the
    assortative case loses same-side edges under the swap. Such pairs are
    counted but not asserted. A failure on any other pair raises
    :class:`SwapInequalityViolation`.

    With ``exhaustive`` every opposite-label minority pair is checked;
    otherwise only one witness, preferring a certain pair.
    """
    if p == q:
        raise ValueError("the swap check needs p != q")
    margins = all_margins(g, tau, sense)
    minority = margins <= 0
    plus = np.flatnonzero(minority & (tau.signs == 1))
    minus = np.flatnonzero(minority & (tau.signs == -1))
    rep = SwapReport(pair_exists=bool(plus.size and minus.size),
                     plus_minorities=int(plus.size), minus_minorities=int(minus.size))
    if not rep.pair_exists:
        return rep

    before = log_likelihood(g, tau, p, q).log_likelihood
    rep.ll_before = before

    def adjacent(u, v):
        nb = g.neighbors(u)
        i = np.searchsorted(nb, v)
        return bool(i < nb.size and nb[i] == v)

    def check(u, v):
        sure = _guaranteed(sense, adjacent(u, v), int(margins[u] + margins[v]))
        after = log_likelihood(g, swap(tau, u, v), p, q).log_likelihood
        ok = after >= before
        rep.pairs_checked += 1
        if sure:
            rep.guaranteed_pairs += 1
            if not ok:
                raise SwapInequalityViolation(
                    f"swapping minorities {u} (+) and {v} (-) lowered the log-likelihood "
                    f"from {before!r} to {after!r}"
                )
        else:
            rep.adjacent_tie_pairs += 1
            rep.adjacent_tie_failures += int(not ok)
        return sure, after, ok

    if exhaustive:
        pairs = ((int(u), int(v)) for u in plus for v in minus)
    else:
        pairs = iter(
            sorted(
                ((int(u), int(v)) for u in plus for v in minus),
                key=lambda uv: not _guaranteed(
                    sense, adjacent(*uv), int(margins[uv[0]] + margins[uv[1]])
                ),
            )[:1]
        )
    witness_sure = False
    for u, v in pairs:
        sure, after, ok = check(u, v)
        if rep.witness is None or (sure and not witness_sure):
            rep.witness, rep.ll_after, rep.holds = (u, v), after, ok
            witness_sure = sure
    return rep
