"""Replica accuracy boost, single-pass majority relabel, and the full recovery pipeline."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .graph_model import Graph, Labelling, Sense, hamming_up_to_sign, induced_subgraph
from .spectral import bb_partition, round_balanced, sense_from_pair, top_two_eigenpairs

Partitioner = Callable[[Graph, int], Labelling]

DEFAULT_M = 10


class StageError(RuntimeError):
    """A pipeline stage failed; ``trace`` holds whatever was computed before it."""

    def __init__(self, msg: str, trace: Optional["RecoveryTrace"] = None):
        super().__init__(msg)
        self.trace = trace


def guaranteed_m(epsilon: float) -> int:
    """Smallest ``m`` with ``(1 - 2/m) eps - 80 / sqrt(m) >= eps / 2``.

    The left side increases with ``m``, so an exponential then binary search works.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")

    def ok(m: int) -> bool:
        return (1.0 - 2.0 / m) * epsilon - 80.0 / math.sqrt(m) >= epsilon / 2.0

    hi = 2
    while not ok(hi):
        hi *= 2
    lo = hi // 2
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class ReplicaConfig:
    m: int = DEFAULT_M
    epsilon: float = 0.5
    seed: int = 0
    use_guaranteed_m: bool = False

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.use_guaranteed_m:
            object.__setattr__(self, "m", guaranteed_m(self.epsilon))
        elif self.m < 2:
            raise ValueError("m must be at least 2")


@dataclass
class RecoveryTrace:
    spectral_labelling: Optional[Labelling] = None
    replica_labelling: Optional[Labelling] = None
    final_labelling: Optional[Labelling] = None
    sense: Optional[Sense] = None
    sense_low_confidence: bool = False
    spectral_converged: bool = True
    stage_errors: Optional[tuple[int, int, int]] = None
    timings: dict = field(default_factory=dict)
    m: int = DEFAULT_M
    epsilon: float = 0.5
    seed: int = 0

    def to_dict(self, include_labels: bool = False) -> dict:
        out = {
            "sense": self.sense.value if self.sense else None,
            "sense_low_confidence": self.sense_low_confidence,
            "spectral_converged": self.spectral_converged,
            "stage_errors": list(self.stage_errors) if self.stage_errors else None,
            "timings": dict(self.timings),
            "m": self.m,
            "epsilon": self.epsilon,
            "seed": self.seed,
        }
        if include_labels and self.final_labelling is not None:
            out["final_labelling"] = self.final_labelling.signs.tolist()
        return out


def random_equipartition(num_nodes: int, m: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Random split of the nodes into ``m`` blocks whose sizes differ by at most one."""
    return [np.sort(b) for b in np.array_split(rng.permutation(num_nodes), m)]


def replica_boost(
    g: Graph,
    sense: Sense,
    cfg: ReplicaConfig,
    bb: Partitioner = bb_partition,
    reference: Optional[Labelling] = None,
) -> Labelling:
    """Hold out each random block, partition the rest, and vote the block in by cross edges.

    ``reference`` is ``bb(G)`` and is computed when not supplied. A block's
    partition is flipped when it differs from the reference (outside the block)
    on at least ``n/2`` nodes. A held-out node goes to ``+`` when it has more
    neighbours in the block partition's ``+`` side (fewer when disassortative);
    ties go to ``-``.
    """
    num_nodes = g.num_nodes
    if num_nodes % 2:
        raise ValueError("replica_boost needs an even number of nodes")
    half = num_nodes // 2
    root = np.random.SeedSequence(cfg.seed & 0xFFFFFFFFFFFFFFFF)
    part_seq, *block_seqs = root.spawn(cfg.m + 1)
    blocks = random_equipartition(num_nodes, cfg.m, np.random.Generator(np.random.PCG64(part_seq)))
    if reference is None:
        reference = bb(g, cfg.seed)
    ref_plus = reference.signs == 1

    out = -np.ones(num_nodes, dtype=np.int8)
    in_block = np.zeros(num_nodes, dtype=bool)
    for i, (block, bseq) in enumerate(zip(blocks, block_seqs)):
        if block.size == 0:
            continue
        in_block[:] = False
        in_block[block] = True
        sub, mapping = induced_subgraph(g, np.flatnonzero(~in_block))
        try:
            sub_lab = bb(sub, int(bseq.generate_state(1, np.uint64)[0]))
        except Exception as exc:
            raise StageError(f"partitioner failed on held-out block {i}: {exc}") from exc
        vote = np.zeros(num_nodes, dtype=np.float64)
        vote[mapping] = sub_lab.signs
        sub_plus = np.zeros(num_nodes, dtype=bool)
        sub_plus[mapping] = sub_lab.signs == 1
        outside = ~in_block
        if np.count_nonzero(sub_plus[outside] != ref_plus[outside]) >= half / 2.0:
            vote = -vote
        # (#nbrs in U_i+) - (#nbrs in U_i-) for every node
        tally = g.matvec(vote)[block]
        if sense is Sense.ASSORTATIVE:
            plus = tally > 0
        else:
            plus = tally < 0
        out[block[plus]] = 1
    return Labelling.auto(out)


def majority_relabel(g: Graph, initial: Labelling, sense: Sense) -> Labelling:
    """One simultaneous pass: ``+`` iff more neighbours in ``U+`` than ``U-`` (reversed when disassortative)."""
    if len(initial) != g.num_nodes:
        raise ValueError("labelling length does not match graph")
    tally = g.matvec(initial.signs.astype(np.float64))
    plus = tally > 0 if sense is Sense.ASSORTATIVE else tally < 0
    return Labelling.auto(np.where(plus, 1, -1).astype(np.int8))


def recover(g: Graph, cfg: ReplicaConfig = ReplicaConfig(), hidden: Optional[Labelling] = None) -> RecoveryTrace:
    """Spectral start, replica boost, then one majority pass.

    ``hidden`` is used only to fill ``stage_errors`` after the fact.
    """
    if g.num_nodes % 2:
        raise ValueError("recover needs an even number of nodes")
    trace = RecoveryTrace(m=cfg.m, epsilon=cfg.epsilon, seed=cfg.seed)
    try:
        t0 = time.perf_counter()
        _, second = top_two_eigenpairs(g, cfg.seed)
        est = sense_from_pair(second)
        trace.sense, trace.sense_low_confidence = est.sense, est.low_confidence
        trace.spectral_converged = second.converged
        trace.spectral_labelling = round_balanced(second.vector)
        t1 = time.perf_counter()
        trace.timings["spectral"] = t1 - t0

        trace.replica_labelling = replica_boost(
            g, trace.sense, cfg, bb_partition, reference=trace.spectral_labelling
        )
        t2 = time.perf_counter()
        trace.timings["replica"] = t2 - t1

        trace.final_labelling = majority_relabel(g, trace.replica_labelling, trace.sense)
        t3 = time.perf_counter()
        trace.timings["final"] = t3 - t2
        trace.timings["total"] = t3 - t0
    except StageError as exc:
        exc.trace = trace
        raise
    except Exception as exc:
        raise StageError(str(exc), trace) from exc

    if hidden is not None:
        trace.stage_errors = tuple(
            hamming_up_to_sign(hidden, lab)
            for lab in (trace.spectral_labelling, trace.replica_labelling, trace.final_labelling)
        )
    return trace
