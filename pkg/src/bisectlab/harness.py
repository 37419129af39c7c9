"""Seeded Monte Carlo trials, parameter sweeps, and the perturbation-constant calibration."""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import thresholds
from .graph_model import ModelParams, census, generate, overlap_error
from .refine import ReplicaConfig, StageError, recover
from .spectral import centered_norm_estimate

MEASUREMENTS = (
    "exact_recovery",
    "overlap",
    "minority_stats",
    "both_label_minorities",
    "stage_errors",
    "norm_estimate",
    "timing",
)
SEED_ENV = "BISECTLAB_SEED"
MASK64 = 0xFFFFFFFFFFFFFFFF


def splitmix64(x: int) -> int:
    """One round of the SplitMix64 finaliser (Steele, Lea & Flood)."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def mix_seed(master_seed: int, point_id: int, trial_index: int) -> int:
    h = splitmix64(master_seed & MASK64)
    h = splitmix64(h ^ (point_id & MASK64))
    return splitmix64(h ^ (trial_index & MASK64))


@dataclass(frozen=True)
class GridPoint:
    n: int
    p: float
    q: float
    a: Optional[float] = None
    b: Optional[float] = None

    @classmethod
    def from_dict(cls, d: dict) -> "GridPoint":
        n = int(d["n"])
        if "a" in d or "b" in d:
            if "p" in d or "q" in d:
                raise ValueError(f"grid point mixes (p, q) with (a, b): {d}")
            params = ModelParams.from_ab(n, float(d["a"]), float(d["b"]))
            return cls(n, params.p, params.q, float(d["a"]), float(d["b"]))
        ModelParams(n, float(d["p"]), float(d["q"]))
        return cls(n, float(d["p"]), float(d["q"]))

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.n, self.p, self.q)


@dataclass(frozen=True)
class ExperimentSpec:
    grid: tuple[GridPoint, ...]
    trials: int = 1
    master_seed: int = 0
    epsilon: float = 0.5
    m: int = 10
    measurements: tuple[str, ...] = ("exact_recovery", "overlap", "minority_stats")

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not self.grid:
            raise ValueError("grid must be non-empty")
        unknown = set(self.measurements) - set(MEASUREMENTS)
        if unknown:
            raise ValueError(f"unknown measurements: {sorted(unknown)}")
        # canonical order keeps CSV columns fixed
        object.__setattr__(
            self, "measurements", tuple(m for m in MEASUREMENTS if m in self.measurements)
        )

    @classmethod
    def from_dict(cls, d: dict, env: Optional[dict] = None) -> "ExperimentSpec":
        env = os.environ if env is None else env
        seed = int(d.get("master_seed", 0))
        if env.get(SEED_ENV):
            seed = int(env[SEED_ENV], 0)
        return cls(
            grid=tuple(GridPoint.from_dict(p) for p in d["grid"]),
            trials=int(d.get("trials", 1)),
            master_seed=seed,
            epsilon=float(d.get("epsilon", 0.5)),
            m=int(d.get("m", 10)),
            measurements=tuple(d.get("measurements", cls.measurements)),
        )

    @classmethod
    def from_json(cls, path, env: Optional[dict] = None) -> "ExperimentSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh), env)

    def wants(self, name: str) -> bool:
        return name in self.measurements


@dataclass
class TrialResult:
    point_id: int
    trial: int
    seed: int
    n: int
    p: float
    q: float
    delta: Optional[float] = None
    exact: Optional[bool] = None
    stage_errors: Optional[tuple[int, int, int]] = None
    minority_count: Optional[int] = None
    both_label_minorities: Optional[bool] = None
    norm_estimate: Optional[float] = None
    # wall clock is the one non-reproducible field, so equality ignores it
    timings: dict = field(default_factory=dict, compare=False)
    error: Optional[str] = None


def _needs_recovery(spec: ExperimentSpec) -> bool:
    return any(spec.wants(k) for k in ("exact_recovery", "overlap", "stage_errors", "timing"))


def run_trial(point_id: int, trial_index: int, spec: ExperimentSpec) -> TrialResult:
    """One seeded trial; failures are recorded in ``error`` rather than raised."""
    pt = spec.grid[point_id]
    seed = mix_seed(spec.master_seed, point_id, trial_index)
    res = TrialResult(point_id, trial_index, seed, pt.n, pt.p, pt.q)
    t0 = time.perf_counter()
    inst = generate(pt.params, seed)
    res.timings["generate"] = time.perf_counter() - t0

    if spec.wants("minority_stats") or spec.wants("both_label_minorities"):
        cen = census(inst.graph, inst.hidden, pt.params.sense, spec.epsilon, pt.params)
        res.minority_count = cen.minority_count
        mins = cen.minorities
        labels = inst.hidden.signs[mins]
        res.both_label_minorities = bool(np.any(labels == 1) and np.any(labels == -1))

    if spec.wants("norm_estimate"):
        res.norm_estimate = centered_norm_estimate(inst, seed=seed)

    if _needs_recovery(spec):
        try:
            trace = recover(inst.graph, ReplicaConfig(m=spec.m, epsilon=spec.epsilon, seed=seed), inst.hidden)
        except StageError as exc:
            res.error = f"{type(exc).__name__}: {exc}"
            return res
        res.delta = overlap_error(inst.hidden, trace.final_labelling)
        res.exact = res.delta == 0.0
        res.stage_errors = trace.stage_errors
        res.timings.update(trace.timings)
    return res


def _run_task(args):
    return run_trial(*args)


@dataclass
class PointSummary:
    point_id: int
    n: int
    p: float
    q: float
    trials: int
    failed_trials: int
    success_rate: Optional[float]
    mean_delta: Optional[float]
    mean_minority_fraction: Optional[float]
    minority_fraction_se: Optional[float]
    both_label_minority_rate: Optional[float]
    exact_P_ref: float
    sparse_stat: Optional[float]
    dense_stat: Optional[float]
    weak_stat: Optional[float]
    regime: str
    hypothesis_unmet: bool


def _mean(xs: Sequence[float]) -> Optional[float]:
    return math.fsum(xs) / len(xs) if xs else None


def summarize(rows: Sequence[TrialResult], spec: ExperimentSpec) -> list[PointSummary]:
    """Per-point aggregates; a pure function of the raw rows."""
    out = []
    for pid, pt in enumerate(spec.grid):
        mine = [r for r in rows if r.point_id == pid]
        ok = [r for r in mine if r.error is None]
        exact = [float(r.exact) for r in ok if r.exact is not None]
        deltas = [r.delta for r in ok if r.delta is not None]
        fracs = [r.minority_count / (2 * pt.n) for r in mine if r.minority_count is not None]
        both = [float(r.both_label_minorities) for r in mine if r.both_label_minorities is not None]
        se = None
        if len(fracs) > 1:
            se = float(np.std(fracs, ddof=1) / math.sqrt(len(fracs)))
        rep = thresholds.report(pt.n, pt.p, pt.q) if pt.n >= 2 else None
        out.append(
            PointSummary(
                point_id=pid,
                n=pt.n,
                p=pt.p,
                q=pt.q,
                trials=len(mine),
                failed_trials=len(mine) - len(ok),
                success_rate=_mean(exact),
                mean_delta=_mean(deltas),
                mean_minority_fraction=_mean(fracs),
                minority_fraction_se=se,
                both_label_minority_rate=_mean(both),
                exact_P_ref=thresholds.exact_P(pt.n - 1, pt.n, pt.p, pt.q).value,
                sparse_stat=rep.sparse_stat if rep else None,
                dense_stat=rep.dense_stat if rep else None,
                weak_stat=rep.weak_stat if rep else None,
                regime=rep.regime if rep else "degenerate",
                hypothesis_unmet=rep.hypothesis_unmet if rep else True,
            )
        )
    return out


@dataclass
class SweepResult:
    rows: list[TrialResult]
    summary: list[PointSummary]


def run_sweep(spec: ExperimentSpec, workers: Optional[int] = None) -> SweepResult:
    """Run every (point, trial); output is ordered by (point, trial) whatever the worker count."""
    tasks = [(pid, t, spec) for pid in range(len(spec.grid)) for t in range(spec.trials)]
    workers = workers or os.cpu_count() or 1
    if workers <= 1:
        rows = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    rows.sort(key=lambda r: (r.point_id, r.trial))
    return SweepResult(rows, summarize(rows, spec))


# ---------------------------------------------------------------------------
# CSV


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


TIMING_KEYS = ("generate", "spectral", "replica", "final", "total")


def row_columns(spec: ExperimentSpec) -> list[str]:
    cols = ["point_id", "n", "p", "q", "trial", "seed"]
    for m in spec.measurements:
        if m == "exact_recovery":
            cols.append("exact")
        elif m == "overlap":
            cols.append("delta")
        elif m == "minority_stats":
            cols.append("minority_count")
        elif m == "both_label_minorities":
            cols.append("both_label_minorities")
        elif m == "stage_errors":
            cols += ["err_spectral", "err_replica", "err_final"]
        elif m == "norm_estimate":
            cols.append("norm_estimate")
        elif m == "timing":
            cols += [f"t_{k}" for k in TIMING_KEYS]
    cols.append("error")
    return cols


def _row_values(r: TrialResult, spec: ExperimentSpec) -> list:
    vals = [r.point_id, r.n, r.p, r.q, r.trial, r.seed]
    for m in spec.measurements:
        if m == "exact_recovery":
            vals.append(r.exact)
        elif m == "overlap":
            vals.append(r.delta)
        elif m == "minority_stats":
            vals.append(r.minority_count)
        elif m == "both_label_minorities":
            vals.append(r.both_label_minorities)
        elif m == "stage_errors":
            vals += list(r.stage_errors) if r.stage_errors else [None] * 3
        elif m == "norm_estimate":
            vals.append(r.norm_estimate)
        elif m == "timing":
            vals += [r.timings.get(k) for k in TIMING_KEYS]
    vals.append(r.error)
    return vals


def write_rows_csv(rows: Iterable[TrialResult], spec: ExperimentSpec, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(row_columns(spec))
        for r in rows:
            w.writerow([_fmt(v) for v in _row_values(r, spec)])


def read_rows_csv(path, spec: ExperimentSpec) -> list[TrialResult]:
    """Inverse of :func:`write_rows_csv` for the measured fields."""

    def opt(conv, s):
        return None if s == "" else conv(s)

    def flag(s):
        return None if s == "" else s == "1"

    rows = []
    with open(path, newline="") as fh:
        for d in csv.DictReader(fh):
            r = TrialResult(
                int(d["point_id"]), int(d["trial"]), int(d["seed"]),
                int(d["n"]), float(d["p"]), float(d["q"]),
            )
            r.exact = flag(d.get("exact", ""))
            r.delta = opt(float, d.get("delta", ""))
            r.minority_count = opt(int, d.get("minority_count", ""))
            r.both_label_minorities = flag(d.get("both_label_minorities", ""))
            if d.get("err_final", "") != "":
                r.stage_errors = (int(d["err_spectral"]), int(d["err_replica"]), int(d["err_final"]))
            r.norm_estimate = opt(float, d.get("norm_estimate", ""))
            r.timings = {k: float(d[f"t_{k}"]) for k in TIMING_KEYS if d.get(f"t_{k}", "") != ""}
            r.error = d["error"] or None
            rows.append(r)
    return rows


def write_summary_csv(summary: Sequence[PointSummary], path) -> None:
    cols = list(PointSummary.__dataclass_fields__)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for s in summary:
            w.writerow([_fmt(getattr(s, c)) for c in cols])


# ---------------------------------------------------------------------------
# perturbation calibration


@dataclass(frozen=True)
class CalibrationRow:
    m: int
    n: int
    p: float
    q: float
    ell: int
    scale: float  # sqrt(ln m / (m p))
    ratio: float  # ln((Pr(Y >= X - ell) - 2/m^2)_+ / P) / (ell * scale)
    ratio_pos: float  # ln(P / (Pr(Y >= X + ell) + 2/m^2)) / (ell * scale)
    hypothesis_met: bool  # mp >= 64 ln m and ell <= sqrt(mp ln m)


@dataclass
class CalibrationTable:
    rows: list[CalibrationRow]

    @property
    def max_ratio(self) -> float:
        return max((r.ratio for r in self.rows), default=-math.inf)

    @property
    def max_ratio_pos(self) -> float:
        return max((r.ratio_pos for r in self.rows), default=-math.inf)

    @property
    def constant(self) -> float:
        """Smallest C consistent with both directions on every row."""
        return max(self.max_ratio, self.max_ratio_pos, 0.0)


def default_calibration_grid() -> list[tuple[int, int, float, float, int]]:
    grid = []
    for m in (2000, 10000):
        for p in (0.02, 0.1):
            for frac in (0.3, 0.6):
                ell = 1
                cap = math.sqrt(m * p * math.log(m))
                while ell <= cap:
                    grid.append((m, m, p, p * frac, ell))
                    ell *= 2
    return grid


def _log_minus(log_a: float, b: float) -> float:
    """``ln(max(e^log_a - b, 0))``."""
    if log_a == -math.inf:
        return -math.inf
    if b <= 0:
        return log_a
    # e^log_a - b > 0  <=>  log_a > ln b
    if log_a <= math.log(b):
        return -math.inf
    return log_a + math.log1p(-b * math.exp(-log_a))


def calibrate_perturbation(grid: Iterable[tuple[int, int, float, float, int]]) -> CalibrationTable:
    """Empirical constants for the binomial perturbation bounds at each ``(m, n, p, q, ell)``.

    ``p`` is the larger probability (the ``X`` side). Rows with ``ell = 0`` get ratio 0.
    """
    rows = []
    for m, n, p, q, ell in grid:
        scale = math.sqrt(math.log(m) / (m * p))
        met = m * p >= 64 * math.log(m) and ell <= math.sqrt(m * p * math.log(m))
        if ell == 0:
            rows.append(CalibrationRow(m, n, p, q, 0, scale, 0.0, 0.0, met))
            continue
        add = 2.0 / m**2
        log_base = thresholds.exact_P(m, n, p, q).log_value
        log_neg = thresholds.perturbed_P(m, n, p, q, ell).log_value
        log_pos = thresholds.perturbed_P(m, n, p, q, -ell).log_value
        ratio = (_log_minus(log_neg, add) - log_base) / (ell * scale)
        ratio_pos = (log_base - np.logaddexp(log_pos, math.log(add))) / (ell * scale)
        rows.append(CalibrationRow(m, n, p, q, ell, scale, ratio, float(ratio_pos), met))
    return CalibrationTable(rows)
