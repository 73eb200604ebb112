"""Back-calculation matrix, minimum-variance weights and the weighted estimate."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from wmm.errors import EmptyPathSet, InvalidParameter, MissingBranch
from wmm.linalg import PINV_RTOL, pseudo_inverse
from wmm.rng import RandomStream
from wmm.sampling import (BranchSample, Scheme, SiblingGroup, compile_plan, draw_plan)
from wmm.tree import (BranchEvidence, Edge, InformativePath, TreeSpec, evidence_combinations,
                      informative_paths)

DEFAULT_RUNS = 100_000


@dataclass(frozen=True)
class EstimateMatrix:
    """Runs x leaves matrix of root estimates, kept on the log scale."""

    log_values: np.ndarray
    leaf_order: tuple[str, ...]

    def __post_init__(self):
        lv = np.asarray(self.log_values, dtype=np.float64)
        if lv.ndim != 2 or lv.shape[1] != len(self.leaf_order):
            raise ValueError("matrix columns must match leaf_order")
        if not np.all(np.isfinite(lv)):
            raise ValueError("matrix entries must be positive and finite")
        object.__setattr__(self, "log_values", lv)
        object.__setattr__(self, "leaf_order", tuple(self.leaf_order))

    @classmethod
    def from_values(cls, values, leaf_order) -> "EstimateMatrix":
        values = np.asarray(values, dtype=np.float64)
        if np.any(values <= 0):
            raise ValueError("matrix entries must be positive")
        return cls(np.log(values), leaf_order)

    @property
    def values(self) -> np.ndarray:
        return np.exp(self.log_values)

    @property
    def runs(self) -> int:
        return self.log_values.shape[0]


@dataclass(frozen=True)
class WeightVector:
    weights: np.ndarray
    leaf_order: tuple[str, ...]
    degenerate: bool = False

    def as_dict(self) -> dict[str, float]:
        return {k: float(w) for k, w in zip(self.leaf_order, self.weights)}

    def __getitem__(self, leaf):
        return float(self.weights[self.leaf_order.index(leaf)])


@dataclass
class WmmResult:
    point_estimate: float
    log_estimate: float
    interval: tuple[float, float]
    weights: WeightVector
    per_run_log_estimates: np.ndarray
    interval_mass: float = 0.95
    warnings: list[str] = field(default_factory=list)
    combination_weights: Optional[np.ndarray] = None
    combination_count: int = 1


def back_calculate(path: InformativePath, sample: BranchSample | Mapping[Edge, float]):
    """Root estimate from one path: the leaf count divided by every branch probability."""
    probs = sample.probabilities if isinstance(sample, BranchSample) else sample
    est = float(path.leaf_count)
    for e in path.edges:
        if e not in probs:
            raise MissingBranch(f"no sampled probability for edge {e}")
        est = est / probs[e]
    return est


def path_groups(spec: TreeSpec, paths: Iterable[InformativePath],
                combination: Mapping[Edge, BranchEvidence]) -> list[SiblingGroup]:
    parents = {e[0] for p in paths for e in p.edges}
    order = sorted(parents, key=spec.node_index.__getitem__)
    return [SiblingGroup.from_tree(spec, parent, combination) for parent in order]


def sample_paths(spec, paths, combination, runs, scheme, rng: RandomStream):
    """Joint branch draws for every sibling group touched by ``paths``.

    Returns ``(columns, probabilities)`` with one row per run.
    """
    groups = path_groups(spec, paths, combination)
    key_ids = [spec.node_index[g.parent] for g in groups]
    plan = compile_plan(groups, scheme, key_ids)
    return plan.columns, draw_plan(plan, runs, rng.key)


def build_matrix(spec: TreeSpec, paths: Sequence[InformativePath],
                 combination: Mapping[Edge, BranchEvidence], runs: int, scheme,
                 rng: RandomStream) -> EstimateMatrix:
    """Back-calculate every path on ``runs`` joint draws of the tree.

    Paths sharing an edge use the same sampled value within a row, which is
    what induces covariance between the columns.
    """
    if runs < 2:
        raise InvalidParameter("need at least two runs")
    if not paths:
        raise EmptyPathSet("no informative paths")
    scheme = Scheme.coerce(scheme)
    columns, probs = sample_paths(spec, paths, combination, runs, scheme, rng)
    col = {e: j for j, e in enumerate(columns)}
    logp = np.log(probs)
    out = np.empty((runs, len(paths)))
    for i, path in enumerate(paths):
        if path.leaf_count <= 0:
            raise InvalidParameter(f"leaf {path.leaf!r} has a non-positive count")
        missing = [e for e in path.edges if e not in col]
        if missing:
            raise MissingBranch(f"path to {path.leaf!r} has unsampled edges {missing}")
        idx = [col[e] for e in path.edges]
        out[:, i] = np.log(path.leaf_count) - logp[:, idx].sum(axis=1)
    return EstimateMatrix(out, tuple(p.leaf for p in paths))


def _covariance(log_matrix) -> np.ndarray:
    lm = np.asarray(log_matrix, dtype=np.float64)
    if lm.ndim == 1:
        lm = lm[:, None]
    if lm.shape[0] < 2:
        raise InvalidParameter("need at least two runs for a covariance")
    return np.atleast_2d(np.cov(lm, rowvar=False, ddof=1))


def compute_weights(log_matrix, leaf_order: Optional[Sequence[str]] = None,
                    rtol: float = PINV_RTOL) -> WeightVector:
    """Minimum-variance weights ``S+ e / (e' S+ e)`` from the column covariance.

    ``S+`` is the eigenvalue pseudo-inverse of the sample covariance. If it
    annihilates the all-ones vector the weights fall back to uniform and the
    result is flagged ``degenerate``.
    """
    if isinstance(log_matrix, EstimateMatrix):
        leaf_order = log_matrix.leaf_order if leaf_order is None else leaf_order
        log_matrix = log_matrix.log_values
    sigma = _covariance(log_matrix)
    n = sigma.shape[0]
    if leaf_order is None:
        leaf_order = tuple(str(i) for i in range(n))
    prec = pseudo_inverse(sigma, rtol)
    row = prec.sum(axis=1)
    denom = row.sum()
    if not np.isfinite(denom) or denom <= 0.0:
        return WeightVector(np.full(n, 1.0 / n), tuple(leaf_order), degenerate=True)
    return WeightVector(row / denom, tuple(leaf_order))


def inverse_variance_weights(log_matrix, leaf_order: Optional[Sequence[str]] = None
                             ) -> WeightVector:
    """Non-negative weights proportional to each column's inverse sample variance."""
    if isinstance(log_matrix, EstimateMatrix):
        leaf_order = log_matrix.leaf_order if leaf_order is None else leaf_order
        log_matrix = log_matrix.log_values
    var = np.diag(_covariance(log_matrix))
    if leaf_order is None:
        leaf_order = tuple(str(i) for i in range(var.size))
    return WeightVector(_inverse_variance(var), tuple(leaf_order))


def _inverse_variance(var):
    var = np.asarray(var, dtype=np.float64)
    zero = var <= 0.0
    if zero.any():
        w = zero.astype(np.float64)
    else:
        w = 1.0 / var
    return w / w.sum(axis=-1, keepdims=True)


def _summarize(per_run, mass, interval_sample=None):
    if not 0.0 < mass < 1.0:
        raise InvalidParameter("interval mass must lie in (0, 1)")
    log_est = float(np.mean(per_run))
    pool = per_run if interval_sample is None else interval_sample
    lo, hi = np.quantile(pool, [(1.0 - mass) / 2.0, (1.0 + mass) / 2.0])
    return log_est, (float(np.exp(lo)), float(np.exp(hi)))


def wmm_estimate(matrix: EstimateMatrix, weights: WeightVector, interval_mass: float = 0.95,
                 interval_method: str = "weighted") -> WmmResult:
    """Weighted multiplier estimate: the mean over runs of the weighted log estimates.

    The interval comes from the equal-tailed quantiles of the per-run
    weighted logs (``interval_method="weighted"``) or, alternatively, of all
    matrix entries pooled together (``"pooled"``).
    """
    if tuple(weights.leaf_order) != tuple(matrix.leaf_order):
        raise InvalidParameter("weights are not aligned with the matrix columns")
    per_run = matrix.log_values @ weights.weights
    if interval_method == "weighted":
        pool = None
    elif interval_method == "pooled":
        pool = matrix.log_values.ravel()
    else:
        raise InvalidParameter(f"unknown interval method {interval_method!r}")
    log_est, interval = _summarize(per_run, interval_mass, pool)
    warn = ["degenerate covariance: uniform weights used"] if weights.degenerate else []
    return WmmResult(float(np.exp(log_est)), log_est, interval, weights, per_run,
                     interval_mass, warn)


def two_stage_estimate(spec: TreeSpec, evidence: Iterable[BranchEvidence], runs: int, scheme,
                       rng: RandomStream, interval_mass: float = 0.95,
                       cap: int = 1024, include_internal: bool = False) -> WmmResult:
    """Estimate over every evidence combination, re-weighting the per-combination estimates.

    Each combination gets its own stream ``rng.spawn("combination", c)`` and
    its own first-stage weights. The per-run weighted logs are stacked and
    combined again with the same minimum-variance rule. With a single
    combination this is exactly the one-stage estimate.
    """
    combos = evidence_combinations(evidence, cap)
    thetas, first_stage, notes = [], [], []
    missing = None
    for c, combo in enumerate(combos):
        try:
            paths = informative_paths(spec, combo, include_internal=include_internal)
        except EmptyPathSet as exc:
            missing = exc
            notes.append(f"combination {c} has no informative path; skipped")
            continue
        matrix = build_matrix(spec, paths, combo, runs, scheme, rng.spawn("combination", c))
        w = compute_weights(matrix)
        if w.degenerate:
            notes.append(f"combination {c}: degenerate covariance, uniform weights used")
        thetas.append(matrix.log_values @ w.weights)
        first_stage.append(w)
    if not thetas:
        raise missing
    stacked = np.column_stack(thetas)
    second = compute_weights(stacked)
    if second.degenerate and len(thetas) > 1:
        notes.append("second stage: degenerate covariance, uniform weights used")
    per_run = stacked @ second.weights
    log_est, interval = _summarize(per_run, interval_mass)

    leaves = sorted({leaf for w in first_stage for leaf in w.leaf_order})
    eff = dict.fromkeys(leaves, 0.0)
    for W, w in zip(second.weights, first_stage):
        for leaf, wl in zip(w.leaf_order, w.weights):
            eff[leaf] += W * wl
    if len(first_stage) == 1:
        weights = WeightVector(first_stage[0].weights * second.weights[0],
                               first_stage[0].leaf_order, first_stage[0].degenerate)
    else:
        weights = WeightVector(np.array([eff[k] for k in leaves]), tuple(leaves))
    return WmmResult(float(np.exp(log_est)), log_est, interval, weights, per_run, interval_mass,
                     notes, second.weights.copy(), len(combos))


def estimate(spec: TreeSpec, evidence: Iterable[BranchEvidence], runs: int = DEFAULT_RUNS,
             scheme="dir", seed: int = 0, interval_mass: float = 0.95,
             include_internal: bool = False) -> WmmResult:
    """Convenience wrapper: full estimate from a tree, its evidence and a seed."""
    return two_stage_estimate(spec, list(evidence), runs, scheme, RandomStream(seed),
                              interval_mass, include_internal=include_internal)


def repeat_weighted_sampling(spec: TreeSpec, evidence, runs: int, iterations: int,
                             rng: RandomStream, scheme="dir", weighting: str = "inverse_variance",
                             include_internal: bool = False) -> float:
    """Root estimate by per-run categorical choice of a leaf.

    Each of ``runs`` runs draws ``iterations`` joint realisations, weights
    the leaves by the inverse sample variance of their log estimates (or
    uniformly), picks one leaf from that categorical distribution and
    averages its log estimates. The result is ``exp`` of the mean over runs.
    """
    if runs < 2 or iterations < 2:
        raise InvalidParameter("need at least two runs and two iterations")
    evidence = list(evidence) if not isinstance(evidence, Mapping) else evidence
    combo = evidence if isinstance(evidence, Mapping) else evidence_combinations(evidence)[0]
    paths = informative_paths(spec, combo, include_internal=include_internal)
    matrix = build_matrix(spec, paths, combo, runs * iterations, scheme, rng.spawn("draws"))
    cube = matrix.log_values.reshape(runs, iterations, len(paths))
    if weighting == "inverse_variance":
        w = _inverse_variance(cube.var(axis=1, ddof=1))
    elif weighting == "uniform":
        w = np.full((runs, len(paths)), 1.0 / len(paths))
    else:
        raise InvalidParameter(f"unknown weighting {weighting!r}")
    u = rng.spawn("categorical").uniform(runs)
    cdf = np.cumsum(w, axis=1)
    cdf[:, -1] = 1.0
    choice = (u[:, None] >= cdf).sum(axis=1)
    theta = cube[np.arange(runs), :, choice].mean(axis=1)
    return float(np.exp(theta.mean()))
