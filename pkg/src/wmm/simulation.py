"""Simulation experiments on the two-leaf tree.

Each trial draws two surveys, ``s_p ~ Bin(S, p)`` and ``s_q ~ Bin(S, q)``,
and two leaf counts by the two-step binomial ``A ~ Bin(Z, 1 - p)``,
``B ~ Bin(Z - A, q)``. Every method then estimates ``log Z`` from
``(s_p, s_q, A, B)``; the experiment reports the RMSE on the log scale.

Trial ``i`` draws only from streams keyed by ``(seed, i)``, so results do not
depend on the experiment id, the prior, or how trials are spread over threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from wmm import _backend
from wmm.bayes import PriorSpec, posterior_moments, posterior_simple
from wmm.errors import ConstantSeries, InvalidParameter
from wmm.estimator import two_stage_estimate
from wmm.rng import RandomStream
from wmm.tree import BranchEvidence, NodeSpec, TreeSpec

METHODS = ("closed", "wmm_ind", "wmm_dir")
DEFAULT_TRIALS = 1000
DEFAULT_RUNS = 2000

_PRIORS = {
    1: (PriorSpec.uniform(750, 1250), 50),
    2: (PriorSpec.uniform(0, 10000), 50),
    3: (PriorSpec.uniform(750, 1250), 1000),
    4: (PriorSpec.uniform(0, 10000), 1000),
    5: (PriorSpec.gaussian(2000, 150), 50),
}

# published reference RMSEs per experiment 1-5; the MCMC row is never re-run here
PUBLISHED_RMSE = {
    "closed": (2.06e-2, 2.07e-2, 8.37e-3, 8.48e-3, 2.06e-2),
    "mcmc": (2.21e-2, 2.23e-2, 8.86e-3, 8.96e-3, 6.30e-2),
    "wmm_ind": (4.87e-2, 4.82e-2, 1.63e-2, 1.66e-2, 4.82e-2),
    "wmm_dir": (2.41e-2, 2.45e-2, 8.73e-3, 8.67e-3, 2.40e-2),
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment_id: int
    prior: PriorSpec
    survey_size: int
    z_true: int = 1000
    p_true: float = 0.25
    q_true: float = 0.8
    trials: int = DEFAULT_TRIALS
    runs: int = DEFAULT_RUNS
    methods: tuple[str, ...] = METHODS
    seed: int = 0
    point_estimate: str = "mean_log"

    def __post_init__(self):
        if self.trials < 2:
            raise InvalidParameter("need at least two trials")
        if self.runs < 2:
            raise InvalidParameter("need at least two runs per trial")
        if self.survey_size < 1 or self.z_true < 1:
            raise InvalidParameter("survey size and Z must be positive")
        if not (0.0 <= self.p_true <= 1.0 and 0.0 <= self.q_true <= 1.0):
            raise InvalidParameter("p and q must lie in [0, 1]")
        unknown = set(self.methods) - set(METHODS)
        if unknown or not self.methods:
            raise InvalidParameter(f"methods must be a non-empty subset of {METHODS}")
        if self.point_estimate not in ("mean_log", "log_mean"):
            raise InvalidParameter("point_estimate must be 'mean_log' or 'log_mean'")

    @classmethod
    def for_experiment(cls, experiment_id: int, **overrides) -> "ExperimentConfig":
        """Configuration of experiments 1-5, with optional field overrides."""
        if experiment_id not in _PRIORS:
            raise InvalidParameter(f"experiment id must be 1-5, got {experiment_id!r}")
        prior, size = _PRIORS[experiment_id]
        fields = {"prior": prior, "survey_size": size, **overrides}
        return cls(experiment_id, **fields)


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    s_p: int
    s_q: int
    a: int
    b: int
    log_estimates: dict = field(default_factory=dict)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list
    rmse: dict

    def trial_rows(self):
        for r in self.records:
            yield [r.trial, r.s_p, r.s_q, r.a, r.b] + [
                repr(float(r.log_estimates[m])) if m in r.log_estimates else ""
                for m in METHODS]


def simple_tree(s_p: int, s_q: int, survey_size: int, a: int, b: int):
    """The two-leaf tree with survey evidence and leaf counts."""
    nodes = (NodeSpec("Z"), NodeSpec("A", observed_count=a), NodeSpec("At"),
             NodeSpec("B", observed_count=b), NodeSpec("Bt"))
    edges = (("Z", "A"), ("Z", "At"), ("At", "B"), ("At", "Bt"))
    spec = TreeSpec(nodes, edges, "Z")
    n = survey_size
    evidence = [
        BranchEvidence(("Z", "A"), n - s_p, n, "survey_p"),
        BranchEvidence(("Z", "At"), s_p, n, "survey_p"),
        BranchEvidence(("At", "B"), s_q, n, "survey_q"),
        BranchEvidence(("At", "Bt"), n - s_q, n, "survey_q"),
    ]
    return spec, evidence


def _draw_data(config: ExperimentConfig, rng: RandomStream):
    gen = np.random.Generator(np.random.PCG64(rng.spawn("data").key))
    s_p = int(gen.binomial(config.survey_size, config.p_true))
    s_q = int(gen.binomial(config.survey_size, config.q_true))
    a = int(gen.binomial(config.z_true, 1.0 - config.p_true))
    b = int(gen.binomial(config.z_true - a, config.q_true))
    return s_p, s_q, a, b


def run_trial(config: ExperimentConfig, i: int, rng: Optional[RandomStream] = None
              ) -> TrialRecord:
    """Simulate trial ``i`` and estimate ``log Z`` with each requested method."""
    rng = RandomStream(config.seed, "trial", i) if rng is None else rng
    s_p, s_q, a, b = _draw_data(config, rng)
    n = config.survey_size
    out = {}
    if "closed" in config.methods:
        grid = posterior_simple(a, b, s_p + 1, n - s_p + 1, s_q + 1, n - s_q + 1, config.prior)
        mom = posterior_moments(grid)
        out["closed"] = mom.mean_log if config.point_estimate == "mean_log" else math.log(mom.mean)
    spec, evidence = simple_tree(s_p, s_q, n, a, b)
    for method, scheme in (("wmm_ind", "ind"), ("wmm_dir", "dir")):
        if method in config.methods:
            res = two_stage_estimate(spec, evidence, config.runs, scheme, rng.spawn("wmm", scheme))
            out[method] = res.log_estimate
    return TrialRecord(i, s_p, s_q, a, b, out)


def rmse(log_estimates: Sequence[float], z_true: float) -> float:
    err = np.asarray(log_estimates, dtype=np.float64) - math.log(z_true)
    return float(np.sqrt(np.mean(err ** 2)))


def _run_chunk(config, indices):
    with _backend.serial_kernels():
        return [run_trial(config, i) for i in indices]


def run_experiment(config: ExperimentConfig, threads: Optional[int] = None) -> ExperimentResult:
    """Run every trial and compute the log-scale RMSE of each method.

    Trials are spread over ``threads`` workers (default ``WMM_THREADS``);
    the records come back in trial order whatever the thread count.
    """
    threads = _backend.thread_count() if threads is None else max(1, int(threads))
    idx = list(range(config.trials))
    if threads == 1:
        records = [run_trial(config, i) for i in idx]
    else:
        chunks = [idx[k::threads] for k in range(threads)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: _run_chunk(config, c), chunks))
        records = sorted((r for part in parts for r in part), key=lambda r: r.trial)
    scores = {m: rmse([r.log_estimates[m] for r in records], config.z_true)
              for m in config.methods}
    return ExperimentResult(config, records, scores)


def correlation_table(records: Sequence[TrialRecord], methods: Optional[Sequence[str]] = None):
    """Pairwise Pearson correlations of the per-trial log estimates.

    Returns ``(methods, matrix)``.
    """
    if len(records) < 3:
        raise InvalidParameter("need at least three trials")
    if methods is None:
        methods = [m for m in METHODS if m in records[0].log_estimates]
    x = np.array([[r.log_estimates[m] for m in methods] for r in records])
    sd = x.std(axis=0)
    flat = [m for m, v in zip(methods, sd) if v == 0.0]
    if flat:
        raise ConstantSeries(f"constant estimates for {flat}")
    corr = np.corrcoef(x, rowvar=False)
    corr = 0.5 * (corr + corr.T)
    np.fill_diagonal(corr, 1.0)
    return list(methods), corr


def with_trials(config: ExperimentConfig, trials: int) -> ExperimentConfig:
    return replace(config, trials=trials)
