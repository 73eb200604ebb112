"""Weighted multiplier method for estimating the size of a hidden population."""

import functools
import subprocess
from pathlib import Path

__version__ = "0.1.0"


@functools.lru_cache(maxsize=None)
def build_version() -> str:
    """Package version, plus ``git describe`` output when run from a git checkout."""
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=5, check=True)
    except (OSError, subprocess.SubprocessError):
        return __version__
    desc = out.stdout.strip()
    return f"{__version__}+git.{desc}" if desc else __version__


from wmm.bayes import (HiddenHyper, PosteriorGrid, PriorSpec, posterior_hidden,  # noqa: E402
                       posterior_moments, posterior_sample, posterior_simple)
from wmm.errors import (EmptyPathSet, EmptySupport, InvalidParameter,  # noqa: E402
                        RejectionStall, TreeValidationError, WmmError)
from wmm.estimator import (EstimateMatrix, WeightVector, WmmResult, build_matrix,  # noqa: E402
                           compute_weights, estimate, repeat_weighted_sampling,
                           two_stage_estimate, wmm_estimate)
from wmm.io import load_fixture, load_tree  # noqa: E402
from wmm.rng import RandomStream  # noqa: E402
from wmm.sampling import Scheme, SiblingGroup, sample_sibling_group  # noqa: E402
from wmm.simulation import ExperimentConfig, run_experiment, run_trial  # noqa: E402
from wmm.tree import (BranchEvidence, NodeSpec, TreeSpec, informative_paths,  # noqa: E402
                      validate_tree)

__all__ = [
    "BranchEvidence", "EmptyPathSet", "EmptySupport", "EstimateMatrix", "ExperimentConfig",
    "HiddenHyper", "InvalidParameter", "NodeSpec", "PosteriorGrid", "PriorSpec", "RandomStream",
    "RejectionStall", "Scheme", "SiblingGroup", "TreeSpec", "TreeValidationError",
    "WeightVector", "WmmError", "WmmResult", "build_matrix", "build_version", "compute_weights",
    "estimate", "informative_paths", "load_fixture", "load_tree", "posterior_hidden",
    "posterior_moments", "posterior_sample", "posterior_simple", "repeat_weighted_sampling",
    "run_experiment", "run_trial", "sample_sibling_group", "two_stage_estimate",
    "validate_tree", "wmm_estimate",
]
