"""Branch-probability sampling for sibling groups.

Two schemes are supported:

``ind``
    Every evidenced branch is drawn from its own Beta(x + 1, n - x + 1),
    ignoring the requirement that siblings sum to at most one.
``dir``
    Siblings are drawn jointly. Branches reported by one survey share a
    Dirichlet draw; branches from different surveys are proposed
    independently and the whole group is accepted only when it fits on the
    simplex. Because the proposal density and the flat-Dirichlet posterior
    differ only by the simplex indicator, accepted draws are exact and every
    importance weight equals one.
"""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from wmm import _kernels
from wmm.errors import InvalidParameter, RejectionStall
from wmm.rng import RandomStream
from wmm.tree import BranchEvidence, Edge, TreeSpec

EPS = 1e-12
STALL_WINDOW = 100_000
STALL_RATE = 1e-4


class Scheme(str, enum.Enum):
    IND = "ind"
    DIR = "dir"

    @classmethod
    def coerce(cls, value) -> "Scheme":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise InvalidParameter(f"unknown sampling scheme {value!r}") from None


@dataclass(frozen=True)
class SiblingGroup:
    parent: str
    branches: tuple[tuple[Edge, Optional[BranchEvidence]], ...]

    def __post_init__(self):
        parents = {e[0] for e, _ in self.branches}
        if parents - {self.parent}:
            raise InvalidParameter(f"branches of group {self.parent!r} have other parents")

    @property
    def evidenced(self) -> list[tuple[Edge, BranchEvidence]]:
        return [(e, ev) for e, ev in self.branches if ev is not None]

    @property
    def has_latent(self) -> bool:
        return any(ev is None for _, ev in self.branches)

    def grouping(self) -> dict[tuple[str, str], list[tuple[Edge, BranchEvidence]]]:
        """Evidenced branches partitioned by survey."""
        out = defaultdict(list)
        for e, ev in self.evidenced:
            out[(ev.source_id, ev.alternative_id)].append((e, ev))
        return dict(sorted(out.items()))

    @classmethod
    def from_tree(cls, spec: TreeSpec, parent: str,
                  combination: Mapping[Edge, BranchEvidence]) -> "SiblingGroup":
        return cls(parent, tuple(((parent, c), combination.get((parent, c)))
                                 for c in spec.children(parent)))


@dataclass
class BranchSample:
    """Sampled branch probabilities; each value has one entry per run."""

    probabilities: dict[Edge, np.ndarray]
    scheme: Scheme
    importance_weights: np.ndarray = field(default=None)

    def __getitem__(self, edge: Edge):
        return self.probabilities[edge]

    def __contains__(self, edge):
        return edge in self.probabilities


@dataclass(frozen=True)
class SamplingPlan:
    """Flattened description of the sibling groups for the sampling kernels."""

    columns: tuple[Edge, ...]
    g_block_ptr: np.ndarray
    g_key: np.ndarray
    g_reject: np.ndarray
    b_branch_ptr: np.ndarray
    b_rem_alpha: np.ndarray
    br_alpha: np.ndarray
    br_col: np.ndarray

    @property
    def n_cols(self) -> int:
        return len(self.columns)


def _blocks(group: SiblingGroup, scheme: Scheme):
    """``[(branches, remainder_alpha)]`` for one group; remainder 0 means none."""
    if scheme is Scheme.IND:
        return [([(e, ev.successes + 1.0)], ev.sample_size - ev.successes + 1.0)
                for e, ev in group.evidenced]
    n_children = len(group.branches)
    out = []
    for _, members in group.grouping().items():
        n = members[0][1].sample_size
        taken = sum(ev.successes for _, ev in members)
        covers_all = len(members) == n_children
        rem = 0.0 if covers_all and taken == n else n - taken + 1.0
        out.append(([(e, ev.successes + 1.0) for e, ev in members], rem))
    return out


def compile_plan(groups: Sequence[SiblingGroup], scheme, key_ids: Optional[Sequence[int]] = None
                 ) -> SamplingPlan:
    scheme = Scheme.coerce(scheme)
    if key_ids is None:
        key_ids = range(len(groups))
    columns: list[Edge] = []
    g_block_ptr = [0]
    b_branch_ptr = [0]
    b_rem, br_alpha, br_col, g_reject = [], [], [], []
    for group in groups:
        blocks = _blocks(group, scheme)
        for members, rem in blocks:
            for e, a in members:
                br_alpha.append(a)
                br_col.append(len(columns))
                columns.append(e)
            b_rem.append(rem)
            b_branch_ptr.append(len(br_alpha))
        g_block_ptr.append(len(b_rem))
        g_reject.append(scheme is Scheme.DIR and len(blocks) > 1)
    return SamplingPlan(
        columns=tuple(columns),
        g_block_ptr=np.asarray(g_block_ptr, dtype=np.int64),
        g_key=np.asarray(list(key_ids), dtype=np.int64),
        g_reject=np.asarray(g_reject, dtype=np.bool_),
        b_branch_ptr=np.asarray(b_branch_ptr, dtype=np.int64),
        b_rem_alpha=np.asarray(b_rem, dtype=np.float64),
        br_alpha=np.asarray(br_alpha, dtype=np.float64),
        br_col=np.asarray(br_col, dtype=np.int64),
    )


def draw_plan(plan: SamplingPlan, runs: int, key: int) -> np.ndarray:
    """Draw ``runs`` joint realisations; returns a ``runs x n_cols`` array."""
    out, proposals, failed = _kernels.sample_plan(key, runs, plan, EPS)
    n_groups = len(plan.g_key)
    for g in range(n_groups):
        if not plan.g_reject[g]:
            continue
        total = int(proposals[:, g].sum())
        accepted = runs - int(failed.sum())
        if failed.any() or (total >= STALL_WINDOW and accepted / total < STALL_RATE):
            lo = plan.b_branch_ptr[plan.g_block_ptr[g]]
            parent = plan.columns[plan.br_col[lo]][0]
            raise RejectionStall(
                f"sibling group under {parent!r}: {accepted} of {total} proposals accepted; "
                "the survey evidence for these siblings is incompatible with a simplex"
            )
    return out


def _check_positive(name, value):
    if not np.all(np.isfinite(value)) or np.any(np.asarray(value) <= 0):
        raise InvalidParameter(f"{name} must be positive, got {value!r}")


def sample_beta(alpha: float, beta: float, rng: RandomStream, size: Optional[int] = None):
    """Beta draws as ``g_a / (g_a + g_b)`` from two gamma variates."""
    _check_positive("alpha", alpha)
    _check_positive("beta", beta)
    n = 1 if size is None else int(size)
    state = _kernels.lane_keys(rng.next_key(), np.arange(n), 0)
    ga, state = _kernels.gamma(alpha, state)
    gb, state = _kernels.gamma(beta, state)
    tot = ga + gb
    with np.errstate(invalid="ignore"):
        x = ga / tot
    under = tot == 0.0
    if under.any():
        # both variates underflowed, which only happens for shapes far below 1; the
        # draw is then at an edge of (0, 1), chosen with the limiting odds a : b
        u, _ = _kernels._uniform_np(state[under])
        x[under] = np.where(u < alpha / (alpha + beta), 1.0, 0.0)
    x = np.clip(x, EPS, 1.0 - EPS)
    return float(x[0]) if size is None else x


def sample_dirichlet(alphas, rng: RandomStream, size: Optional[int] = None) -> np.ndarray:
    alphas = np.asarray(alphas, dtype=np.float64)
    if alphas.ndim != 1 or alphas.size < 2:
        raise InvalidParameter("need at least two concentration parameters")
    _check_positive("alphas", alphas)
    n = 1 if size is None else int(size)
    state = _kernels.lane_keys(rng.next_key(), np.arange(n), 0)
    g = np.empty((n, alphas.size))
    for j, a in enumerate(alphas):
        g[:, j], state = _kernels.gamma(a, state)
    tot = g.sum(axis=1, keepdims=True)
    under = tot[:, 0] == 0.0
    if under.any():
        # every variate underflowed: put the mass on one vertex, chosen in proportion to alpha
        u, _ = _kernels._uniform_np(state[under])
        pick = np.searchsorted(np.cumsum(alphas) / alphas.sum(), u)
        g[under] = 0.0
        g[np.flatnonzero(under), np.minimum(pick, alphas.size - 1)] = 1.0
        tot[under] = 1.0
    x = g / tot
    return x[0] if size is None else x


def sample_sibling_group(group: SiblingGroup, scheme, rng: RandomStream,
                         size: Optional[int] = None) -> BranchSample:
    """Draw the evidenced branch probabilities of one sibling group.

    Latent branches never appear in the result; under ``dir`` their share is
    the implied remainder.
    """
    scheme = Scheme.coerce(scheme)
    for e, ev in group.evidenced:
        if not 0 <= ev.successes <= ev.sample_size or ev.sample_size <= 0:
            raise InvalidParameter(f"edge {e}: need 0 <= x <= n and n > 0")
    n = 1 if size is None else int(size)
    plan = compile_plan([group], scheme)
    probs = draw_plan(plan, n, rng.next_key())
    cols = {e: (probs[0, j] if size is None else probs[:, j]) for j, e in enumerate(plan.columns)}
    return BranchSample(cols, scheme, np.ones(n) if size is not None else np.ones(1))
