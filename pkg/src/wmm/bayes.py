"""Exact-grid posteriors of the root size for the two-leaf and hidden-node trees.

Two-leaf tree: the root ``Z`` sends ``a`` individuals to ``A`` with
probability ``1 - p``; the rest reach ``A~``, which sends ``b`` of them to
``B`` with probability ``q``. With ``p ~ Beta(ap, bp)`` and
``q ~ Beta(aq, bq)`` integrated out,

    f(z | a, b) ∝ f(z) · B(ap + z - a, bp + a) · B(aq + b, bq + z - a - b) · z! / (z - a - b)!

Hidden-node tree: ``A`` additionally loses a share ``s`` to a latent node
and splits the rest between ``C`` and ``C~`` with probability ``r``. The
``r`` integral is closed-form; the ``(p, q, s)`` integral is summed exactly
or estimated by importance sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import betaln, gammaln, logsumexp

from wmm import _kernels
from wmm.errors import EmptySupport, InvalidParameter
from wmm.rng import RandomStream
from wmm.sampling import EPS

TRUNCATE_BELOW = 40.0
# anchors of the importance-sampling mixture, as quantiles of the expansion terms
MIXTURE_LEVELS = np.linspace(0.05, 0.95, 10)
MIXTURE_SIZE = len(MIXTURE_LEVELS)


@dataclass(frozen=True)
class PriorSpec:
    """Prior on the root size: ``uniform`` on [u, v] or ``gaussian`` N(mu, sigma^2).

    ``support`` optionally restricts the integer grid; without it a Gaussian
    prior is evaluated on ``mu ± 40 sigma``.
    """

    kind: str
    a: float
    b: float
    support: Optional[tuple[int, int]] = None

    def __post_init__(self):
        if self.kind not in ("uniform", "gaussian"):
            raise InvalidParameter(f"unknown prior kind {self.kind!r}")
        if self.kind == "uniform" and not self.a < self.b:
            raise InvalidParameter("uniform prior needs u < v")
        if self.kind == "gaussian" and not self.b > 0:
            raise InvalidParameter("gaussian prior needs sigma > 0")
        if self.support is not None and self.support[0] > self.support[1]:
            raise InvalidParameter("support must satisfy z_min <= z_max")

    @classmethod
    def uniform(cls, u, v, support=None):
        return cls("uniform", float(u), float(v), support)

    @classmethod
    def gaussian(cls, mu, sigma, support=None):
        return cls("gaussian", float(mu), float(sigma), support)

    @classmethod
    def parse(cls, text: str) -> "PriorSpec":
        """Parse ``uniform:u,v`` or ``gauss:mu,sigma``."""
        try:
            kind, rest = text.split(":", 1)
            x, y = (float(t) for t in rest.split(","))
        except ValueError:
            raise InvalidParameter(f"cannot parse prior {text!r}") from None
        kind = kind.strip().lower()
        if kind in ("uniform", "unif"):
            return cls.uniform(x, y)
        if kind in ("gauss", "gaussian", "normal"):
            return cls.gaussian(x, y)
        raise InvalidParameter(f"unknown prior kind {kind!r}")

    def grid(self, lower: int) -> np.ndarray:
        if self.kind == "uniform":
            lo, hi = math.ceil(self.a), math.floor(self.b)
        else:
            lo, hi = math.floor(self.a - 40 * self.b), math.ceil(self.a + 40 * self.b)
        if self.support is not None:
            lo, hi = max(lo, self.support[0]), min(hi, self.support[1])
        lo = max(lo, int(lower), 0)
        if hi < lo:
            raise EmptySupport(f"prior support ends at {hi}, below the observed total {lower}")
        return np.arange(lo, hi + 1, dtype=np.int64)

    def log_density(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if self.kind == "uniform":
            return np.where((z >= self.a) & (z <= self.b), 0.0, -np.inf)
        return -0.5 * ((z - self.a) / self.b) ** 2


@dataclass(frozen=True)
class PosteriorGrid:
    z_values: np.ndarray
    log_pmf: np.ndarray
    mc_stderr: Optional[np.ndarray] = None

    @property
    def pmf(self) -> np.ndarray:
        return np.exp(self.log_pmf)


@dataclass(frozen=True)
class PosteriorSummary:
    mean: float
    sd: float
    mean_log: float
    quantile: Callable[[float], int]


def _finalize(z, logpost, stderr=None) -> PosteriorGrid:
    finite = np.isfinite(logpost)
    if not finite.any():
        raise EmptySupport("posterior has no mass on the grid")
    top = logpost[finite].max()
    keep = np.flatnonzero(logpost >= top - TRUNCATE_BELOW)
    sl = slice(keep[0], keep[-1] + 1)
    z, lp = z[sl], logpost[sl]
    lp = lp - logsumexp(lp)
    return PosteriorGrid(z, lp, None if stderr is None else stderr[sl])


def _check_hyper(**kw):
    for k, v in kw.items():
        if not (np.isfinite(v) and v > 0):
            raise InvalidParameter(f"{k} must be positive, got {v!r}")


def _check_counts(**kw):
    for k, v in kw.items():
        if v < 0 or int(v) != v:
            raise InvalidParameter(f"{k} must be a non-negative integer, got {v!r}")


def log_beta_binomial(k, n, alpha: float, beta: float):
    """Log pmf of the beta-binomial distribution; exactly ``-log(n + 1)`` when flat."""
    k = np.asarray(k, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    if alpha == 1.0 and beta == 1.0:
        out = -np.log(n + 1.0)
    else:
        out = (gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)
               + betaln(alpha + k, beta + n - k) - betaln(alpha, beta))
    return np.where((k >= 0) & (k <= n), out, -np.inf)


def posterior_simple(a: int, b: int, alpha_p: float, beta_p: float, alpha_q: float,
                     beta_q: float, prior: PriorSpec) -> PosteriorGrid:
    """Closed-form posterior of ``Z`` on the two-leaf tree, in log space.

    The trinomial coefficient splits as ``C(z, a) C(z - a, b)``; the second
    factor joins the ``q`` integral into a beta-binomial pmf of ``b`` given
    ``z - a``, which for a flat ``q`` prior does not depend on ``b`` at all.
    """
    _check_counts(a=a, b=b)
    _check_hyper(alpha_p=alpha_p, beta_p=beta_p, alpha_q=alpha_q, beta_q=beta_q)
    z = prior.grid(a + b)
    zf = z.astype(np.float64)
    lp = (gammaln(zf + 1.0) - gammaln(a + 1.0) - gammaln(zf - a + 1.0)
          + betaln(alpha_p + zf - a, beta_p + a) - betaln(alpha_p, beta_p)
          + log_beta_binomial(b, zf - a, alpha_q, beta_q)
          + prior.log_density(zf))
    return _finalize(z, lp)


def posterior_point_mass_q(a: int, b: int, alpha_p: float, beta_p: float, q: float,
                           prior: PriorSpec) -> PosteriorGrid:
    """Limit of :func:`posterior_simple` when the prior on ``q`` collapses onto ``q``."""
    _check_counts(a=a, b=b)
    _check_hyper(alpha_p=alpha_p, beta_p=beta_p)
    if not 0.0 < q < 1.0:
        raise InvalidParameter("q must lie in (0, 1)")
    z = prior.grid(a + b)
    zf = z.astype(np.float64)
    lp = (betaln(alpha_p + zf - a, beta_p + a)
          + b * math.log(q) + (zf - a - b) * math.log1p(-q)
          + gammaln(zf + 1.0) - gammaln(zf - a - b + 1.0)
          + prior.log_density(zf))
    return _finalize(z, lp)


@dataclass(frozen=True)
class HiddenHyper:
    alpha_p: float
    beta_p: float
    alpha_q: float
    beta_q: float
    alpha_r: float
    beta_r: float
    alpha_s: float
    beta_s: float

    @classmethod
    def from_sequence(cls, values):
        values = [float(v) for v in values]
        if len(values) != 8:
            raise InvalidParameter("hidden-node model needs 8 Beta hyperparameters")
        return cls(*values)


def _hidden_terms(k: int, tp, tq, ts) -> np.ndarray:
    """Log terms of the binomial expansion of ``E[(x + y)^k]`` under the tilted Betas."""
    jv = np.arange(k + 1, dtype=np.float64)
    return (gammaln(k + 1.0) - gammaln(jv + 1.0) - gammaln(k - jv + 1.0)
            + betaln(tp[0] + jv, tp[1] + k - jv) - betaln(*tp)
            + betaln(tq[0], tq[1] + jv) - betaln(*tq)
            + betaln(ts[0] + k - jv, ts[1]) - betaln(*ts))


def posterior_hidden(b: int, c: int, c_tilde: int, hyper: HiddenHyper, prior: PriorSpec,
                     mc_samples: int = 100_000, rng: Optional[RandomStream] = None,
                     batches: int = 20, method: str = "mc") -> PosteriorGrid:
    """Posterior of ``Z`` on the hidden-node tree.

    After the ``r`` integral (closed form) the posterior at ``z`` needs
    ``E[(x + y)^k]`` over ``(p, q, s)``, where ``x = p (1 - q)`` is the
    missed share through ``B~``, ``y = s (1 - p)`` the share lost to the
    hidden node and ``k = z - b - c - c~``. The count factors that do not
    depend on ``z`` are absorbed into the Beta parameters.

    ``method="exact"`` sums the finite binomial expansion of ``(x + y)^k``.
    ``method="mc"`` estimates the integral by importance sampling: for each
    ``z`` the proposal is an even mixture of the Betas tilted by
    ``x^j y^(k-j)`` at several quantiles ``j`` of the expansion terms, so
    the weights stay of order one. ``mc_stderr``
    holds the batch-means standard error of each log value. Grid points more
    than 50 log units below the mode are not sampled.
    """
    _check_counts(b=b, c=c, c_tilde=c_tilde)
    h = hyper
    _check_hyper(**vars(h))
    if method not in ("mc", "exact"):
        raise InvalidParameter(f"unknown method {method!r}")
    if method == "mc":
        if mc_samples < 10_000:
            raise InvalidParameter("mc_samples must be at least 10^4")
        if batches < 2 or mc_samples % batches:
            raise InvalidParameter("mc_samples must be a multiple of the batch count")
    obs = b + c + c_tilde
    a = c + c_tilde
    z = prior.grid(obs)
    zf = z.astype(np.float64)
    tp = (h.alpha_p + b, h.beta_p + a)
    tq = (h.alpha_q + b, h.beta_q)
    ts = (h.alpha_s, h.beta_s + a)

    const = (betaln(*tp) - betaln(h.alpha_p, h.beta_p)
             + betaln(*tq) - betaln(h.alpha_q, h.beta_q)
             + betaln(*ts) - betaln(h.alpha_s, h.beta_s)
             + betaln(h.alpha_r + c, h.beta_r + c_tilde) - betaln(h.alpha_r, h.beta_r))
    base = (const + gammaln(zf + 1.0) - gammaln(zf - obs + 1.0)
            - gammaln(b + 1.0) - gammaln(c + 1.0) - gammaln(c_tilde + 1.0)
            + prior.log_density(zf))

    log_int = np.array([logsumexp(_hidden_terms(int(k), tp, tq, ts)) for k in z - obs])
    exact = base + log_int
    if method == "exact":
        return _finalize(z, exact)

    rng = RandomStream(0, "hidden") if rng is None else rng
    finite = np.isfinite(exact)
    live = np.flatnonzero(finite & (exact >= exact[finite].max() - 50.0))
    ks = (z[live] - obs).astype(np.float64)
    js = np.empty((len(live), MIXTURE_SIZE))
    log_e = np.empty_like(js)
    for r, k in enumerate(ks):
        terms = _hidden_terms(int(k), tp, tq, ts)
        cdf = np.cumsum(np.exp(terms - terms.max()))
        anchors = np.searchsorted(cdf, MIXTURE_LEVELS * cdf[-1])
        js[r] = np.minimum(anchors, int(k))
        binom = gammaln(k + 1.0) - gammaln(js[r] + 1.0) - gammaln(k - js[r] + 1.0)
        log_e[r] = terms[js[r].astype(np.int64)] - binom
    kk = ks[:, None]
    prop = np.stack([tp[0] + js, tp[1] + kk - js, np.broadcast_to(tq[0], js.shape), tq[1] + js,
                     ts[0] + kk - js, np.broadcast_to(ts[1], js.shape)], axis=2)
    per_batch = _kernels.tilted_power_is(rng.next_key(), mc_samples, batches, prop, js, log_e,
                                         ks, EPS)
    lp = np.full(len(z), -np.inf)
    stderr = np.full(len(z), np.nan)
    lp[live] = base[live] + logsumexp(per_batch, axis=1) - math.log(batches)
    stderr[live] = per_batch.std(axis=1, ddof=1) / math.sqrt(batches)
    return _finalize(z, lp, stderr)


def posterior_moments(grid: PosteriorGrid) -> PosteriorSummary:
    pmf = grid.pmf
    pmf = pmf / pmf.sum()
    z = grid.z_values.astype(np.float64)
    mean = float(np.dot(pmf, z))
    var = float(np.dot(pmf, (z - mean) ** 2))
    mean_log = float(np.dot(pmf, np.log(np.maximum(z, 1e-300))))
    cdf = np.cumsum(pmf)
    zv = grid.z_values

    def quantile(prob: float) -> int:
        if not 0.0 <= prob <= 1.0:
            raise ValueError("probability must lie in [0, 1]")
        i = int(np.searchsorted(cdf, prob * cdf[-1], side="left"))
        return int(zv[min(i, len(zv) - 1)])

    return PosteriorSummary(mean, math.sqrt(max(var, 0.0)), mean_log, quantile)


def posterior_sample(grid: PosteriorGrid, rng: RandomStream, size: Optional[int] = None):
    """Inverse-cdf draws of ``Z`` from the grid."""
    n = 1 if size is None else int(size)
    cdf = np.cumsum(grid.pmf)
    u = rng.uniform(n) * cdf[-1]
    idx = np.minimum(np.searchsorted(cdf, u, side="left"), len(cdf) - 1)
    z = grid.z_values[idx]
    return int(z[0]) if size is None else z


def total_variation(g1: PosteriorGrid, g2: PosteriorGrid) -> float:
    lo = min(g1.z_values[0], g2.z_values[0])
    hi = max(g1.z_values[-1], g2.z_values[-1])
    x = np.zeros(hi - lo + 1)
    y = np.zeros(hi - lo + 1)
    x[g1.z_values - lo] = g1.pmf
    y[g2.z_values - lo] = g2.pmf
    return 0.5 * float(np.abs(x - y).sum())
