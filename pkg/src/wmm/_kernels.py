"""Hot numeric kernels, each with a numba and a pure-numpy implementation.

Random draws come from SplitMix64 counter streams. Every (run, sibling
group) pair owns its own stream keyed by a hash of the master key, so a
draw never depends on how runs are scheduled across threads. Both backends
consume each stream in the same order; they agree to within libm rounding.
"""

import math
import types

import numpy as np

from wmm import _backend

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
TWO_M53 = 1.0 / 9007199254740992.0
TWO_PI = 2.0 * math.pi

MAX_PROPOSALS = 100_000


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def _mix_np(z):
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def lane_keys_np(base, runs, group):
    runs = np.asarray(runs, dtype=np.uint64)
    with np.errstate(over="ignore"):
        k = _mix_np(np.uint64(base) + _mix_np(runs + _ONE))
        k = _mix_np(k + _mix_np(np.full_like(runs, np.uint64(group)) + _ONE + GOLDEN))
    return k


def _uniform_np(state):
    with np.errstate(over="ignore"):
        state = state + GOLDEN
    z = _mix_np(state)
    return ((z >> _S11).astype(np.float64) + 0.5) * TWO_M53, state


def gamma_np(alpha, state):
    """Marsaglia-Tsang gamma draws for every lane of ``state``.

    ``alpha`` is a scalar or one shape per lane.
    """
    n = state.shape[0]
    out = np.empty(n)
    state = state.copy()
    alpha = np.broadcast_to(np.asarray(alpha, dtype=np.float64), (n,))
    small = alpha < 1.0
    d = np.where(small, alpha + 1.0, alpha) - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    pending = np.arange(n)
    while pending.size:
        st = state[pending]
        u1, st = _uniform_np(st)
        u2, st = _uniform_np(st)
        x = np.sqrt(-2.0 * np.log(u1)) * np.cos(TWO_PI * u2)
        v = 1.0 + c[pending] * x
        live = v > 0.0
        state[pending] = st
        idx = pending[live]
        x = x[live]
        v = v[live] ** 3
        u, st2 = _uniform_np(state[idx])
        state[idx] = st2
        ok = u < 1.0 - 0.0331 * x ** 4
        rest = ~ok
        with np.errstate(divide="ignore", invalid="ignore"):
            ok[rest] = np.log(u[rest]) < 0.5 * x[rest] ** 2 + d[idx][rest] * (
                1.0 - v[rest] + np.log(v[rest]))
        out[idx[ok]] = d[idx[ok]] * v[ok]
        done = np.zeros(n, dtype=bool)
        done[idx[ok]] = True
        pending = pending[~done[pending]]
    if small.any():
        lanes = np.flatnonzero(small)
        u, st = _uniform_np(state[lanes])
        state[lanes] = st
        out[lanes] *= u ** (1.0 / alpha[lanes])
    return out, state


def sample_plan_np(base_key, n_runs, g_block_ptr, g_key, g_reject, b_branch_ptr,
                   b_rem_alpha, br_alpha, br_col, n_cols, eps, max_proposals):
    out = np.full((n_runs, n_cols), np.nan)
    proposals = np.zeros((n_runs, len(g_key)), dtype=np.int64)
    failed = np.zeros(n_runs, dtype=bool)
    for g in range(len(g_key)):
        state = lane_keys_np(base_key, np.arange(n_runs), g_key[g])
        pending = np.arange(n_runs)
        j0 = b_branch_ptr[g_block_ptr[g]]
        j1 = b_branch_ptr[g_block_ptr[g + 1]]
        while pending.size:
            proposals[pending, g] += 1
            vals = np.empty((j1 - j0, pending.size))
            total = np.zeros(pending.size)
            st = state[pending]
            for b in range(g_block_ptr[g], g_block_ptr[g + 1]):
                s = np.zeros(pending.size)
                for j in range(b_branch_ptr[b], b_branch_ptr[b + 1]):
                    gam, st = gamma_np(br_alpha[j], st)
                    vals[j - j0] = gam
                    s += gam
                if b_rem_alpha[b] > 0.0:
                    gam, st = gamma_np(b_rem_alpha[b], st)
                    s += gam
                for j in range(b_branch_ptr[b], b_branch_ptr[b + 1]):
                    vals[j - j0] /= s
                    total += vals[j - j0]
            state[pending] = st
            accept = total < 1.0 if g_reject[g] else np.ones(pending.size, dtype=bool)
            rows = pending[accept]
            for j in range(j0, j1):
                out[rows, br_col[j]] = np.clip(vals[j - j0][accept], eps, 1.0 - eps)
            pending = pending[~accept]
            stalled = proposals[pending, g] >= max_proposals
            if stalled.any():
                failed[pending[stalled]] = True
                pending = pending[~stalled]
    return out, proposals, failed


def jacobi_eigh_np(a, tol=1e-15, max_sweeps=100):
    a = np.array(a, dtype=np.float64, copy=True)
    n = a.shape[0]
    v = np.eye(n)
    scale = np.sum(a * a)
    for _ in range(max_sweeps):
        off = np.sum(a * a) - np.sum(np.diag(a) ** 2)
        if off <= tol * tol * scale or off == 0.0:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                diff = a[q, q] - a[p, p]
                if abs(apq) < 1e-150 * abs(diff):
                    # theta would overflow; tan of the rotation angle is apq / diff
                    t = apq / diff
                else:
                    theta = diff / (2.0 * apq)
                    t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def _batch_log_means(lw, n_b):
    lw = lw.reshape(n_b, -1)
    mx = lw.max(axis=1)
    return mx + np.log(np.exp(lw - mx[:, None]).mean(axis=1))


def tilted_power_is_np(base_key, n_samples, n_b, prop, js, log_e, ks, eps):
    """Mixture importance sampling for the hidden-node integral ``E[(x + y)^k]``.

    For grid point ``i`` component ``m`` draws ``(p, q, s)`` from the Betas in
    ``prop[i, m]``, which are the base Betas tilted by ``x^j y^(k-j)`` with
    ``j = js[i, m]``, ``x = p (1 - q)`` and ``y = s (1 - p)``; ``log_e[i, m]``
    is the log normaliser of that tilt. Draw ``n`` uses component
    ``n mod J`` and gets the balance-heuristic weight. Every grid point
    reuses the same lane keys. Returns per-batch log means.
    """
    n_z, n_m = js.shape
    out = np.empty((n_z, n_b))
    keys = lane_keys_np(base_key, np.arange(n_samples), 0)
    comp = np.arange(n_samples) % n_m
    for i in range(n_z):
        a = prop[i][comp]
        state = keys
        g = np.empty((6, n_samples))
        for c in range(6):
            g[c], state = gamma_np(a[:, c], state)
        p = np.clip(g[0] / (g[0] + g[1]), eps, 1.0 - eps)
        q = np.clip(g[2] / (g[2] + g[3]), eps, 1.0 - eps)
        sv = np.clip(g[4] / (g[4] + g[5]), eps, 1.0 - eps)
        lx = np.log(p) + np.log1p(-q)
        ly = np.log(sv) + np.log1p(-p)
        mix = (js[i][None, :] * lx[:, None] + (ks[i] - js[i][None, :]) * ly[:, None]
               - log_e[i][None, :])
        mx = mix.max(axis=1)
        lmix = mx + np.log(np.exp(mix - mx[:, None]).mean(axis=1))
        lw = ks[i] * np.logaddexp(lx, ly) - lmix
        out[i] = _batch_log_means(lw, n_b)
    return out


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if _backend.HAVE_NUMBA:
    from numba import njit, prange

    def _compile(func, name, parallel):
        """Compile ``func`` under its own name so both variants get their own cache entry."""
        clone = types.FunctionType(func.__code__, func.__globals__, name, func.__defaults__,
                                   func.__closure__)
        clone.__qualname__ = name
        return njit(cache=True, parallel=parallel, nogil=True)(clone)

    @njit(cache=True, inline="always")
    def _mix_nb(z):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
        return z ^ (z >> _S31)

    @njit(cache=True)
    def _lane_key_nb(base, run, group):
        k = _mix_nb(base + _mix_nb(np.uint64(run) + _ONE))
        return _mix_nb(k + _mix_nb(np.uint64(group) + _ONE + GOLDEN))

    @njit(cache=True, inline="always")
    def _uniform_nb(state):
        state = state + GOLDEN
        z = _mix_nb(state)
        return (np.float64(z >> _S11) + 0.5) * TWO_M53, state

    @njit(cache=True)
    def _gamma_nb(alpha, state):
        a = alpha + 1.0 if alpha < 1.0 else alpha
        d = a - 1.0 / 3.0
        c = 1.0 / math.sqrt(9.0 * d)
        while True:
            u1, state = _uniform_nb(state)
            u2, state = _uniform_nb(state)
            x = math.sqrt(-2.0 * math.log(u1)) * math.cos(TWO_PI * u2)
            v = 1.0 + c * x
            if v <= 0.0:
                continue
            v = v * v * v
            u, state = _uniform_nb(state)
            if u < 1.0 - 0.0331 * x ** 4:
                break
            if math.log(u) < 0.5 * x * x + d * (1.0 - v + math.log(v)):
                break
        g = d * v
        if alpha < 1.0:
            u, state = _uniform_nb(state)
            g *= u ** (1.0 / alpha)
        return g, state

    @njit(cache=True)
    def lane_keys_nb(base, runs, group):
        out = np.empty(runs.shape[0], dtype=np.uint64)
        for i in range(runs.shape[0]):
            out[i] = _lane_key_nb(base, runs[i], group)
        return out

    @njit(cache=True)
    def gamma_nb(alpha, state):
        out = np.empty(state.shape[0])
        new = state.copy()
        for i in range(state.shape[0]):
            out[i], new[i] = _gamma_nb(alpha, state[i])
        return out, new

    def _sample_plan_impl(base_key, n_runs, g_block_ptr, g_key, g_reject, b_branch_ptr,
                       b_rem_alpha, br_alpha, br_col, n_cols, eps, max_proposals):
        n_groups = g_key.shape[0]
        out = np.full((n_runs, n_cols), np.nan)
        proposals = np.zeros((n_runs, n_groups), dtype=np.int64)
        failed = np.zeros(n_runs, dtype=np.bool_)
        for m in prange(n_runs):
            for g in range(n_groups):
                state = _lane_key_nb(base_key, m, g_key[g])
                j0 = b_branch_ptr[g_block_ptr[g]]
                j1 = b_branch_ptr[g_block_ptr[g + 1]]
                n_prop = 0
                while True:
                    n_prop += 1
                    total = 0.0
                    for b in range(g_block_ptr[g], g_block_ptr[g + 1]):
                        s = 0.0
                        for j in range(b_branch_ptr[b], b_branch_ptr[b + 1]):
                            gam, state = _gamma_nb(br_alpha[j], state)
                            out[m, br_col[j]] = gam
                            s += gam
                        if b_rem_alpha[b] > 0.0:
                            gam, state = _gamma_nb(b_rem_alpha[b], state)
                            s += gam
                        for j in range(b_branch_ptr[b], b_branch_ptr[b + 1]):
                            out[m, br_col[j]] /= s
                            total += out[m, br_col[j]]
                    if not g_reject[g] or total < 1.0:
                        break
                    if n_prop >= max_proposals:
                        failed[m] = True
                        break
                proposals[m, g] = n_prop
                if failed[m]:
                    for j in range(j0, j1):
                        out[m, br_col[j]] = np.nan
                else:
                    for j in range(j0, j1):
                        p = out[m, br_col[j]]
                        out[m, br_col[j]] = min(max(p, eps), 1.0 - eps)
        return out, proposals, failed

    sample_plan_nb = _compile(_sample_plan_impl, "sample_plan_nb", parallel=True)
    sample_plan_serial_nb = _compile(_sample_plan_impl, "sample_plan_serial_nb", parallel=False)

    @njit(cache=True)
    def jacobi_eigh_nb(a_in, tol, max_sweeps):
        a = a_in.copy()
        n = a.shape[0]
        v = np.eye(n)
        scale = 0.0
        for i in range(n):
            for j in range(n):
                scale += a[i, j] * a[i, j]
        for _ in range(max_sweeps):
            off = 0.0
            for i in range(n):
                for j in range(n):
                    if i != j:
                        off += a[i, j] * a[i, j]
            if off <= tol * tol * scale or off == 0.0:
                break
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = a[p, q]
                    if apq == 0.0:
                        continue
                    diff = a[q, q] - a[p, p]
                    if abs(apq) < 1e-150 * abs(diff):
                        t = apq / diff
                    else:
                        theta = diff / (2.0 * apq)
                        sgn = 1.0 if theta >= 0.0 else -1.0
                        t = sgn / (abs(theta) + math.hypot(theta, 1.0))
                    c = 1.0 / math.sqrt(t * t + 1.0)
                    s = t * c
                    for k in range(n):
                        akp = a[k, p]
                        akq = a[k, q]
                        a[k, p] = c * akp - s * akq
                        a[k, q] = s * akp + c * akq
                    for k in range(n):
                        apk = a[p, k]
                        aqk = a[q, k]
                        a[p, k] = c * apk - s * aqk
                        a[q, k] = s * apk + c * aqk
                    for k in range(n):
                        vkp = v[k, p]
                        vkq = v[k, q]
                        v[k, p] = c * vkp - s * vkq
                        v[k, q] = s * vkp + c * vkq
        w = np.empty(n)
        for i in range(n):
            w[i] = a[i, i]
        order = np.argsort(w, kind="mergesort")
        return w[order], v[:, order]

    @njit(cache=True, inline="always")
    def _beta_nb(a, b, state, eps):
        ga, state = _gamma_nb(a, state)
        gb, state = _gamma_nb(b, state)
        return min(max(ga / (ga + gb), eps), 1.0 - eps), state

    def _tilted_power_is_impl(base_key, n_samples, n_b, prop, js, log_e, ks, eps):
        n_z, n_m = js.shape
        out = np.empty((n_z, n_b))
        per = n_samples // n_b
        for i in prange(n_z):
            k = ks[i]
            lw = np.empty(n_samples)
            mix = np.empty(n_m)
            for n in range(n_samples):
                m = n % n_m
                state = _lane_key_nb(base_key, n, 0)
                p, state = _beta_nb(prop[i, m, 0], prop[i, m, 1], state, eps)
                q, state = _beta_nb(prop[i, m, 2], prop[i, m, 3], state, eps)
                sv, state = _beta_nb(prop[i, m, 4], prop[i, m, 5], state, eps)
                lx = math.log(p) + math.log1p(-q)
                ly = math.log(sv) + math.log1p(-p)
                hi = max(lx, ly)
                lxy = hi + math.log1p(math.exp(min(lx, ly) - hi))
                mx = -np.inf
                for c in range(n_m):
                    mix[c] = js[i, c] * lx + (k - js[i, c]) * ly - log_e[i, c]
                    if mix[c] > mx:
                        mx = mix[c]
                acc = 0.0
                for c in range(n_m):
                    acc += math.exp(mix[c] - mx)
                lw[n] = k * lxy - (mx + math.log(acc / n_m))
            for b in range(n_b):
                mx = -np.inf
                for n in range(b * per, (b + 1) * per):
                    if lw[n] > mx:
                        mx = lw[n]
                acc = 0.0
                for n in range(b * per, (b + 1) * per):
                    acc += math.exp(lw[n] - mx)
                out[i, b] = mx + math.log(acc / per)
        return out

    tilted_power_is_nb = _compile(_tilted_power_is_impl, "tilted_power_is_nb", parallel=True)
    tilted_power_is_serial_nb = _compile(_tilted_power_is_impl, "tilted_power_is_serial_nb",
                                         parallel=False)


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def _use_numba():
    return _backend.get_backend() == "numba"


def lane_keys(base, runs, group):
    runs = np.ascontiguousarray(runs, dtype=np.int64)
    if _use_numba():
        return lane_keys_nb(np.uint64(base), runs, np.int64(group))
    return lane_keys_np(base, runs, group)


def gamma(alpha, state):
    state = np.ascontiguousarray(state, dtype=np.uint64)
    if _use_numba():
        return gamma_nb(float(alpha), state)
    return gamma_np(float(alpha), state)


def sample_plan(base_key, n_runs, plan, eps, max_proposals=MAX_PROPOSALS):
    args = (np.uint64(base_key), int(n_runs), plan.g_block_ptr, plan.g_key, plan.g_reject,
            plan.b_branch_ptr, plan.b_rem_alpha, plan.br_alpha, plan.br_col,
            int(plan.n_cols), float(eps), int(max_proposals))
    if _use_numba():
        if _backend.serial_kernels_active():
            return sample_plan_serial_nb(*args)
        _backend.apply_thread_cap()
        return sample_plan_nb(*args)
    return sample_plan_np(*args)


def jacobi_eigh(a, tol=1e-15, max_sweeps=100):
    a = np.ascontiguousarray(a, dtype=np.float64)
    if _use_numba():
        return jacobi_eigh_nb(a, float(tol), int(max_sweeps))
    return jacobi_eigh_np(a, tol, max_sweeps)


def tilted_power_is(base_key, n_samples, n_batches, prop, js, log_e, ks, eps):
    args = (np.uint64(base_key), int(n_samples), int(n_batches),
            np.ascontiguousarray(prop, dtype=np.float64),
            np.ascontiguousarray(js, dtype=np.float64),
            np.ascontiguousarray(log_e, dtype=np.float64),
            np.ascontiguousarray(ks, dtype=np.float64), float(eps))
    if _use_numba():
        if _backend.serial_kernels_active():
            return tilted_power_is_serial_nb(*args)
        _backend.apply_thread_cap()
        return tilted_power_is_nb(*args)
    return tilted_power_is_np(*args)
