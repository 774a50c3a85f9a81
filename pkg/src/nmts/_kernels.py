"""Compiled trajectory loops.

These kernels fuse the per-iteration work of the drivers (inner draws, batch
means, coupled update, checkpoint metrics) into a single nopython loop so that
million-iteration runs stay affordable.  They consume the same Philox
generator a pure-Python run would and replicate its arithmetic operation for
operation (sequential bin sums, sequential reductions, identical clamp
expressions), so both engines produce the same trajectories up to floating
point rounding; equivalence is pinned by tests.

Model dispatch is by integer code (0 = location, 1 = linear-latent); only the
bundled scalar-parameter models are supported here, the pure-Python engine
covers anything else.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_MODEL_CODES = {"location": 0, "linear-latent": 1}


def _sorted_obs(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(values, kind="stable")
    rank = np.empty(len(values), dtype=np.int64)
    rank[order] = np.arange(len(values))
    return values[order], rank


@njit(cache=True)
def _batch_means(gen, model_code, n_inner, theta, y_sorted, g1s, g2s):
    """Fill g1s/g2s with sorted-order per-observation batch means."""
    t_obs = y_sorted.shape[0]
    acc1 = np.zeros(t_obs + 1)
    acc2 = np.zeros(t_obs + 1)
    if model_code == 0:
        x = gen.standard_normal(size=(n_inner, 1))
        for i in range(n_inner):
            x0 = x[i, 0]
            s = x0 + theta
            j = np.searchsorted(y_sorted, s, side="left")
            acc1[j] += 1.0 - x0 * x0
            acc2[j] += -x0
    else:
        x = gen.standard_normal(size=(n_inner, 2))
        for i in range(n_inner):
            x0 = x[i, 0]
            x1 = x[i, 1]
            s = x0 + theta * x1
            j = np.searchsorted(y_sorted, s, side="left")
            acc1[j] += x1 * (1.0 - x0 * x0)
            acc2[j] += -x0
    run1 = 0.0
    run2 = 0.0
    for t in range(t_obs):
        run1 += acc1[t]
        run2 += acc2[t]
        g1s[t] = run1 / n_inner
        g2s[t] = run2 / n_inner


@njit(cache=True)
def _score(model_code, y, theta):
    if model_code == 0:
        return y - theta
    s2 = 1.0 + theta * theta
    return theta * (y * y - s2) / (s2 * s2)


@njit(cache=True)
def _mle_loop(
    gen,
    y_sorted,
    rank,
    y_orig,
    theta0,
    lo,
    hi,
    iterations,
    n_inner,
    k_start,
    poly,
    alpha0,
    a,
    beta0,
    b,
    is_nmts,
    freeze,
    model_code,
    ck,
    out_theta,
    out_resid,
    out_proj,
):
    t_obs = y_sorted.shape[0]
    theta = theta0
    d_tracker = np.zeros(t_obs)
    g1s = np.empty(t_obs)
    g2s = np.empty(t_obs)
    ci = 0
    for j in range(1, iterations + 1):
        k = k_start + j - 1
        base = float(k) if poly else k * np.log(k + 1.0)
        alpha = alpha0 / base**a
        beta = beta0 / base**b
        _batch_means(gen, model_code, n_inner, theta, y_sorted, g1s, g2s)
        drift = 0.0
        if is_nmts:
            for t in range(t_obs):
                dd = d_tracker[t]
                drift += dd
                d_tracker[t] = dd + alpha * (g1s[rank[t]] - g2s[rank[t]] * dd)
        else:
            for t in range(t_obs):
                g1 = g1s[rank[t]]
                g2 = g2s[rank[t]]
                if g2 != 0.0:
                    drift += g1 / g2
                elif g1 != 0.0:
                    return k
        if not np.isfinite(drift):
            return k
        proj = 0.0
        if not freeze:
            raw = theta + beta * drift
            if not np.isfinite(raw):
                return k
            theta = min(max(raw, lo), hi)
            proj = 1.0 if theta != raw else 0.0
        if ci < ck.shape[0] and j == ck[ci]:
            out_theta[ci] = theta
            if is_nmts:
                worst = 0.0
                for t in range(t_obs):
                    r = abs(d_tracker[t] - _score(model_code, y_orig[t], theta))
                    if r > worst:
                        worst = r
                out_resid[ci] = worst
            out_proj[ci] = proj
            ci += 1
    return -1


def run_mle_kernel(model, config, variant, ck, rng, freeze_theta):
    """Wrapper shaping config fields for :func:`_mle_loop`."""
    y = config.observations.values
    y_sorted, rank = _sorted_obs(y)
    n = len(ck)
    out_theta = np.full(n, np.nan)
    out_resid = np.full(n, np.nan)
    out_proj = np.full(n, np.nan)
    sched = config.schedule
    abort_iter = _mle_loop(
        rng,
        y_sorted,
        rank,
        y,
        float(config.theta0[0]),
        float(config.box.lower[0]),
        float(config.box.upper[0]),
        config.iterations,
        config.n_inner,
        sched.start_index,
        sched.kind == "polynomial",
        sched.alpha0,
        sched.a,
        sched.beta0,
        sched.b,
        variant == "nmts",
        freeze_theta,
        _MODEL_CODES[config.model],
        np.asarray(ck, dtype=np.int64),
        out_theta,
        out_resid,
        out_proj,
    )
    return out_theta, out_resid, out_proj, abort_iter


@njit(cache=True)
def _pde_loop(
    gen,
    y_sorted,
    rank,
    y_orig,
    u,
    mu0,
    sg0,
    mu_lo,
    mu_hi,
    sg_lo,
    sg_hi,
    iterations,
    n_inner,
    k_start,
    poly,
    alpha0,
    a,
    beta0,
    b,
    is_nmts,
    ck,
    out_mu,
    out_sg,
    out_sk,
    out_block,
    out_proj,
):
    t_obs = y_sorted.shape[0]
    m_outer = u.shape[0]
    mu = mu0
    sg = sg0
    d_blocks = np.zeros((m_outer, t_obs))
    g1s = np.empty(t_obs)
    g2s = np.empty(t_obs)
    ysum = 0.0
    for t in range(t_obs):
        ysum += y_orig[t]
    ci = 0
    for j in range(1, iterations + 1):
        k = k_start + j - 1
        base = float(k) if poly else k * np.log(k + 1.0)
        alpha = alpha0 / base**a
        beta = beta0 / base**b
        s0 = 0.0
        s1 = 0.0
        for m in range(m_outer):
            theta_m = mu + sg * u[m]
            _batch_means(gen, 0, n_inner, theta_m, y_sorted, g1s, g2s)
            prior = -theta_m
            varsc = -(theta_m - mu) / (sg * sg)
            if is_nmts:
                block = 0.0
                for t in range(t_obs):
                    dd = d_blocks[m, t]
                    block += dd
                    d_blocks[m, t] = dd + alpha * (g1s[rank[t]] - g2s[rank[t]] * dd)
                v = block + prior - varsc
            else:
                ratio_sum = 0.0
                for t in range(t_obs):
                    g1 = g1s[rank[t]]
                    g2 = g2s[rank[t]]
                    if g2 != 0.0:
                        ratio_sum += g1 / g2
                    elif g1 != 0.0:
                        return k
                v = ratio_sum + prior - varsc
            s0 += v
            s1 += u[m] * v
        s0 /= m_outer
        s1 /= m_outer
        if not (np.isfinite(s0) and np.isfinite(s1)):
            return k
        raw_mu = mu + beta * s0
        raw_sg = sg + beta * s1
        if not (np.isfinite(raw_mu) and np.isfinite(raw_sg)):
            return k
        new_mu = min(max(raw_mu, mu_lo), mu_hi)
        new_sg = min(max(raw_sg, sg_lo), sg_hi)
        proj = 1.0 if (new_mu != raw_mu or new_sg != raw_sg) else 0.0
        mu = new_mu
        sg = new_sg
        if ci < ck.shape[0] and j == ck[ci]:
            out_mu[ci] = mu
            out_sg[ci] = sg
            if is_nmts:
                p0 = 0.0
                p1 = 0.0
                q0 = 0.0
                q1 = 0.0
                worst = 0.0
                for m in range(m_outer):
                    theta_m = mu + sg * u[m]
                    block = 0.0
                    for t in range(t_obs):
                        block += d_blocks[m, t]
                        r = abs(d_blocks[m, t] - (y_orig[t] - theta_m))
                        if r > worst:
                            worst = r
                    v = block - theta_m + (theta_m - mu) / (sg * sg)
                    p0 += v
                    p1 += u[m] * v
                    bracket = (ysum - t_obs * theta_m) - theta_m + (theta_m - mu) / (sg * sg)
                    q0 += bracket
                    q1 += u[m] * bracket
                p0 /= m_outer
                p1 /= m_outer
                q0 /= m_outer
                q1 /= m_outer
                out_sk[ci] = np.sqrt((p0 - q0) ** 2 + (p1 - q1) ** 2)
                out_block[ci] = worst
            out_proj[ci] = proj
            ci += 1
    return -1


def run_pde_kernel(config, variant, ck, rng, outer):
    """Wrapper shaping config fields for :func:`_pde_loop`."""
    y = config.observations.values
    y_sorted, rank = _sorted_obs(y)
    n = len(ck)
    out_mu = np.full(n, np.nan)
    out_sg = np.full(n, np.nan)
    out_sk = np.full(n, np.nan)
    out_block = np.full(n, np.nan)
    out_proj = np.full(n, np.nan)
    sched = config.schedule
    abort_iter = _pde_loop(
        rng,
        y_sorted,
        rank,
        y,
        np.asarray(outer.u, dtype=float),
        float(config.lambda0[0]),
        float(config.lambda0[1]),
        float(config.box.lower[0]),
        float(config.box.upper[0]),
        float(config.box.lower[1]),
        float(config.box.upper[1]),
        config.iterations,
        config.n_inner,
        sched.start_index,
        sched.kind == "polynomial",
        sched.alpha0,
        sched.a,
        sched.beta0,
        sched.b,
        variant == "nmts",
        np.asarray(ck, dtype=np.int64),
        out_mu,
        out_sg,
        out_sk,
        out_block,
        out_proj,
    )
    return out_mu, out_sg, out_sk, out_block, out_proj, abort_iter
