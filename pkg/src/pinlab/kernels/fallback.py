"""Pure-Python reference kernels.

These implement exactly the same arithmetic, in the same order, as the
compiled extension (_core.pyx); the compiled module is selected at import
when available and must agree bit-for-bit on every code path (enforced by
tests/test_kernels.py).  The fallback is intended for small workloads and
for auditing the hot loops.
"""

from __future__ import annotations

import math

import numpy as np

from ..rng import hash64, uniform, uniform_array
from ..distributions import (
    OVERFLOW_GEOMETRIC,
    OVERFLOW_NONE,
    OVERFLOW_ZETA,
    invert_uniform,
    zeta_tail_em,
)

BACKEND = "fallback"

LAM_CLAMP = 0
LAM_TANH = 1

_BIN = 64           # sites per selection bin
_REFRESH = 1 << 16  # exact rate refresh cadence (events)


def backend_name() -> str:
    return BACKEND


# ---------------------------------------------------------------------------
# quenched field


def strength_grid(seed, stream, i0, j0, ni, nj, plan) -> np.ndarray:
    """Field strengths on the rectangle [i0, i0+ni) x [j0, j0+nj)."""
    ii = np.arange(i0, i0 + ni, dtype=np.int64)[:, None]
    jj = np.arange(j0, j0 + nj, dtype=np.int64)[None, :]
    u = uniform_array(seed, stream, ii, jj)
    return invert_uniform(plan, u)


def _site_strength(seed, stream, i, j, plan) -> int:
    u = uniform(seed, stream, i, j)
    k = int(np.searchsorted(plan.cdf, u, side="right"))
    if k > plan.cap:
        k = _overflow_scalar(plan, u)
    return k


def _overflow_scalar(plan, u) -> int:
    t = 1.0 - u
    if plan.overflow_kind == OVERFLOW_GEOMETRIC:
        p = plan.param0
        alpha = lambda j: (1.0 - p) ** j
    elif plan.overflow_kind == OVERFLOW_ZETA:
        s, z = plan.param0, plan.param1
        alpha = lambda j: zeta_tail_em(s, float(j)) / z
    else:
        raise ValueError("uniform beyond a complete table")
    lo = plan.cap + 1
    hi = lo
    while alpha(hi) >= t:
        hi *= 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if alpha(mid) >= t:
            lo = mid
        else:
            hi = mid
    return hi - 1


# ---------------------------------------------------------------------------
# jump-rate function


def lam_value(kind, p0, p1, k) -> float:
    """Rate response to the integer argument k; Lambda(0) = 0 exactly."""
    if kind == LAM_CLAMP:
        if k == 0:
            return 0.0
        a = -k if k < 0 else k
        if a > 1100:
            a = 1100
        mag = p0 * (1.0 - math.ldexp(1.0, -a))
        return -mag if k < 0 else mag
    if kind == LAM_TANH:
        return p0 * math.tanh(p1 * k)
    raise ValueError(f"unknown rate-function kind {kind}")


# ---------------------------------------------------------------------------
# kinetic Monte Carlo


def kmc_run(
    u0,
    seed,
    field_stream,
    plan,
    lam_kind,
    lam_p0,
    lam_p1,
    F,
    dyn_seed,
    dyn_stream,
    start_event,
    max_events,
    max_time,
    height_cap,
    barrier,
    record_every,
    t0=0.0,
):
    """Event-driven simulation of the jump process on a periodic window.

    Returns a dict with the final state, trajectory series and stop reason.
    Mirrored exactly by the compiled kernel.
    """
    u = np.array(u0, dtype=np.int64)
    W = len(u)
    nb = (W + _BIN - 1) // _BIN
    has_cap = height_cap is not None
    cap = height_cap if has_cap else 0
    has_barrier = barrier is not None
    vbar = np.asarray(barrier, dtype=np.int64) if has_barrier else None
    has_tmax = max_time is not None
    tmax = max_time if has_tmax else 0.0

    rates = np.zeros(W, dtype=np.float64)
    bins = np.zeros(nb, dtype=np.float64)

    def site_rate(i):
        d1 = u[(i + 1) % W] + u[(i - 1) % W] - 2 * u[i]
        f = _site_strength(seed, field_stream, i, int(u[i]), plan)
        return lam_value(lam_kind, lam_p0, lam_p1, int(d1) - f + F)

    def refresh():
        total = 0.0
        for b in range(nb):
            sb = 0.0
            for i in range(b * _BIN, min((b + 1) * _BIN, W)):
                r = site_rate(i)
                rates[i] = r
                sb += abs(r)
            bins[b] = sb
            total += sb
        return total

    total = refresh()

    ts, maxs, means, evs = [], [], [], []

    def record(t, ev):
        ts.append(t)
        maxs.append(int(u.max()))
        s = 0
        for i in range(W):
            s += int(u[i])
        means.append(s / W)
        evs.append(ev)

    t = t0
    ev = start_event
    end_event = start_event + max_events
    stop = "max_events"
    violation_site = -1
    record(t, ev)

    while ev < end_event:
        if (ev - start_event) > 0 and (ev - start_event) % _REFRESH == 0:
            total = refresh()
        if total <= 0.0:
            stop = "frozen"
            break
        u1 = uniform(dyn_seed, dyn_stream, ev, 0)
        dt = -math.log1p(-u1) / total
        if has_tmax and t + dt > tmax:
            t = tmax
            stop = "max_time"
            break
        t += dt

        u2 = uniform(dyn_seed, dyn_stream, ev, 1)
        target = u2 * total
        site = -1
        acc = 0.0
        for b in range(nb):
            if target < acc + bins[b]:
                for i in range(b * _BIN, min((b + 1) * _BIN, W)):
                    acc += abs(rates[i])
                    if target < acc:
                        site = i
                        break
                if site >= 0:
                    break
                # stale bin sum: fall through into the next bin
            else:
                acc += bins[b]
        if site < 0:
            total = refresh()
            if total <= 0.0:
                stop = "frozen"
                break
            acc = 0.0
            for i in range(W):
                acc += abs(rates[i])
                if target < acc:
                    site = i
                    break
            if site < 0:
                site = W - 1
                while site > 0 and rates[site] == 0.0:
                    site -= 1

        step = 1 if rates[site] > 0.0 else -1
        u[site] += step
        ev += 1

        for j in (site - 1, site, site + 1):
            jj = j % W
            r = site_rate(jj)
            b = jj // _BIN
            bins[b] += abs(r) - abs(rates[jj])
            total += abs(r) - abs(rates[jj])
            rates[jj] = r

        if has_barrier and u[site] > vbar[site]:
            violation_site = site
            stop = "violation"
            record(t, ev)
            break
        if has_cap and u[site] >= cap:
            stop = "height_cap"
            record(t, ev)
            break
        if record_every > 0 and (ev - start_event) % record_every == 0:
            record(t, ev)

    if stop in ("max_events", "frozen", "max_time"):
        record(t, ev)

    return {
        "u": u,
        "t": t,
        "events": ev,
        "stop": stop,
        "violation_site": violation_site,
        "series_t": np.array(ts),
        "series_max": np.array(maxs, dtype=np.int64),
        "series_mean": np.array(means),
        "series_ev": np.array(evs, dtype=np.int64),
    }


# ---------------------------------------------------------------------------
# explicit finite differences (1d periodic)


def bump_profile(dy, rho, rho_p) -> float:
    """Quintic plateau factor: 1 on [-rho, rho], 0 outside [-rho_p, rho_p]."""
    a = -dy if dy < 0.0 else dy
    if a <= rho:
        return 1.0
    if a >= rho_p:
        return 0.0
    w = (rho_p - a) / (rho_p - rho)
    return (w * w * w) * (10.0 + w * (-15.0 + 6.0 * w))


def pde_run(
    u0,
    dx,
    dt,
    n_steps,
    F,
    col_ptr,
    cand_y,
    cand_sbx,
    rho,
    rho_p,
    v,
    record_every,
    viol_tol,
    t0=0.0,
):
    """Forward-Euler integration of du/dt = lap(u) - f(x, u) + F.

    Obstacle candidates are stored per grid column (CSR layout), sorted by
    centre height; cand_sbx carries strength * bump_x premultiplied.
    Tracks sup(u - v) when a barrier profile v is supplied.
    """
    u = np.array(u0, dtype=np.float64)
    N = len(u)
    inv_dx2 = 1.0 / (dx * dx)
    has_v = v is not None
    vv = np.asarray(v, dtype=np.float64) if has_v else None

    sup_diff = -math.inf
    first_violation = -1
    stop = "steps"

    ts, maxs, means, sups = [], [], [], []

    def record(t):
        ts.append(t)
        mx = -math.inf
        s = 0.0
        for i in range(N):
            if u[i] > mx:
                mx = u[i]
            s += u[i]
        maxs.append(mx)
        means.append(s / N)
        sups.append(sup_diff)

    t = t0
    record(t)
    unew = np.empty_like(u)
    steps_done = 0
    errstate = np.errstate(over="ignore", invalid="ignore")
    errstate.__enter__()
    for step in range(n_steps):
        for i in range(N):
            im1 = i - 1 if i > 0 else N - 1
            ip1 = i + 1 if i < N - 1 else 0
            lap = (u[im1] + u[ip1] - 2.0 * u[i]) * inv_dx2
            f = 0.0
            ui = u[i]
            for k in range(col_ptr[i], col_ptr[i + 1]):
                dy = ui - cand_y[k]
                if dy <= -rho_p:
                    break  # candidates are height-sorted; the rest are above reach
                a = -dy if dy < 0.0 else dy
                if a < rho_p:
                    f += cand_sbx[k] * bump_profile(dy, rho, rho_p)
            unew[i] = u[i] + dt * (lap - f + F)
        u, unew = unew, u
        t = t0 + (step + 1) * dt
        steps_done = step + 1

        if has_v:
            d = -math.inf
            for i in range(N):
                di = u[i] - vv[i]
                if di > d:
                    d = di
            if d > sup_diff:
                sup_diff = d
            if first_violation < 0 and d > viol_tol:
                first_violation = steps_done

        if record_every > 0 and steps_done % record_every == 0:
            if not np.all(np.isfinite(u)):
                stop = "blowup"
                record(t)
                break
            record(t)

    errstate.__exit__(None, None, None)
    if stop != "blowup":
        if not np.all(np.isfinite(u)):
            stop = "blowup"
        record(t)

    return {
        "u": u,
        "t": t,
        "steps": steps_done,
        "stop": stop,
        "sup_diff": sup_diff,
        "first_violation_step": first_violation,
        "series_t": np.array(ts),
        "series_max": np.array(maxs),
        "series_mean": np.array(means),
        "series_sup": np.array(sups),
    }


# ---------------------------------------------------------------------------
# M-statistic batches


def mstat_runmax(seed, stream, sample_base, n_samples, j_checks, plan, thresholds):
    """Running max of (X_j - j) recorded at truncation checkpoints.

    thresholds[k] = P(X <= k) precomputed out to beyond max(j_checks); used
    for a one-compare skip so only improving draws are fully inverted.
    """
    j_checks = np.asarray(j_checks, dtype=np.int64)
    n_checks = len(j_checks)
    jmax = int(j_checks.max())
    L = len(thresholds)
    out = np.empty((n_samples, n_checks), dtype=np.int64)
    for s in range(n_samples):
        cur = -(1 << 62)
        ci = 0
        for j in range(jmax + 1):
            u = uniform(seed, stream, sample_base + s, j)
            idx = cur + j
            if idx < 0 or (idx < L and u >= thresholds[idx]) or (idx >= L and _beyond(plan, idx, u)):
                x = int(np.searchsorted(plan.cdf, u, side="right"))
                if x > plan.cap:
                    x = _overflow_scalar(plan, u)
                if x - j > cur:
                    cur = x - j
            while ci < n_checks and j == j_checks[ci]:
                out[s, ci] = cur
                ci += 1
    return out


def _beyond(plan, idx, u) -> bool:
    # quick test P(X <= idx) <= u without a table entry
    if plan.overflow_kind == OVERFLOW_GEOMETRIC:
        alpha = (1.0 - plan.param0) ** (idx + 1)
    elif plan.overflow_kind == OVERFLOW_ZETA:
        alpha = zeta_tail_em(plan.param0, float(idx + 1)) / plan.param1
    else:
        return False
    return u >= 1.0 - alpha
