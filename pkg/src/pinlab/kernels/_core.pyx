# cython: boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled hot kernels: quenched-field sampling, kinetic Monte Carlo,
explicit finite differences, M-statistic batches.

Must agree bit-for-bit with kernels/fallback.py on every code path; any
change here needs the matching change there (and vice versa).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, fabs, ldexp, log1p, tanh, pow as cpow

cnp.import_array()

BACKEND = "compiled"

LAM_CLAMP = 0
LAM_TANH = 1

cdef long long _BIN = 64
cdef long long _REFRESH = 1 << 16

cdef unsigned long long _GOLDEN = 0x9E3779B97F4A7C15ULL
cdef unsigned long long _MIX1 = 0xBF58476D1CE4E5B9ULL
cdef unsigned long long _MIX2 = 0x94D049BB133111EBULL
cdef double _INV53 = 1.0 / 9007199254740992.0


def backend_name():
    return BACKEND


cdef inline unsigned long long _mix(unsigned long long z) nogil:
    z = (z ^ (z >> 30)) * _MIX1
    z = (z ^ (z >> 27)) * _MIX2
    return z ^ (z >> 31)


cdef inline unsigned long long _absorb(unsigned long long z, unsigned long long w) nogil:
    return _mix(z + _GOLDEN + w)


cdef inline unsigned long long _hash64(unsigned long long seed, long long stream,
                                       long long a, long long b) nogil:
    cdef unsigned long long z = seed
    z = _absorb(z, <unsigned long long> stream)
    z = _absorb(z, <unsigned long long> a)
    z = _absorb(z, <unsigned long long> b)
    return z


cdef inline double _uniform(unsigned long long seed, long long stream,
                            long long a, long long b) nogil:
    return <double> (_hash64(seed, stream, a, b) >> 11) * _INV53


def hash64(seed, stream, a, b):
    """Scalar hash, exposed for parity tests."""
    return int(_hash64(<unsigned long long> (seed & 0xFFFFFFFFFFFFFFFF),
                       <long long> stream, <long long> a, <long long> b))


def uniform(seed, stream, a, b):
    return _uniform(<unsigned long long> (seed & 0xFFFFFFFFFFFFFFFF),
                    <long long> stream, <long long> a, <long long> b)


cdef inline long long _upper_bound(double[::1] cdf, double u) nogil:
    # np.searchsorted(cdf, u, side="right"): first index with cdf[idx] > u
    cdef long long lo = 0, hi = cdf.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if cdf[mid] <= u:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef inline double _em_zeta_tail(double s, double j) nogil:
    cdef double t = cpow(j, 1.0 - s) / (s - 1.0)
    t += 0.5 * cpow(j, -s)
    t += s * cpow(j, -s - 1.0) / 12.0
    t -= s * (s + 1.0) * (s + 2.0) * cpow(j, -s - 3.0) / 720.0
    return t


cdef inline double _overflow_alpha(int kind, double p0, double p1, long long j) nogil:
    if kind == 1:   # geometric
        return cpow(1.0 - p0, <double> j)
    return _em_zeta_tail(p0, <double> j) / p1  # zeta


cdef long long _overflow_invert(long long cap, int kind, double p0, double p1, double u) nogil:
    cdef double t = 1.0 - u
    cdef long long lo = cap + 1, hi = cap + 1, mid
    while _overflow_alpha(kind, p0, p1, hi) >= t:
        hi *= 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _overflow_alpha(kind, p0, p1, mid) >= t:
            lo = mid
        else:
            hi = mid
    return hi - 1


cdef inline long long _invert(double[::1] cdf, long long cap, int okind,
                              double p0, double p1, double u) nogil:
    cdef long long k = _upper_bound(cdf, u)
    if k > cap:
        k = _overflow_invert(cap, okind, p0, p1, u)
    return k


cdef inline double _lam(int kind, double p0, double p1, long long k) nogil:
    cdef long long a
    cdef double mag
    if kind == 0:  # clamp
        if k == 0:
            return 0.0
        a = -k if k < 0 else k
        if a > 1100:
            a = 1100
        mag = p0 * (1.0 - ldexp(1.0, <int> (-a)))
        return -mag if k < 0 else mag
    return p0 * tanh(p1 * <double> k)  # tanh


def lam_value(kind, p0, p1, k):
    """Rate response to the integer argument k; Lambda(0) = 0 exactly."""
    return _lam(<int> kind, <double> p0, <double> p1, <long long> k)


# ---------------------------------------------------------------------------
# quenched field


def strength_grid(seed, stream, i0, j0, ni, nj, plan):
    """Field strengths on the rectangle [i0, i0+ni) x [j0, j0+nj)."""
    cdef double[::1] cdf = np.ascontiguousarray(plan.cdf, dtype=np.float64)
    cdef long long cap = cdf.shape[0] - 1
    cdef int okind = plan.overflow_kind
    cdef double p0 = plan.param0, p1 = plan.param1
    cdef unsigned long long s64 = <unsigned long long> (seed & 0xFFFFFFFFFFFFFFFF)
    cdef long long st = <long long> stream
    cdef long long ci0 = i0, cj0 = j0, cni = ni, cnj = nj, i, j
    out = np.empty((cni, cnj), dtype=np.int64)
    cdef long long[:, ::1] o = out
    cdef double u
    with nogil:
        for i in range(cni):
            for j in range(cnj):
                u = _uniform(s64, st, ci0 + i, cj0 + j)
                o[i, j] = _invert(cdf, cap, okind, p0, p1, u)
    return out


# ---------------------------------------------------------------------------
# kinetic Monte Carlo


cdef inline double _site_rate(long long[::1] u, long long W,
                              double[::1] cdf, long long cap, int okind,
                              double dp0, double dp1,
                              unsigned long long s64, long long fstream,
                              int lkind, double lp0, double lp1, long long Fi,
                              long long si) nogil:
    cdef long long ip = si + 1, im = si - 1, dd, ff
    if ip >= W:
        ip -= W
    if im < 0:
        im += W
    dd = u[ip] + u[im] - 2 * u[si]
    ff = _invert(cdf, cap, okind, dp0, dp1, _uniform(s64, fstream, si, u[si]))
    return _lam(lkind, lp0, lp1, dd - ff + Fi)


cdef double _kmc_refresh(long long[::1] u, long long W, long long nb,
                         double[::1] rates, double[::1] bins,
                         double[::1] cdf, long long cap, int okind,
                         double dp0, double dp1,
                         unsigned long long s64, long long fstream,
                         int lkind, double lp0, double lp1, long long Fi) nogil:
    cdef double total = 0.0, sb, r
    cdef long long b, i, hi_lim
    for b in range(nb):
        sb = 0.0
        hi_lim = (b + 1) * _BIN
        if hi_lim > W:
            hi_lim = W
        for i in range(b * _BIN, hi_lim):
            r = _site_rate(u, W, cdf, cap, okind, dp0, dp1, s64, fstream,
                           lkind, lp0, lp1, Fi, i)
            rates[i] = r
            sb += fabs(r)
        bins[b] = sb
        total += sb
    return total


cdef void _kmc_record(long long[::1] u, long long W, double tt, long long ee,
                      list ts, list maxs, list means, list evs):
    cdef long long k, m, acc2
    m = u[0]
    acc2 = 0
    for k in range(W):
        if u[k] > m:
            m = u[k]
        acc2 += u[k]
    ts.append(tt)
    maxs.append(m)
    means.append(acc2 / <double> W)
    evs.append(ee)


def kmc_run(u0, seed, field_stream, plan, lam_kind, lam_p0, lam_p1, F,
            dyn_seed, dyn_stream, start_event, max_events, max_time, height_cap,
            barrier, record_every, t0=0.0):
    """Event-driven simulation of the jump process on a periodic window.

    Returns a dict with the final state, trajectory series and stop reason.
    Mirrors kernels/fallback.py exactly.
    """
    u_arr = np.array(u0, dtype=np.int64)
    cdef long long[::1] u = u_arr
    cdef long long W = u.shape[0]
    cdef long long nb = (W + _BIN - 1) // _BIN

    cdef double[::1] cdf = np.ascontiguousarray(plan.cdf, dtype=np.float64)
    cdef long long cap = cdf.shape[0] - 1
    cdef int okind = plan.overflow_kind
    cdef double dp0 = plan.param0, dp1 = plan.param1

    cdef unsigned long long s64 = <unsigned long long> (seed & 0xFFFFFFFFFFFFFFFF)
    cdef unsigned long long s64_dyn = <unsigned long long> (dyn_seed & 0xFFFFFFFFFFFFFFFF)
    cdef long long fstream = <long long> field_stream
    cdef long long dstream = <long long> dyn_stream
    cdef int lkind = lam_kind
    cdef double lp0 = lam_p0, lp1 = lam_p1
    cdef long long Fi = F

    cdef bint has_cap = height_cap is not None
    cdef long long hcap = 0
    if has_cap:
        hcap = height_cap
    cdef bint has_barrier = barrier is not None
    if has_barrier:
        vb_arr = np.ascontiguousarray(barrier, dtype=np.int64)
    else:
        vb_arr = np.empty(0, dtype=np.int64)
    cdef long long[::1] vbar = vb_arr
    cdef bint has_tmax = max_time is not None
    cdef double tmax = 0.0
    if has_tmax:
        tmax = max_time

    rates_arr = np.zeros(W, dtype=np.float64)
    bins_arr = np.zeros(nb, dtype=np.float64)
    cdef double[::1] rates = rates_arr
    cdef double[::1] bins = bins_arr

    cdef long long start_ev = start_event
    cdef long long end_event = start_ev + <long long> max_events
    cdef long long rec_every = record_every

    cdef double total, t, u1, u2, dt, target, acc, r
    cdef long long ev, i, j, jj, b, site, hi_lim, step
    cdef int violation_site = -1

    t = t0
    ev = start_ev

    total = _kmc_refresh(u, W, nb, rates, bins, cdf, cap, okind, dp0, dp1,
                         s64, fstream, lkind, lp0, lp1, Fi)

    ts, maxs, means, evs = [], [], [], []
    stop = "max_events"
    _kmc_record(u, W, t, ev, ts, maxs, means, evs)

    while ev < end_event:
        if (ev - start_ev) > 0 and (ev - start_ev) % _REFRESH == 0:
            total = _kmc_refresh(u, W, nb, rates, bins, cdf, cap, okind,
                                 dp0, dp1, s64, fstream, lkind, lp0, lp1, Fi)
        if total <= 0.0:
            stop = "frozen"
            break
        u1 = _uniform(s64_dyn, dstream, ev, 0)
        dt = -log1p(-u1) / total
        if has_tmax and t + dt > tmax:
            t = tmax
            stop = "max_time"
            break
        t += dt

        u2 = _uniform(s64_dyn, dstream, ev, 1)
        target = u2 * total
        site = -1
        acc = 0.0
        for b in range(nb):
            if target < acc + bins[b]:
                hi_lim = (b + 1) * _BIN
                if hi_lim > W:
                    hi_lim = W
                for i in range(b * _BIN, hi_lim):
                    acc += fabs(rates[i])
                    if target < acc:
                        site = i
                        break
                if site >= 0:
                    break
                # stale bin sum: fall through into the next bin
            else:
                acc += bins[b]
        if site < 0:
            total = _kmc_refresh(u, W, nb, rates, bins, cdf, cap, okind,
                                 dp0, dp1, s64, fstream, lkind, lp0, lp1, Fi)
            if total <= 0.0:
                stop = "frozen"
                break
            acc = 0.0
            for i in range(W):
                acc += fabs(rates[i])
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

        for j in range(site - 1, site + 2):
            jj = j
            if jj < 0:
                jj += W
            if jj >= W:
                jj -= W
            r = _site_rate(u, W, cdf, cap, okind, dp0, dp1, s64, fstream,
                           lkind, lp0, lp1, Fi, jj)
            b = jj // _BIN
            bins[b] += fabs(r) - fabs(rates[jj])
            total += fabs(r) - fabs(rates[jj])
            rates[jj] = r

        if has_barrier and u[site] > vbar[site]:
            violation_site = <int> site
            stop = "violation"
            _kmc_record(u, W, t, ev, ts, maxs, means, evs)
            break
        if has_cap and u[site] >= hcap:
            stop = "height_cap"
            _kmc_record(u, W, t, ev, ts, maxs, means, evs)
            break
        if rec_every > 0 and (ev - start_ev) % rec_every == 0:
            _kmc_record(u, W, t, ev, ts, maxs, means, evs)

    if stop == "max_events" or stop == "frozen" or stop == "max_time":
        _kmc_record(u, W, t, ev, ts, maxs, means, evs)

    return {
        "u": u_arr,
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


cdef inline double _bump1(double dy, double rho, double rho_p) nogil:
    cdef double a = -dy if dy < 0.0 else dy
    cdef double w
    if a <= rho:
        return 1.0
    if a >= rho_p:
        return 0.0
    w = (rho_p - a) / (rho_p - rho)
    return (w * w * w) * (10.0 + w * (-15.0 + 6.0 * w))


def bump_profile(dy, rho, rho_p):
    """Quintic plateau factor: 1 on [-rho, rho], 0 outside [-rho_p, rho_p]."""
    return _bump1(dy, rho, rho_p)


cdef void _pde_record(double[::1] u, long long N, double tt, double sup_diff,
                      list ts, list maxs, list means, list sups):
    cdef long long q
    cdef double m2 = -INFINITY, s2 = 0.0
    for q in range(N):
        if u[q] > m2:
            m2 = u[q]
        s2 += u[q]
    ts.append(tt)
    maxs.append(m2)
    means.append(s2 / <double> N)
    sups.append(sup_diff)


def pde_run(u0, dx, dt, n_steps, F, col_ptr, cand_y, cand_sbx, rho, rho_p,
            v, record_every, viol_tol, t0=0.0):
    """Forward-Euler integration of du/dt = lap(u) - f(x, u) + F.

    Obstacle candidates are stored per grid column (CSR layout), sorted by
    centre height; cand_sbx carries strength * bump_x premultiplied.
    Mirrors kernels/fallback.py exactly.
    """
    u_arr = np.array(u0, dtype=np.float64)
    un_arr = np.empty_like(u_arr)
    cdef double[::1] u = u_arr
    cdef double[::1] unew = un_arr
    cdef long long N = u.shape[0]
    cdef double cdx = dx, cdt = dt, cF = F, crho = rho, crho_p = rho_p
    cdef double inv_dx2 = 1.0 / (cdx * cdx)
    cdef double ct0 = t0, cviol = viol_tol

    cdef long long[::1] cptr = np.ascontiguousarray(col_ptr, dtype=np.int64)
    cdef double[::1] cy = np.ascontiguousarray(cand_y, dtype=np.float64)
    cdef double[::1] csbx = np.ascontiguousarray(cand_sbx, dtype=np.float64)

    cdef bint has_v = v is not None
    if has_v:
        vv_arr = np.ascontiguousarray(v, dtype=np.float64)
    else:
        vv_arr = np.empty(0)
    cdef double[::1] vv = vv_arr

    cdef long long nsteps = n_steps, rec_every = record_every
    cdef double sup_diff = -INFINITY
    cdef long long first_violation = -1
    cdef long long steps_done = 0
    cdef double t = ct0

    cdef long long i, k, im1, ip1, stp
    cdef double lap, f, ui, dy, a, d, di
    cdef bint swapped = 0

    ts, maxs, means, sups = [], [], [], []
    stop = "steps"
    _pde_record(u, N, t, sup_diff, ts, maxs, means, sups)

    for stp in range(nsteps):
        with nogil:
            for i in range(N):
                im1 = i - 1 if i > 0 else N - 1
                ip1 = i + 1 if i < N - 1 else 0
                lap = (u[im1] + u[ip1] - 2.0 * u[i]) * inv_dx2
                f = 0.0
                ui = u[i]
                for k in range(cptr[i], cptr[i + 1]):
                    dy = ui - cy[k]
                    if dy <= -crho_p:
                        break  # candidates are height-sorted; the rest are above reach
                    a = -dy if dy < 0.0 else dy
                    if a < crho_p:
                        f += csbx[k] * _bump1(dy, crho, crho_p)
                unew[i] = u[i] + cdt * (lap - f + cF)
        u, unew = unew, u
        u_arr, un_arr = un_arr, u_arr
        t = ct0 + (stp + 1) * cdt
        steps_done = stp + 1

        if has_v:
            d = -INFINITY
            with nogil:
                for i in range(N):
                    di = u[i] - vv[i]
                    if di > d:
                        d = di
            if d > sup_diff:
                sup_diff = d
            if first_violation < 0 and d > cviol:
                first_violation = steps_done

        if rec_every > 0 and steps_done % rec_every == 0:
            if not np.all(np.isfinite(u_arr)):
                stop = "blowup"
                _pde_record(u, N, t, sup_diff, ts, maxs, means, sups)
                break
            _pde_record(u, N, t, sup_diff, ts, maxs, means, sups)

    if stop != "blowup":
        if not np.all(np.isfinite(u_arr)):
            stop = "blowup"
        _pde_record(u, N, t, sup_diff, ts, maxs, means, sups)

    return {
        "u": u_arr,
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
    cdef double[::1] cdf = np.ascontiguousarray(plan.cdf, dtype=np.float64)
    cdef long long cap = cdf.shape[0] - 1
    cdef int okind = plan.overflow_kind
    cdef double p0 = plan.param0, p1 = plan.param1

    cdef long long[::1] checks = np.ascontiguousarray(j_checks, dtype=np.int64)
    cdef long long n_checks = checks.shape[0]
    cdef long long jmax = 0
    cdef long long q
    for q in range(n_checks):
        if checks[q] > jmax:
            jmax = checks[q]
    cdef double[::1] thr = np.ascontiguousarray(thresholds, dtype=np.float64)
    cdef long long L = thr.shape[0]

    cdef unsigned long long s64 = <unsigned long long> (seed & 0xFFFFFFFFFFFFFFFF)
    cdef long long st = <long long> stream
    cdef long long base = sample_base, ns = n_samples

    out_arr = np.empty((ns, n_checks), dtype=np.int64)
    cdef long long[:, ::1] out = out_arr
    cdef long long s, j, ci, cur, idx, x
    cdef double u, alpha
    cdef bint improve

    with nogil:
        for s in range(ns):
            cur = -(1 << 62)
            ci = 0
            for j in range(jmax + 1):
                u = _uniform(s64, st, base + s, j)
                idx = cur + j
                improve = 0
                if idx < 0:
                    improve = 1
                elif idx < L:
                    if u >= thr[idx]:
                        improve = 1
                else:
                    if okind == 1 or okind == 2:
                        alpha = _overflow_alpha(okind, p0, p1, idx + 1)
                        if u >= 1.0 - alpha:
                            improve = 1
                if improve:
                    x = _invert(cdf, cap, okind, p0, p1, u)
                    if x - j > cur:
                        cur = x - j
                while ci < n_checks and j == checks[ci]:
                    out[s, ci] = cur
                    ci += 1
    return out_arr
