"""The M-statistic with its two-sided tail bounds, and discrete stationary
supersolutions (barriers) with exact integer verification.

M = sup{-j + X_j : j >= 0} decides pinning in the discrete model: its mean
is infinite exactly when E(X^2) is.  Barrier construction is sound but
incomplete: both strategies re-check every returned certificate with
verify_barrier before handing it out, and return None rather than an
unverified candidate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import List, Optional

import numpy as np

from . import kernels
from .discrete_dynamics import QuenchedField
from .distributions import (
    OVERFLOW_GEOMETRIC,
    OVERFLOW_ZETA,
    StrengthDistribution,
    zeta_tail_em,
)
from .rng import EnvironmentSeed, Stream
from .percolation import SiteField, find_minimal_surface

__all__ = [
    "MStatBounds",
    "BarrierCertificate",
    "BarrierSearchBudget",
    "sample_m_statistic",
    "sample_m_batch",
    "m_statistic_mean_exact",
    "m_tail_exact",
    "m_bounds",
    "smallest_halving_index",
    "verify_barrier",
    "build_barrier",
]


# ---------------------------------------------------------------------------
# M-statistic sampling


def _skip_thresholds(plan, L: int) -> np.ndarray:
    """P(X <= k) for k = 0..L-1, consistent with the kernels' tail branch."""
    L = int(L)
    c = min(L, plan.cap + 1)
    thr = np.empty(L, dtype=np.float64)
    thr[:c] = plan.cdf[:c]
    if L > c:
        ks = np.arange(c, L, dtype=np.float64)
        if plan.overflow_kind == OVERFLOW_GEOMETRIC:
            alpha = (1.0 - plan.param0) ** (ks + 1.0)
        elif plan.overflow_kind == OVERFLOW_ZETA:
            alpha = zeta_tail_em(plan.param0, ks + 1.0) / plan.param1
        else:
            alpha = np.zeros_like(ks)
        thr[c:] = 1.0 - alpha
    return thr


def sample_m_batch(
    dist: StrengthDistribution,
    j_checkpoints,
    n_samples: int,
    env: EnvironmentSeed,
    sample_base: int = 0,
) -> np.ndarray:
    """n_samples independent draws of M_J at each truncation J (coupled).

    Row r, column k holds max{-j + X_j : j <= j_checkpoints[k]} for sample r;
    checkpoints share draws, so rows are non-decreasing along k.
    """
    checks = np.asarray(sorted(int(j) for j in j_checkpoints), dtype=np.int64)
    if np.any(checks < 0):
        raise ValueError("truncations must be >= 0")
    plan = dist.sampling_plan()
    jmax = int(checks.max())
    bound = dist.support_bound
    slack = (bound + 2) if bound is not None else 4096
    thr = _skip_thresholds(plan, jmax + slack)
    return kernels.mstat_runmax(
        env.seed, Stream.MSTAT, sample_base, int(n_samples), checks, plan, thr
    )


def sample_m_statistic(
    dist: StrengthDistribution, J: int, env: EnvironmentSeed, sample_index: int = 0
) -> int:
    """One draw of M_J = max{-j + X_j : 0 <= j <= J}.

    Exact (no truncation error) once J exceeds the support bound of a
    bounded kind, since -j + X_j < 0 beyond it.
    """
    return int(sample_m_batch(dist, [J], 1, env, sample_base=sample_index)[0, 0])


# ---------------------------------------------------------------------------
# exact evaluation of the M-statistic law


def m_tail_exact(dist: StrengthDistribution, n: int, J: Optional[int] = None) -> float:
    """P(M_J >= n) = 1 - prod_{j<=J} (1 - alpha_{n+j}); J=None means J = inf.

    The infinite product is completed in closed form once the remaining
    tail sum drops below 1e-12 (second-order remainder < 1e-24).
    """
    if n < 1:
        return 1.0
    K = n
    log_prod = 0.0
    j = 0
    while True:
        a = float(dist.alpha(K))
        if a >= 1.0:
            return 1.0
        if J is None and a < 1e-12:
            log_prod -= float(dist.alpha_sum_from(K))
            break
        log_prod += math.log1p(-a)
        if J is not None and j == J:
            break
        K += 1
        j += 1
        if J is None and j > 10_000_000:
            raise RuntimeError("tail product did not converge")
    return -math.expm1(log_prod)


def m_statistic_mean_exact(dist: StrengthDistribution, J: int, tol: float = 1e-9) -> float:
    """E M_J by summing exact level probabilities plus an analytic tail.

    Finite for every J even when E M = inf; strictly increasing in J for
    heavy-tailed kinds, which is the desk-scale divergence signature.
    """
    if not dist.is_discrete:
        raise ValueError("M-statistic needs a discrete kind")
    J = int(J)
    bound = dist.support_bound
    if bound is not None:
        T = bound + 1
    else:
        T = 4 * J + 1024
    K = T + J + 2
    ks = np.arange(1, K + 1, dtype=np.float64)
    alpha = np.asarray(dist.alpha(ks), dtype=np.float64)
    with np.errstate(divide="ignore"):
        logs = np.log1p(-alpha)  # -inf where alpha == 1
    suffix = np.zeros(K + 2)
    suffix[:K] = np.cumsum(logs[::-1])[::-1]  # suffix[m] = sum_{k>=m+1} logs
    total = 0.0
    for t in range(1, T + 1):
        s = suffix[t - 1] - suffix[t + J]
        total += -math.expm1(s)
    if bound is None:
        js = np.arange(0, J + 1, dtype=np.float64)
        total += float(np.sum(np.asarray(dist.alpha_sum_from(T + 1 + js))))
    return total


# ---------------------------------------------------------------------------
# the paper-style two-sided bounds


def smallest_halving_index(dist: StrengthDistribution) -> Optional[int]:
    """k0: the smallest n with sum_{k>=n} alpha_k <= 1/2; None if E X = inf."""
    if math.isinf(dist.mean()):
        return None
    n = 1
    while dist.alpha_sum_from(n) > 0.5:
        n += 1
    return n


@dataclass(frozen=True)
class MStatBounds:
    n: int
    upper: float
    lower: Optional[float]
    k0: Optional[int]
    note: str = ""


def m_bounds(dist: StrengthDistribution, n: int, rel_tol: float = 1e-9) -> MStatBounds:
    """Series bounds on P(M >= n): upper sum_l (l+1) P(X = n+l), lower half
    the tail sum (valid for n >= k0).

    The series is summed until a chunk falls below the relative tolerance,
    then closed with the exact remainder A(m) + (m-n) alpha_m (Fubini on
    the double sum), so heavy 1/m remainders cost nothing.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if math.isinf(dist.mean()):
        # the series itself diverges; both statements are vacuous
        return MStatBounds(n, math.inf, None, None,
                           "lower bound not applicable (E M = inf already)")
    upper = 0.0
    l = 0
    chunk = 256
    while True:
        ls = np.arange(l, l + chunk, dtype=np.int64)
        terms = (ls + 1.0) * np.asarray(dist.pmf(ls + n))
        part = float(terms.sum())
        upper += part
        l += chunk
        if part <= rel_tol * max(upper, 1e-300) or l >= 1 << 16:
            break
    m = n + l
    upper += float(dist.alpha_sum_from(m)) + (m - n) * float(dist.alpha(m))
    k0 = smallest_halving_index(dist)
    lower = 0.5 * float(dist.alpha_sum_from(n)) if n >= k0 else None
    note = "" if n >= k0 else f"lower bound needs n >= k0 = {k0}"
    return MStatBounds(n, upper, lower, k0, note)


# ---------------------------------------------------------------------------
# barrier certificates


@dataclass
class BarrierCertificate:
    """A candidate stationary supersolution with its verification report."""

    window: int
    v: np.ndarray
    F: int
    verified: bool
    violation_sites: List[int]
    strategy: str
    meta: dict = dc_field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "window": self.window,
            "v": [int(x) for x in self.v],
            "F": self.F,
            "verified": self.verified,
            "violation_sites": self.violation_sites,
            "strategy": self.strategy,
            "meta": self.meta,
        }

    @staticmethod
    def from_json_dict(d: dict) -> "BarrierCertificate":
        return BarrierCertificate(
            window=d["window"],
            v=np.asarray(d["v"], dtype=np.int64),
            F=d["F"],
            verified=d["verified"],
            violation_sites=list(d["violation_sites"]),
            strategy=d["strategy"],
            meta=d.get("meta", {}),
        )


def verify_barrier(v, field: QuenchedField, F: int, strategy: str = "given", meta=None) -> BarrierCertificate:
    """Exact integer check of d1 v(i) <= f(i, v(i)) - F at every site."""
    v = np.asarray(v, dtype=np.int64)
    if np.any(v < 0):
        raise ValueError("barrier heights must be non-negative integers")
    W = len(v)
    d1 = np.roll(v, -1) + np.roll(v, 1) - 2 * v
    f = field.strengths_at(np.arange(W, dtype=np.int64), v)
    bad = np.where(d1 > f - F)[0]
    return BarrierCertificate(
        window=W,
        v=v,
        F=int(F),
        verified=len(bad) == 0,
        violation_sites=[int(b) for b in bad],
        strategy=strategy,
        meta=meta or {},
    )


@dataclass(frozen=True)
class BarrierSearchBudget:
    """Search effort caps; the builder fails (returns None) beyond them."""

    height_cap: int = 4096        # rows of the field scanned per column
    max_candidates: int = 2048    # anchor candidates kept (strongest first)
    gap_max: int = 1024           # longest bridge attempted
    starts: int = 12              # start anchors tried for the periodic chain

    @staticmethod
    def auto(F: int) -> "BarrierSearchBudget":
        # anchor strength must scale like F * gap; for polynomial tails the
        # usable anchors thin out like F^3 in the scanned height
        return BarrierSearchBudget(height_cap=max(4096, 4096 * F ** 3))


def _ceil_div(a: int, b: int) -> int:
    return -((-a) // b)


def _bridge_interior(h_a: int, h_b: int, g: int, F: int, c_ab: int, c_ba: int) -> np.ndarray:
    """Integer concave bridge values at t = 1..g-1 between two anchors."""
    t = np.arange(1, g, dtype=np.int64)
    A = h_a + c_ab * t - F * t * (t - 1) // 2
    gt = g - t
    B = h_b + c_ba * gt - F * gt * (gt - 1) // 2
    return np.minimum(A, B)


def _chain_to_heights(anchors, W: int, F: int) -> np.ndarray:
    """Fill the periodic window from an anchor chain.

    anchors: (column, height) with strictly increasing columns spanning one
    period (columns may exceed W before wrapping; the last anchor bridges
    back to the first at +W).
    """
    v = np.zeros(W, dtype=np.int64)
    subs = list(anchors)
    m = len(subs)
    for k in range(m):
        i_a, h_a = subs[k]
        if k + 1 < m:
            i_b, h_b = subs[k + 1]
        else:
            i_b, h_b = subs[0][0] + W, subs[0][1]
        g = i_b - i_a
        if g <= 0:
            raise ValueError("anchor columns must be strictly increasing")
        v[i_a % W] = h_a
        if g > 1:
            c_ab = _ceil_div(h_b - h_a + F * g * (g - 1) // 2, g)
            c_ba = _ceil_div(h_a - h_b + F * g * (g - 1) // 2, g)
            interior = _bridge_interior(h_a, h_b, g, F, c_ab, c_ba)
            idx = (np.arange(i_a + 1, i_b) % W).astype(np.int64)
            v[idx] = interior
    return v


def _build_lipschitz(field: QuenchedField, F: int, W: int, budget: BarrierSearchBudget):
    """Open sites are those with f(i, j) >= F + 2 (a 1-Lipschitz surface has
    d1 <= 2); the minimal surface through them is a barrier."""
    H = budget.height_cap
    strengths = field.strength_grid(0, 0, W, H)
    open_cols = [np.where(strengths[i] >= F + 2)[0].astype(np.int64) for i in range(W)]
    if any(len(c) == 0 for c in open_cols):
        return None, {"reason": "column with no open site within budget"}
    site_field = SiteField(
        base_shape=(W,), height_cap=H, j_min=0, open_heights=open_cols
    )
    surf = find_minimal_surface(site_field)
    if surf is None:
        return None, {"reason": "no Lipschitz surface within budget"}
    return surf.heights.astype(np.int64), {"height_cap": H}


def _candidate_strength_floor(dist, F: int, W: int, H: int, max_candidates: int) -> int:
    """Smallest strength threshold expected to keep the pool within budget."""
    target = max_candidates / (W * float(H))
    lo, hi = F + 2, F + 2
    while float(dist.alpha(hi)) > target and hi < 1 << 40:
        hi *= 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if float(dist.alpha(mid)) > target:
            lo = mid
        else:
            hi = mid
    return max(F + 2, hi if float(dist.alpha(hi)) <= target else lo)


def _collect_candidates(field: QuenchedField, F: int, W: int, budget: BarrierSearchBudget):
    """Sites with f above an adaptive floor, scanned in height slabs."""
    H = budget.height_cap
    theta = _candidate_strength_floor(field.dist, F, W, H, budget.max_candidates)
    slab = max(1, min(H, (1 << 21) // W))
    out_i, out_j, out_f = [], [], []
    j0 = 0
    while j0 < H:
        rows = min(slab, H - j0)
        s = field.strength_grid(0, j0, W, rows)
        ii, jj = np.where(s >= theta)
        if len(ii):
            out_i.append(ii.astype(np.int64))
            out_j.append((jj + j0).astype(np.int64))
            out_f.append(s[ii, jj])
        j0 += rows
    if not out_i:
        return None, theta
    ii = np.concatenate(out_i)
    jj = np.concatenate(out_j)
    ff = np.concatenate(out_f)
    if len(ii) > budget.max_candidates:
        order = np.argsort(-ff, kind="stable")[: budget.max_candidates]
        ii, jj, ff = ii[order], jj[order], ff[order]
    return (ii, jj, ff), theta


def _build_parabolic(field: QuenchedField, F: int, W: int, budget: BarrierSearchBudget):
    """Anchor chain + integer concave bridges.

    Anchors are strong sites; between consecutive anchors the bridge is the
    discrete parabola with second difference exactly -F, the least concave
    bridge, which minimises the kink the anchors must pay.  The chain is
    found by a left-to-right label pass over candidate sites: label(x) is
    the cheapest kink already owed by x to its left gap, and an edge a -> b
    is taken when a's remaining capacity (f_a - F) - label(a) covers the
    exact integer launch slope into the gap.
    """
    cands, theta = _collect_candidates(field, F, W, budget)
    if cands is None:
        return None, {"reason": "no candidate sites", "strength_floor": int(theta)}
    ii, jj, ff = cands
    n = len(ii)
    g_hard = min(budget.gap_max, W)

    # per-column candidate arrays sorted by height
    order = np.lexsort((jj, ii))
    ii, jj, ff = ii[order], jj[order], ff[order]
    caps = ff.astype(np.int64) - F
    col_start = np.searchsorted(ii, np.arange(W + 1))

    INF = 1 << 60
    starts = np.argsort(-ff, kind="stable")[: budget.starts]
    for s_idx in starts:
        s_col, s_cap = int(ii[s_idx]), int(caps[s_idx])
        reserve = s_cap // 2  # kept for the wrap-around gap behind the start
        # ids 0..n-1: original columns; n..2n-1: copies shifted by +W
        label = np.full(2 * n, INF, dtype=np.int64)
        pred = np.full(2 * n, -1, dtype=np.int64)
        label[s_idx] = reserve
        tgt = s_idx + n
        for col in range(s_col, s_col + W):
            c = col % W
            off = 0 if col < W else n
            for a_local in range(int(col_start[c]), int(col_start[c + 1])):
                a = a_local + off
                la = int(label[a])
                if la >= INF:
                    continue
                h_a, cap_a = int(jj[a_local]), int(caps[a_local])
                room = cap_a - la
                if room < 0:
                    continue
                if F > 0:
                    g_reach = 2 * room // F + math.isqrt(2 * (h_a + 1) // F + 1) + 2
                else:
                    g_reach = g_hard
                g_top = min(g_hard, g_reach, s_col + W - col)
                for g in range(1, g_top + 1):
                    nxt = col + g
                    base = F * g * (g - 1) // 2
                    hi_b = h_a + room * g - base  # c_ab <= room iff h_b <= hi_b
                    if hi_b < 0:
                        continue
                    nc = nxt % W
                    boff = 0 if nxt < W else n
                    for b_local in range(int(col_start[nc]), int(col_start[nc + 1])):
                        h_b = int(jj[b_local])
                        if h_b > hi_b:
                            break  # heights sorted ascending
                        c_ba = _ceil_div(h_a - h_b + base, g)
                        if c_ba > int(caps[b_local]):
                            continue
                        b = b_local + boff
                        if c_ba < label[b]:
                            label[b] = c_ba
                            pred[b] = a
        if label[tgt] <= reserve:
            chain = []
            x = tgt
            while x >= 0:
                chain.append(x)
                x = int(pred[x])
            chain.reverse()
            anchors = [
                (int(ii[x % n]) + (W if x >= n else 0), int(jj[x % n]))
                for x in chain[:-1]
            ]
            v = _chain_to_heights(anchors, W, F)
            return v, {
                "anchors": len(anchors),
                "height_cap": budget.height_cap,
                "strength_floor": int(theta),
            }
    return None, {
        "reason": "no feasible anchor chain within budget",
        "strength_floor": int(theta),
    }


def build_barrier(
    field: QuenchedField,
    F: int,
    strategy: str,
    window: int,
    budget: Optional[BarrierSearchBudget] = None,
) -> Optional[BarrierCertificate]:
    """Construct a stationary supersolution, or None within budget.

    Every returned certificate has passed verify_barrier; None is a search
    failure, not a disproof of pinning.
    """
    if F < 0:
        raise ValueError("driving force must be >= 0")
    budget = budget or BarrierSearchBudget.auto(F)
    if strategy == "lipschitz_surface":
        v, meta = _build_lipschitz(field, F, window, budget)
    elif strategy == "parabolic_bridge":
        v, meta = _build_parabolic(field, F, window, budget)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    if v is None:
        return None
    cert = verify_barrier(v, field, F, strategy=strategy, meta=meta)
    if not cert.verified:
        return None
    cert.meta.update({"seed": field.env.seed, "dist": field.dist.to_config()})
    return cert
