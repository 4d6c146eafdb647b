"""Obstacle-strength distributions with closed-form tails and moments.

Discrete kinds take values in N0 and are sampled by inverse CDF on a
precomputed cumulative table with an explicit analytic tail-overflow branch
(needed for the polynomial-tail kind, whose support is unbounded).  The
continuous Pareto kind is used by the continuum model only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import zeta as _zeta

__all__ = [
    "StrengthDistribution",
    "TailFunction",
    "SamplingPlan",
    "SecondMomentStatus",
    "InvalidDistributionError",
    "point_mass",
    "two_point",
    "geometric",
    "zeta_tail",
    "pareto",
    "scaled_bernoulli",
    "sample_site_strength",
    "tail_probability",
    "tail_divergence_probe",
    "second_moment_status",
]

_TABLE_CAP = 1 << 16

# overflow-branch ids shared with the compiled kernel
OVERFLOW_NONE = 0
OVERFLOW_GEOMETRIC = 1
OVERFLOW_ZETA = 2


class InvalidDistributionError(ValueError):
    pass


@dataclass(frozen=True)
class SamplingPlan:
    """Inverse-CDF data consumed by the sampling kernels.

    cdf[k] = P(X <= k) for k = 0..cap.  A uniform u maps to the smallest k
    with cdf[k] > u; u >= cdf[cap] falls through to the analytic branch
    identified by overflow_kind.
    """

    cdf: np.ndarray
    overflow_kind: int
    param0: float  # geometric: p, zeta: s
    param1: float  # zeta: zeta(s); otherwise unused

    @property
    def cap(self) -> int:
        return len(self.cdf) - 1


def zeta_tail_em(s: float, j: float) -> float:
    """Euler-Maclaurin evaluation of sum_{k>=j} k^-s, for large j.

    Used only beyond the sampling table cap, where the omitted correction is
    far below double precision.  The compiled kernel evaluates the identical
    expression.
    """
    t = j ** (1.0 - s) / (s - 1.0)
    t += 0.5 * j ** (-s)
    t += s * j ** (-s - 1.0) / 12.0
    t -= s * (s + 1.0) * (s + 2.0) * j ** (-s - 3.0) / 720.0
    return t


def _overflow_invert(plan: SamplingPlan, u: float) -> int:
    """Smallest k with P(X <= k) > u, for u beyond the table."""
    t = 1.0 - u  # want smallest j >= 1 with alpha_j < t, then return j - 1
    if plan.overflow_kind == OVERFLOW_GEOMETRIC:
        p = plan.param0
        alpha = lambda j: (1.0 - p) ** j
    elif plan.overflow_kind == OVERFLOW_ZETA:
        s, z = plan.param0, plan.param1
        alpha = lambda j: zeta_tail_em(s, float(j)) / z
    else:
        raise InvalidDistributionError("uniform beyond a complete table")
    lo = plan.cap + 1  # alpha_lo >= t by the overflow condition
    hi = lo
    while alpha(hi) >= t:
        hi *= 2
        if hi > 1 << 62:
            raise OverflowError("tail inversion exceeded integer range")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if alpha(mid) >= t:
            lo = mid
        else:
            hi = mid
    return hi - 1


def invert_uniform(plan: SamplingPlan, u) -> np.ndarray:
    """Vectorised inverse CDF; canonical semantics for all sampling paths."""
    u_in = np.asarray(u, dtype=np.float64)
    if np.any(u_in < 0.0) or np.any(u_in >= 1.0):
        raise ValueError("uniforms must lie in [0, 1)")
    flat = np.atleast_1d(u_in)
    out = np.searchsorted(plan.cdf, flat, side="right").astype(np.int64)
    over = out > plan.cap
    if np.any(over):
        out[over] = [_overflow_invert(plan, float(x)) for x in flat[over]]
    return out.reshape(u_in.shape)


@dataclass(frozen=True)
class StrengthDistribution:
    """One of the built-in obstacle-strength laws.

    kind in {point_mass, two_point, geometric, zeta_tail, pareto,
    scaled_bernoulli}; use the module-level constructors.
    """

    kind: str
    params: tuple
    _plan_cache: dict = field(default_factory=dict, compare=False, repr=False)

    # -- structure ---------------------------------------------------------

    @property
    def is_discrete(self) -> bool:
        return self.kind != "pareto"

    @property
    def support_bound(self) -> Optional[int]:
        """Largest attainable value for bounded kinds, else None."""
        if self.kind == "point_mass":
            return self.params[0]
        if self.kind in ("two_point", "scaled_bernoulli"):
            return self.params[0]
        return None

    def to_config(self) -> dict:
        if self.kind == "point_mass":
            return {"kind": "point_mass", "c": self.params[0]}
        if self.kind == "two_point":
            return {"kind": "two_point", "c": self.params[0], "q": self.params[1]}
        if self.kind == "scaled_bernoulli":
            return {"kind": "scaled_bernoulli", "scale": self.params[0], "q": self.params[1]}
        if self.kind == "geometric":
            return {"kind": "geometric", "p": self.params[0]}
        if self.kind == "zeta_tail":
            return {"kind": "zeta_tail", "s": self.params[0]}
        return {"kind": "pareto", "x_min": self.params[0], "alpha": self.params[1]}

    @staticmethod
    def from_config(cfg: dict) -> "StrengthDistribution":
        kind = cfg.get("kind")
        if kind == "point_mass":
            return point_mass(cfg["c"])
        if kind == "two_point":
            return two_point(cfg["c"], cfg["q"])
        if kind == "scaled_bernoulli":
            return scaled_bernoulli(cfg["scale"], cfg["q"])
        if kind == "geometric":
            return geometric(cfg["p"])
        if kind == "zeta_tail":
            return zeta_tail(cfg["s"])
        if kind == "pareto":
            return pareto(cfg["x_min"], cfg["alpha"])
        raise InvalidDistributionError(f"unknown distribution kind {kind!r}")

    # -- tails and moments -------------------------------------------------

    def tail(self, x) -> np.ndarray | float:
        """P(X >= x) for real x, exact closed form."""
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "point_mass":
            c = self.params[0]
            out = np.where(x <= c, 1.0, 0.0)
        elif self.kind in ("two_point", "scaled_bernoulli"):
            c, q = self.params
            out = np.where(x <= 0, 1.0, np.where(x <= c, q, 0.0))
        elif self.kind == "geometric":
            p = self.params[0]
            k = np.maximum(np.ceil(x), 0.0)
            out = (1.0 - p) ** k
        elif self.kind == "zeta_tail":
            s = self.params[0]
            k = np.maximum(np.ceil(x), 1.0)
            out = np.where(x <= 1, 1.0, _zeta(s, k) / _zeta(s, 1))
        else:  # pareto
            x_min, a = self.params
            with np.errstate(divide="ignore"):
                out = np.where(x <= x_min, 1.0, (x / x_min) ** (-a))
        if out.ndim == 0:
            return float(out)
        return out

    def alpha(self, k) -> np.ndarray | float:
        """alpha_k = P(X >= k) at integer k >= 1 (valid for any k >= 0)."""
        return self.tail(k)

    def tail_function(self) -> "TailFunction":
        return TailFunction(self)

    def pmf(self, k) -> np.ndarray | float:
        if not self.is_discrete:
            raise InvalidDistributionError("pmf requires a discrete kind")
        k = np.asarray(k)
        out = np.asarray(self.tail(k) - self.tail(k + 1))
        if out.ndim == 0:
            return float(out)
        return out

    def mean(self) -> float:
        """E X; may be inf."""
        if self.kind == "point_mass":
            return float(self.params[0])
        if self.kind in ("two_point", "scaled_bernoulli"):
            c, q = self.params
            return c * q
        if self.kind == "geometric":
            p = self.params[0]
            return (1.0 - p) / p
        if self.kind == "zeta_tail":
            s = self.params[0]
            return _zeta(s - 1, 1) / _zeta(s, 1) if s > 2 else math.inf
        x_min, a = self.params
        return a * x_min / (a - 1.0) if a > 1 else math.inf

    def second_moment(self) -> float:
        """E X^2 in closed form; may be inf."""
        if self.kind == "point_mass":
            return float(self.params[0]) ** 2
        if self.kind in ("two_point", "scaled_bernoulli"):
            c, q = self.params
            return c * c * q
        if self.kind == "geometric":
            p = self.params[0]
            return (1.0 - p) * (2.0 - p) / (p * p)
        if self.kind == "zeta_tail":
            s = self.params[0]
            return _zeta(s - 2, 1) / _zeta(s, 1) if s > 3 else math.inf
        x_min, a = self.params
        return a * x_min * x_min / (a - 2.0) if a > 2 else math.inf

    def alpha_sum_from(self, n) -> float | np.ndarray:
        """sum_{k>=n} alpha_k in closed form (n >= 1); may be inf."""
        if not self.is_discrete:
            raise InvalidDistributionError("tail sums require a discrete kind")
        n_in = np.asarray(n)
        if np.any(n_in < 1):
            raise ValueError("n must be >= 1")
        n = n_in.astype(np.float64)
        if self.kind == "point_mass":
            c = self.params[0]
            out = np.maximum(0.0, c - n + 1)
        elif self.kind in ("two_point", "scaled_bernoulli"):
            c, q = self.params
            out = q * np.maximum(0.0, c - n + 1)
        elif self.kind == "geometric":
            p = self.params[0]
            out = np.zeros_like(n) if p == 1.0 else (1.0 - p) ** n / p
        else:
            s = self.params[0]
            if s <= 2:
                out = np.full_like(n, math.inf)
            else:
                z = _zeta(s, 1)
                out = (_zeta(s - 1, n) - (n - 1) * _zeta(s, n)) / z
        if out.ndim == 0:
            return float(out)
        return out

    def second_moment_identity_partial(self, k_max: int) -> float:
        """Partial sum of sum_k (2k-1) alpha_k, truncated at k_max."""
        k = np.arange(1, k_max + 1, dtype=np.float64)
        return float(np.sum((2.0 * k - 1.0) * np.asarray(self.alpha(k))))

    # -- sampling ----------------------------------------------------------

    def sampling_plan(self) -> SamplingPlan:
        if not self.is_discrete:
            raise InvalidDistributionError("sampling plans exist for discrete kinds only")
        plan = self._plan_cache.get("plan")
        if plan is not None:
            return plan
        if self.kind == "point_mass":
            c = self.params[0]
            cdf = np.zeros(c + 1)
            cdf[c] = 1.0
            plan = SamplingPlan(cdf, OVERFLOW_NONE, 0.0, 0.0)
        elif self.kind in ("two_point", "scaled_bernoulli"):
            c, q = self.params
            cdf = np.full(c + 1, 1.0 - q)
            cdf[c] = 1.0
            plan = SamplingPlan(cdf, OVERFLOW_NONE, 0.0, 0.0)
        elif self.kind == "geometric":
            p = self.params[0]
            if p == 1.0:
                plan = SamplingPlan(np.array([1.0]), OVERFLOW_NONE, 0.0, 0.0)
            else:
                cap = min(_TABLE_CAP, int(math.ceil(64.0 * math.log(2.0) / -math.log1p(-p))) + 2)
                k = np.arange(cap + 1, dtype=np.float64)
                cdf = 1.0 - (1.0 - p) ** (k + 1.0)
                plan = SamplingPlan(cdf, OVERFLOW_GEOMETRIC, p, 0.0)
        else:  # zeta_tail
            s = self.params[0]
            z = float(_zeta(s, 1))
            k = np.arange(_TABLE_CAP + 1, dtype=np.float64)
            cdf = 1.0 - _zeta(s, k + 1.0) / z  # P(X <= k) = 1 - alpha_{k+1}
            plan = SamplingPlan(cdf, OVERFLOW_ZETA, s, z)
        self._plan_cache["plan"] = plan
        return plan

    def quantile_continuous(self, u) -> np.ndarray:
        """Inverse CDF for the continuous Pareto kind."""
        if self.is_discrete:
            raise InvalidDistributionError("quantile_continuous requires the pareto kind")
        x_min, a = self.params
        u = np.asarray(u, dtype=np.float64)
        return x_min * (1.0 - u) ** (-1.0 / a)

    def conditional_tail_quantile(self, threshold: float, u) -> np.ndarray:
        """Inverse CDF of X given X >= threshold (continuous kinds)."""
        if self.is_discrete:
            raise InvalidDistributionError("conditional sampling implemented for pareto only")
        x_min, a = self.params
        t = max(threshold, x_min)
        u = np.asarray(u, dtype=np.float64)
        return t * (1.0 - u) ** (-1.0 / a)


class TailFunction:
    """The sequence k -> alpha_k = P(X >= k), in closed form."""

    def __init__(self, dist: StrengthDistribution):
        self.dist = dist

    def __call__(self, k):
        return self.dist.alpha(k)

    def values(self, k_max: int) -> np.ndarray:
        return np.asarray(self.dist.alpha(np.arange(1, k_max + 1)))


# -- constructors -----------------------------------------------------------

def point_mass(c: int) -> StrengthDistribution:
    c = int(c)
    if c < 0:
        raise InvalidDistributionError("point_mass needs c >= 0")
    return StrengthDistribution("point_mass", (c,))


def two_point(c: int, q: float) -> StrengthDistribution:
    c = int(c)
    if c < 0 or not 0.0 < q <= 1.0:
        raise InvalidDistributionError("two_point needs c >= 0 and 0 < q <= 1")
    return StrengthDistribution("two_point", (c, float(q)))


def scaled_bernoulli(scale: int, q: float) -> StrengthDistribution:
    scale = int(scale)
    if scale < 0 or not 0.0 < q <= 1.0:
        raise InvalidDistributionError("scaled_bernoulli needs scale >= 0 and 0 < q <= 1")
    return StrengthDistribution("scaled_bernoulli", (scale, float(q)))


def geometric(p: float) -> StrengthDistribution:
    if not 0.0 < p <= 1.0:
        raise InvalidDistributionError("geometric needs 0 < p <= 1")
    return StrengthDistribution("geometric", (float(p),))


def zeta_tail(s: float) -> StrengthDistribution:
    if not s > 1.0:
        raise InvalidDistributionError("zeta_tail needs s > 1")
    return StrengthDistribution("zeta_tail", (float(s),))


def pareto(x_min: float, alpha: float) -> StrengthDistribution:
    if not (x_min > 0.0 and alpha > 0.0):
        raise InvalidDistributionError("pareto needs x_min > 0 and alpha > 0")
    return StrengthDistribution("pareto", (float(x_min), float(alpha)))


# -- module operations -------------------------------------------------------

def sample_site_strength(env, coord, dist: StrengthDistribution) -> int:
    """Strength at a lattice coordinate: pure function of (env, coord, dist)."""
    if not dist.is_discrete:
        raise InvalidDistributionError("site strengths require a discrete kind")
    i, j = coord
    u = env.uniform(i, j)
    return int(invert_uniform(dist.sampling_plan(), u))


def sample_strength_grid(env, i_coords, j_coords, dist: StrengthDistribution) -> np.ndarray:
    """Vectorised strengths over broadcastable coordinate arrays."""
    if not dist.is_discrete:
        raise InvalidDistributionError("site strengths require a discrete kind")
    u = env.uniform_array(i_coords, j_coords)
    return invert_uniform(dist.sampling_plan(), u)


def tail_probability(dist: StrengthDistribution, x) -> float | np.ndarray:
    return dist.tail(x)


def tail_divergence_probe(dist: StrengthDistribution, a: float, x_grid) -> np.ndarray:
    """The probe sequence x^a * P(X >= x) along an increasing grid."""
    if a <= 0:
        raise ValueError("exponent a must be > 0")
    x = np.asarray(x_grid, dtype=np.float64)
    if x.size == 0 or np.any(np.diff(x) <= 0):
        raise ValueError("x_grid must be non-empty and strictly increasing")
    return x ** a * np.asarray(dist.tail(x))


@dataclass(frozen=True)
class SecondMomentStatus:
    status: str  # "finite" | "infinite"
    value: Optional[float]

    @property
    def is_finite(self) -> bool:
        return self.status == "finite"


def second_moment_status(dist: StrengthDistribution) -> SecondMomentStatus:
    """E X^2 via closed forms; built-in kinds always decide."""
    if not dist.is_discrete:
        raise InvalidDistributionError("second_moment_status requires a discrete kind")
    m2 = dist.second_moment()
    if math.isinf(m2):
        return SecondMomentStatus("infinite", None)
    return SecondMomentStatus("finite", m2)
