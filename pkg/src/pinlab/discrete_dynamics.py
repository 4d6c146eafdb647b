"""Continuous-time Markov dynamics of the 1+1d lattice interface.

The interface is a height function on a periodic window of width W.  A site
jumps up (rate lam) or down (rate -lam) with
lam = Lambda(d1 u(i) - f(i, u(i)) + F), where d1 is the discrete Laplacian,
f the quenched obstacle field and F the constant driving force.  A function
v with d1 v(i) - f(i, v(i)) + F <= 0 everywhere freezes or repels the
interface pointwise, so an interface started below v stays below it.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from . import kernels
from .distributions import StrengthDistribution, sample_site_strength, sample_strength_grid
from .rng import EnvironmentSeed, Stream

__all__ = [
    "QuenchedField",
    "RateFunction",
    "InterfaceState",
    "StopRule",
    "TrajectorySummary",
    "discrete_laplacian",
    "jump_rate",
    "kmc_step",
    "run_until",
]


@dataclass(frozen=True)
class QuenchedField:
    """Deterministic map (seed, lattice coordinate) -> obstacle strength."""

    env: EnvironmentSeed
    dist: StrengthDistribution

    def __post_init__(self):
        if not self.dist.is_discrete:
            raise ValueError("lattice fields need a discrete strength distribution")

    def strength(self, i: int, j: int) -> int:
        return sample_site_strength(self.env, (i, j), self.dist)

    def strength_grid(self, i0: int, j0: int, ni: int, nj: int) -> np.ndarray:
        return kernels.strength_grid(
            self.env.seed, self.env.stream_tag, i0, j0, ni, nj, self.dist.sampling_plan()
        )

    def strengths_at(self, i_arr, j_arr) -> np.ndarray:
        return sample_strength_grid(self.env, i_arr, j_arr, self.dist)


_CONTRACT_GRID = np.arange(-50, 51)


@dataclass(frozen=True)
class RateFunction:
    """Strictly increasing, bounded rate response with Lambda(0) = 0.

    clamp(lam_max): lam_max * sign(k) * (1 - 2^-|k|)  (saturating, strictly
    increasing); tanh_scaled(beta): tanh(beta * k).
    """

    kind: str
    lam_max: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        vals = np.array([self(k) for k in _CONTRACT_GRID])
        if self(0) != 0.0:
            raise ValueError("rate function must vanish at 0")
        # strict increase except where the response has saturated to the
        # bound at double precision (tanh rounds to 1 beyond |arg| ~ 19)
        flat = np.diff(vals) <= 0
        saturated = np.abs(vals) == self.lam_max
        if np.any(flat & ~(saturated[:-1] & saturated[1:])):
            raise ValueError("rate function must be strictly increasing")
        if np.any(np.abs(vals) > self.lam_max):
            raise ValueError("rate function must be bounded by lam_max")

    @staticmethod
    def clamp(lam_max: float = 1.0) -> "RateFunction":
        if lam_max <= 0:
            raise ValueError("lam_max must be positive")
        return RateFunction("clamp", lam_max=float(lam_max))

    @staticmethod
    def tanh_scaled(beta: float, lam_max: float = 1.0) -> "RateFunction":
        if beta <= 0 or lam_max <= 0:
            raise ValueError("beta and lam_max must be positive")
        return RateFunction("tanh", lam_max=float(lam_max), beta=float(beta))

    def kernel_params(self):
        if self.kind == "clamp":
            return kernels.LAM_CLAMP, self.lam_max, 0.0
        if self.kind == "tanh":
            return kernels.LAM_TANH, self.lam_max, self.beta
        raise ValueError(f"unknown rate-function kind {self.kind!r}")

    def __call__(self, k: int) -> float:
        kid, p0, p1 = self.kernel_params()
        return kernels.lam_value(kid, p0, p1, int(k))


@dataclass
class InterfaceState:
    """Interface heights on the periodic window [0, W), plus event clock."""

    heights: np.ndarray
    time: float = 0.0
    event_count: int = 0
    frozen: bool = False

    @staticmethod
    def flat(window: int) -> "InterfaceState":
        return InterfaceState(np.zeros(window, dtype=np.int64))

    @property
    def window(self) -> int:
        return len(self.heights)


def discrete_laplacian(u: np.ndarray, i: int) -> int:
    """u(i+1) + u(i-1) - 2 u(i) with periodic wrap."""
    w = len(u)
    return int(u[(i + 1) % w]) + int(u[(i - 1) % w]) - 2 * int(u[i])


def jump_rate(u: np.ndarray, i: int, field: QuenchedField, lam: RateFunction, F: int) -> float:
    """Signed rate at site i: positive = upward jump, negative = downward."""
    d1 = discrete_laplacian(u, i)
    f = field.strength(i, int(u[i]))
    return lam(d1 - f + F)


def all_rates(u: np.ndarray, field: QuenchedField, lam: RateFunction, F: int) -> np.ndarray:
    """Fresh rate vector; reference for the incremental cache (tests)."""
    return np.array([jump_rate(u, i, field, lam, F) for i in range(len(u))])


@dataclass(frozen=True)
class StopRule:
    """Stop conditions for run_until; any subset may be combined."""

    max_events: Optional[int] = None
    max_time: Optional[float] = None
    height_cap: Optional[int] = None
    barrier: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.max_events is None and self.max_time is None:
            raise ValueError("need max_events or max_time to bound the run")


@dataclass
class TrajectorySummary:
    final_state: InterfaceState
    stop_reason: str
    violation_site: int
    series_t: np.ndarray
    series_max: np.ndarray
    series_mean: np.ndarray
    series_ev: np.ndarray

    def csv_rows(self):
        for k in range(len(self.series_t)):
            yield (
                self.series_t[k],
                int(self.series_max[k]),
                self.series_mean[k],
                int(self.series_ev[k]),
            )


def _run_kernel(state, field, lam, F, stop, record_every, max_events, dynamics_seed=None):
    kid, p0, p1 = lam.kernel_params()
    dyn_seed = field.env.seed if dynamics_seed is None else dynamics_seed
    return kernels.kmc_run(
        state.heights,
        field.env.seed,
        field.env.stream_tag,
        field.dist.sampling_plan(),
        kid,
        p0,
        p1,
        int(F),
        dyn_seed,
        Stream.DYNAMICS,
        state.event_count,
        max_events,
        stop.max_time,
        stop.height_cap,
        stop.barrier,
        record_every,
        t0=state.time,
    )


def kmc_step(state: InterfaceState, field: QuenchedField, lam: RateFunction, F: int,
             dynamics_seed: Optional[int] = None) -> InterfaceState:
    """One event of the jump process; returns a frozen marker if all rates vanish."""
    res = _run_kernel(state, field, lam, F, StopRule(max_events=1), 0, 1, dynamics_seed)
    return InterfaceState(
        heights=res["u"],
        time=res["t"],
        event_count=res["events"],
        frozen=(res["stop"] == "frozen"),
    )


def run_until(
    state: InterfaceState,
    field: QuenchedField,
    lam: RateFunction,
    F: int,
    stop: StopRule,
    record_every: int = 0,
    dynamics_seed: Optional[int] = None,
) -> TrajectorySummary:
    """Repeated kmc_step until a stop condition fires.

    With a barrier v the run halts with a violation report the first time
    u(i) > v(i) at any site.  dynamics_seed decouples the event clock from
    the quenched field, for independent runs over one environment.
    """
    max_events = stop.max_events if stop.max_events is not None else (1 << 62)
    res = _run_kernel(state, field, lam, F, stop, record_every, max_events, dynamics_seed)
    final = InterfaceState(
        heights=res["u"],
        time=res["t"],
        event_count=res["events"],
        frozen=(res["stop"] == "frozen"),
    )
    return TrajectorySummary(
        final_state=final,
        stop_reason=res["stop"],
        violation_site=res["violation_site"],
        series_t=res["series_t"],
        series_max=res["series_max"],
        series_mean=res["series_mean"],
        series_ev=res["series_ev"],
    )
