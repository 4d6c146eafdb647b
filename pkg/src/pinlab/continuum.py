"""Explicit finite-difference solver for the continuum interface equation
du/dt = lap(u) - f(x, u) + F, and the containment experiment u <= v.

Forward Euler under a step bound that keeps the update monotone in the
heights: dt * (2 n / dx^2 + L_f) <= 0.9, where L_f bounds the positive
slope of f in the height argument.  Monotonicity gives a discrete
comparison principle, so an interface started below a verified stationary
supersolution stays below it up to discretisation error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from . import kernels
from .obstacles import ForceField
from .supersolution import SupersolutionAssembly, VerificationReport, verify_supersolution

__all__ = [
    "GridState",
    "ContainmentReport",
    "make_grid",
    "reaction_slope_bound",
    "stable_dt",
    "step",
    "run_steps",
    "containment_run",
]


@dataclass
class GridState:
    """Periodic grid heights for n = 1 (array) or n = 2 (2d array)."""

    u: np.ndarray
    dx: float
    dt: float
    t: float = 0.0

    @property
    def n(self) -> int:
        return self.u.ndim

    def copy(self) -> "GridState":
        return GridState(self.u.copy(), self.dx, self.dt, self.t)


def make_grid(length: float, dx_target: float, n: int = 1) -> tuple:
    """Number of cells and exact spacing for a periodic domain."""
    cells = max(8, int(math.ceil(length / dx_target)))
    return cells, length / cells


def reaction_slope_bound(field: ForceField, grid_x: np.ndarray) -> float:
    """Upper bound on d f / d y along grid columns (vectorised, conservative)."""
    ptr, cand_y, cand_sbx = field.column_candidates(grid_x)
    if len(cand_sbx) == 0:
        return 0.0
    slope = 1.875 / (field.bump.rho_p - field.bump.rho)
    per_col = np.add.reduceat(cand_sbx, ptr[:-1]) if len(cand_sbx) else np.zeros(1)
    per_col = np.where(np.diff(ptr) > 0, per_col, 0.0)
    return float(per_col.max() * slope)


def stable_dt(dx: float, n: int, l_f: float, safety: float = 0.9) -> float:
    """Step keeping the explicit update monotone: dt (2n/dx^2 + L_f) <= safety."""
    return safety / (2.0 * n / dx ** 2 + l_f)


def _run_kernel_1d(state: GridState, field: ForceField, F: float, n_steps: int,
                   v: Optional[np.ndarray], record_every: int, viol_tol: float):
    N = len(state.u)
    xs = np.arange(N) * state.dx
    ptr, cand_y, cand_sbx = field.column_candidates(xs)
    return kernels.pde_run(
        state.u, state.dx, state.dt, n_steps, F, ptr, cand_y, cand_sbx,
        field.bump.rho, field.bump.rho_p, v, record_every, viol_tol, t0=state.t,
    )


def _step_2d(u: np.ndarray, dx: float, dt: float, F: float, field: ForceField,
             xs1: np.ndarray, xs2: np.ndarray) -> np.ndarray:
    lap = (
        np.roll(u, 1, 0) + np.roll(u, -1, 0) + np.roll(u, 1, 1) + np.roll(u, -1, 1)
        - 4.0 * u
    ) / dx ** 2
    f = np.zeros_like(u)
    obs = field.obstacles
    L1, L2 = obs.box.x_lengths
    for k in range(obs.count):
        d1 = (xs1 - obs.x[k, 0]) % L1
        d1 = np.where(d1 > L1 / 2, d1 - L1, d1)
        d2 = (xs2 - obs.x[k, 1]) % L2
        d2 = np.where(d2 > L2 / 2, d2 - L2, d2)
        b1 = field.bump.factor(d1)
        b2 = field.bump.factor(d2)
        if not (np.any(b1 > 0) and np.any(b2 > 0)):
            continue
        dy = u - obs.y[k]
        by = field.bump.factor(dy)
        f += obs.strengths[k] * np.outer(b1, b2) * by
    return u + dt * (lap - f + F)


def step(state: GridState, field: ForceField, F: float) -> GridState:
    """One forward-Euler step; raises on numerical blow-up."""
    if state.n == 1:
        res = _run_kernel_1d(state, field, F, 1, None, 0, math.inf)
        if res["stop"] == "blowup":
            raise FloatingPointError("numerical blow-up in explicit step")
        return GridState(res["u"], state.dx, state.dt, res["t"])
    N1 = state.u.shape[0]
    xs1 = np.arange(N1) * state.dx
    xs2 = np.arange(state.u.shape[1]) * state.dx
    u = _step_2d(state.u, state.dx, state.dt, F, field, xs1, xs2)
    if not np.all(np.isfinite(u)):
        raise FloatingPointError("numerical blow-up in explicit step")
    return GridState(u, state.dx, state.dt, state.t + state.dt)


def run_steps(
    state: GridState,
    field: ForceField,
    F: float,
    n_steps: int,
    barrier: Optional[np.ndarray] = None,
    record_every: int = 0,
    viol_tol: float = math.inf,
) -> dict:
    """Integrate n_steps (1d kernel path); returns the kernel result dict."""
    if state.n != 1:
        raise ValueError("run_steps uses the 1d kernel; step 2d states manually")
    return _run_kernel_1d(state, field, F, n_steps, barrier, record_every, viol_tol)


@dataclass
class ContainmentReport:
    passed: bool
    sup_u_minus_v: float
    tolerance: float
    first_violation_time: Optional[float]
    plateau_delta: float
    plateau_tol: float
    max_height_final: float
    horizon: float
    n_steps: int
    dt: float
    dx: float
    series_t: np.ndarray
    series_max: np.ndarray
    series_mean: np.ndarray
    series_sup: np.ndarray
    verification: Optional[VerificationReport] = None

    def to_json_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "passed", "sup_u_minus_v", "tolerance", "first_violation_time",
            "plateau_delta", "plateau_tol", "max_height_final", "horizon",
            "n_steps", "dt", "dx")}
        if self.verification is not None:
            d["verification"] = self.verification.to_json_dict()
        return d


def containment_run(
    field: ForceField,
    F: float,
    assembly: SupersolutionAssembly,
    horizon: float,
    dx_divisor: int = 32,
    tol_factor: float = 10.0,
    plateau_tol: float = 1e-3,
    record_count: int = 1024,
    verification: Optional[VerificationReport] = None,
) -> ContainmentReport:
    """Integrate u from 0 to the horizon under a verified supersolution v.

    Passes when sup_t sup_x (u - v) <= tol_factor * dx^2 and the running max
    height gains at most plateau_tol over the second half of the horizon
    (the pinning signature).  The barrier must have passed
    verify_supersolution; pass its report to embed it.
    """
    if verification is None:
        verification = verify_supersolution(assembly, field, F, dx_divisor=dx_divisor)
    if not verification.passed:
        raise ValueError("refusing containment run: supersolution verification failed")
    p = assembly.params
    L = assembly.domain_length
    n_cells, dx = make_grid(L, min(p.r0, p.d) / dx_divisor)
    xs = np.arange(n_cells) * dx
    v = assembly.value(xs)
    l_f = reaction_slope_bound(field, xs)
    dt = stable_dt(dx, 1, l_f)
    n_steps = int(math.ceil(horizon / dt))
    tol = tol_factor * dx ** 2
    state = GridState(np.zeros(n_cells), dx, dt)
    record_every = max(1, n_steps // record_count)
    res = run_steps(state, field, F, n_steps, barrier=v,
                    record_every=record_every, viol_tol=tol)
    if res["stop"] == "blowup":
        raise FloatingPointError("numerical blow-up in containment run")
    ts = res["series_t"]
    maxs = res["series_max"]
    half = np.searchsorted(ts, horizon / 2.0)
    half = min(half, len(maxs) - 1)
    plateau_delta = float(maxs[-1] - maxs[half])
    sup = float(res["sup_diff"])
    fv = res["first_violation_step"]
    passed = bool(sup <= tol and plateau_delta <= plateau_tol)
    return ContainmentReport(
        passed=passed,
        sup_u_minus_v=sup,
        tolerance=tol,
        first_violation_time=(None if fv < 0 else fv * dt),
        plateau_delta=plateau_delta,
        plateau_tol=plateau_tol,
        max_height_final=float(maxs[-1]),
        horizon=horizon,
        n_steps=res["steps"],
        dt=dt,
        dx=dx,
        series_t=ts,
        series_max=maxs,
        series_mean=res["series_mean"],
        series_sup=res["series_sup"],
        verification=verification,
    )
