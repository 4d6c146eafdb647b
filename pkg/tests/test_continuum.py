import math

import numpy as np
import pytest

from pinlab import distributions as D
from pinlab.continuum import (
    GridState,
    containment_run,
    make_grid,
    reaction_slope_bound,
    run_steps,
    stable_dt,
    step,
)
from pinlab.obstacles import Box, BumpShape, ForceField, ObstacleSet, make_bump, sample_obstacles
from pinlab.supersolution import build_desk_assembly, verify_supersolution

PARETO = D.pareto(1.0, 1.25)


def empty_field(length=8.0, n=1):
    if n == 1:
        box = Box((length,), 1.5, 5.0)
        obs = ObstacleSet(box, np.empty((0, 1)), np.empty(0), np.empty(0), 0.0, 0)
    else:
        box = Box((length, length), 1.5, 5.0)
        obs = ObstacleSet(box, np.empty((0, 2)), np.empty(0), np.empty(0), 0.0, 0)
    return ForceField(obs, make_bump(0.5, 1.5, n))


def test_zero_force_zero_field_is_stationary():
    ff = empty_field()
    st = GridState(np.zeros(64), 0.125, 1e-3)
    out = run_steps(st, ff, 0.0, 100)
    assert np.array_equal(out["u"], np.zeros(64))


def test_flat_profile_grows_exactly_linearly():
    ff = empty_field()
    st = GridState(np.zeros(64), 0.125, 1e-3)
    out = run_steps(st, ff, 2.0, 500)
    # zero Laplacian everywhere: u(x, t) = F t exactly
    assert np.allclose(out["u"], 2.0 * 500 * 1e-3, rtol=0, atol=1e-10)
    assert out["t"] == pytest.approx(0.5)


def test_sine_mode_decays_at_discrete_rate():
    ff = empty_field(length=8.0)
    N = 128
    dx = 8.0 / N
    xs = np.arange(N) * dx
    u0 = np.sin(2 * np.pi * xs / 8.0)
    dt = 0.4 * dx * dx
    steps = 400
    out = run_steps(GridState(u0, dx, dt), ff, 0.0, steps)
    # exact eigenvalue of the discrete Laplacian for this mode
    mu = (2.0 - 2.0 * math.cos(2 * math.pi * dx / 8.0)) / dx**2
    expect = (1.0 - dt * mu) ** steps * u0
    assert np.max(np.abs(out["u"] - expect)) < 1e-10
    # and the continuum rate within O(dx^2)
    mu_cont = (2 * math.pi / 8.0) ** 2
    assert mu == pytest.approx(mu_cont, rel=4e-3)


def test_comparison_monotone_in_field():
    box = Box((12.0,), 1.5, 6.0)
    obs1 = sample_obstacles(box, 2.0, PARETO, 4)
    # drop half the obstacles: pointwise smaller force
    keep = np.arange(obs1.count) % 2 == 0
    obs2 = ObstacleSet(box, obs1.x[keep], obs1.y[keep], obs1.strengths[keep], 1.0, 4)
    bump = make_bump(0.5, 1.5, 1)
    ff1, ff2 = ForceField(obs1, bump), ForceField(obs2, bump)
    N, dx = make_grid(12.0, 0.05)
    xs = np.arange(N) * dx
    dt = stable_dt(dx, 1, max(reaction_slope_bound(ff1, xs), reaction_slope_bound(ff2, xs)))
    u1 = run_steps(GridState(np.zeros(N), dx, dt), ff1, 1.0, 4000)["u"]
    u2 = run_steps(GridState(np.zeros(N), dx, dt), ff2, 1.0, 4000)["u"]
    assert np.all(u1 <= u2 + 1e-12)


def test_stationary_supersolution_dominates_exactly():
    asm, ff, obs = build_desk_assembly(1.0, 1.0, 0.5, 1.5, PARETO, seed=11, n_boxes=4, levels=2)
    N, dx = make_grid(asm.domain_length, min(asm.params.r0, asm.params.d) / 16)
    xs = np.arange(N) * dx
    v = asm.value(xs)
    dt = stable_dt(dx, 1, reaction_slope_bound(ff, xs))
    out = run_steps(GridState(np.zeros(N), dx, dt), ff, 1.0, 3000, barrier=v,
                    record_every=100, viol_tol=1e-12)
    assert out["sup_diff"] <= 0.0
    assert out["first_violation_step"] == -1


def test_convergence_second_order():
    # smooth field, fixed horizon; halving dx (and quartering dt) should
    # shrink the change in the solution by ~4
    box = Box((8.0,), 1.5, 4.0)
    obs = sample_obstacles(box, 1.0, PARETO, 9)
    ff = ForceField(obs, make_bump(0.5, 1.5, 1))
    T = 0.25

    def solve(N):
        dx = 8.0 / N
        dt = T / math.ceil(T / (0.2 * dx * dx))
        steps = round(T / dt)
        return run_steps(GridState(np.zeros(N), dx, dt), ff, 1.0, steps)["u"]

    u1, u2, u3 = solve(64), solve(128), solve(256)
    e1 = np.max(np.abs(u2[::2] - u1))
    e2 = np.max(np.abs(u3[::2] - u2))
    assert e1 / e2 > 2.5  # ~ 4 for clean second order


def test_blowup_raises():
    ff = empty_field()
    N, dx = 64, 0.125
    xs = np.arange(N) * dx
    st = GridState(np.sin(2 * np.pi * xs / 8.0), dx, 10.0)  # dt far beyond CFL
    with pytest.raises(FloatingPointError):
        for _ in range(100):
            st = step(st, ff, 0.0)


def test_step_2d_flat_growth_and_decay():
    ff = empty_field(n=2)
    st = GridState(np.zeros((24, 24)), 1.0 / 3, 0.02)
    for _ in range(50):
        st = step(st, ff, 1.5)
    assert np.allclose(st.u, 1.5 * 50 * 0.02, atol=1e-10)
    # single sine mode decay at the discrete rate
    N, L = 24, 8.0
    dx = L / N
    xs = np.arange(N) * dx
    u0 = np.outer(np.sin(2 * np.pi * xs / L), np.ones(N))
    dt = 0.2 * dx * dx
    st = GridState(u0.copy(), dx, dt)
    for _ in range(60):
        st = step(st, ff, 0.0)
    mu = (2.0 - 2.0 * math.cos(2 * math.pi * dx / L)) / dx**2
    assert np.max(np.abs(st.u - (1 - dt * mu) ** 60 * u0)) < 1e-10


def test_2d_obstacle_force_enters():
    box = Box((6.0, 6.0), 1.5, 4.0)
    obs = ObstacleSet(box, np.array([[3.0, 3.0]]), np.array([2.0]), np.array([50.0]), 1.0, 0)
    ff = ForceField(obs, make_bump(0.5, 2.0, 2))
    N = 30
    dx = 6.0 / N
    st = GridState(np.full((N, N), 1.9), dx, 1e-4)
    st2 = step(st, ff, 0.0)
    centre = st2.u[N // 2, N // 2]
    assert centre < 1.9  # pushed down by the obstacle
    corner = st2.u[0, 0]
    assert corner == pytest.approx(1.9, abs=1e-12)


def test_containment_run_small():
    asm, ff, obs = build_desk_assembly(1.0, 1.0, 0.5, 1.5, PARETO, seed=11, n_boxes=4, levels=2)
    rep = containment_run(ff, 1.0, asm, horizon=3.0, dx_divisor=16)
    assert rep.passed
    assert rep.sup_u_minus_v <= 0.0
    assert rep.first_violation_time is None
    assert rep.max_height_final < float(np.max(asm.anchors_y))


def test_containment_refuses_failed_verification():
    asm, ff, obs = build_desk_assembly(1.0, 1.0, 0.5, 1.5, PARETO, seed=11, n_boxes=4, levels=2)
    bad_f = asm.params.force_ceiling + 1.0
    with pytest.raises(ValueError):
        containment_run(ff, bad_f, asm, horizon=1.0, dx_divisor=16)


def test_stable_dt_bound():
    dx = 0.01
    lf = 500.0
    dt = stable_dt(dx, 1, lf)
    assert dt * (2 / dx**2 + lf) <= 0.9 + 1e-12
