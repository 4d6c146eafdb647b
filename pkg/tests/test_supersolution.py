import json
import math

import numpy as np
import pytest

from pinlab import distributions as D
from pinlab.obstacles import BumpShape, ForceField
from pinlab.supersolution import (
    LIFT_C1,
    HypothesisNotWitnessedError,
    LiftingFunction,
    LocalProfile,
    SupersolutionAssembly,
    build_desk_assembly,
    build_lifting,
    inner_profile,
    kink_condition,
    outer_slope,
    plan_desk_parameters,
    plan_parameters,
    verify_supersolution,
)

PARETO = D.pareto(1.0, 1.25)


def fd_second(fn, r, h):
    """4th-order central stencil for f''."""
    return (-fn(r + 2 * h) + 16 * fn(r + h) - 30 * fn(r) + 16 * fn(r - h) - fn(r - 2 * h)) / (
        12 * h * h
    )


def fd_first(fn, r, h):
    return (-fn(r + 2 * h) + 8 * fn(r + h) - 8 * fn(r - h) + fn(r - 2 * h)) / (12 * h)


def radial_residual_inner(prof, r, h):
    lap = fd_second(prof.value, r, h) + (prof.n - 1) / r * fd_first(prof.value, r, h)
    return lap - prof.laplacian_target(r)


def radial_residual_outer(out, r, h):
    lap = fd_first(out.d1, r, h) + (out.n - 1) / r * out.d1(r)
    return lap + out.F_out


class TestProfiles:
    def test_worked_example_quartic(self):
        # n=1, m=2, r_in=1, F_in=12: phi(r) = r^4 - 1
        prof = inner_profile(1, 2, 1.0, 12.0)
        rs = np.linspace(0, 1, 11)
        assert np.allclose(prof.value(rs), rs**4 - 1, atol=1e-14)
        assert prof.at_zero() == pytest.approx(-1.0, abs=1e-15)
        assert prof.slope_at_edge() == pytest.approx(4.0, abs=1e-15)

    def test_anchoring_and_closed_values(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = int(rng.integers(1, 3))
            m = int(rng.integers(0, 13))
            r_in = rng.uniform(0.5, 2.0)
            F_in = rng.uniform(0.5, 5.0)
            prof = inner_profile(n, m, r_in, F_in)
            assert prof.value(r_in) == pytest.approx(0.0, abs=1e-12)
            assert prof.at_zero() == pytest.approx(
                -F_in * r_in**2 / ((m + n) * (m + 2)), rel=1e-12
            )
            assert prof.d1(r_in) == pytest.approx(F_in * r_in / (m + n), rel=1e-12)

    def test_inner_ode_residual(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            n = int(rng.integers(1, 3))
            m = int(rng.integers(0, 13))
            r_in = rng.uniform(0.5, 2.0)
            F_in = rng.uniform(0.5, 5.0)
            prof = inner_profile(n, m, r_in, F_in)
            h = 1e-3 * r_in
            rs = np.linspace(3 * h, r_in - 3 * h, 101)
            res = radial_residual_inner(prof, rs, h)
            assert np.max(np.abs(res)) < 1e-7

    def test_outer_examples_and_residual(self):
        out = outer_slope(1, 3.0, 2.0, r_in=1.0)
        rs = np.linspace(0.5, 3.0, 26)
        assert np.allclose(out.d1(rs), 2.0 * (3.0 - rs), atol=1e-13)
        assert out.d1(3.0) == 0.0
        assert out.d1(1.0) == pytest.approx(4.0)
        for n in (1, 2):
            o = outer_slope(n, 2.5, 1.7, r_in=0.6)
            h = 1e-4
            rs = np.linspace(0.1, 2.5 - 3 * h, 61)
            res = radial_residual_outer(o, rs, h)
            assert np.max(np.abs(res)) < 1e-7
            assert o.value(0.6) == 0.0

    def test_outer_value_by_quadrature(self):
        for n in (1, 2):
            o = outer_slope(n, 3.0, 2.0, r_in=1.0)
            rs = np.linspace(1.0, 3.0, 200)
            quad = np.concatenate([[0.0], np.cumsum((o.d1(rs[1:]) + o.d1(rs[:-1])) / 2 * np.diff(rs))])
            assert np.max(np.abs(quad - o.value(rs))) < 2e-4


class TestKink:
    def test_worked_tuple_is_marginal(self):
        prof = LocalProfile(inner_profile(1, 2, 1.0, 12.0), outer_slope(1, 3.0, 2.0, r_in=1.0))
        ok, mf, ms = kink_condition(prof)
        assert ok
        assert mf == pytest.approx(0.0, abs=1e-12)
        assert ms == pytest.approx(0.0, abs=1e-12)

    def test_tiny_outer_force_always_satisfied(self):
        prof = LocalProfile(inner_profile(1, 2, 1.0, 1.0), outer_slope(1, 8.0, 1e-12, r_in=1.0))
        ok, mf, _ = kink_condition(prof)
        assert ok and mf > 0

    def test_two_forms_agree(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            n = int(rng.integers(1, 3))
            m = int(rng.integers(0, 13))
            r_in = rng.uniform(0.3, 2.0)
            F_in = rng.uniform(0.1, 20.0)
            r_out = r_in * rng.uniform(1.1, 4.0)
            F_out = rng.uniform(0.1, 5.0)
            prof = LocalProfile(inner_profile(n, m, r_in, F_in),
                                outer_slope(n, r_out, F_out, r_in=r_in))
            _, mf, ms = kink_condition(prof)
            scale = max(1.0, abs(mf), abs(ms))
            assert abs(ms - r_in * mf) < 1e-12 * scale


class TestPlanner:
    def test_proof_pipeline_heavy_tail(self):
        for F in (1.0, 10.0):
            p = plan_parameters(F, 1, 1.0, 0.5, 1.5, PARETO)
            assert all(v["pass"] for v in p.checks.values())
            assert p.M >= 2 * p.K >= 2 * F
            assert p.d >= 2 * p.r1
            assert p.checks["open_box"]["probability"] > 0.9375

    def test_force_ceiling_identity(self):
        p = plan_parameters(1.0, 1, 1.0, 0.5, 1.5, PARETO)
        c1h = p.C1 * p.h / p.d**2
        assert p.F_out - c1h == c1h  # exact: F_out = 2 * C1 h / d^2
        assert p.M - p.F_in >= p.M / 2 >= p.K

    def test_scale_sanity_both_summands_half_m(self):
        p = plan_parameters(1.0, 1, 1.0, 0.5, 1.5, PARETO)
        s1 = p.C2 * p.m ** (1 + 2 / p.n) / (p.d**2 * p.K)
        s2 = p.C2 * p.h * p.d ** (p.n - 2)
        assert s1 <= p.m / 2 * (1 + 1e-9)
        assert s2 <= p.m / 2 * (1 + 1e-9)
        assert p.m >= s1 + s2 - 1e-9 * p.m

    def test_bounded_tail_not_witnessed(self):
        with pytest.raises(HypothesisNotWitnessedError):
            plan_parameters(1.0, 1, 1.0, 0.5, 1.5, D.pareto(1.0, 4.0))

    def test_geometry_premise_enforced(self):
        with pytest.raises(ValueError):
            plan_parameters(1.0, 1, 1.0, 0.5, 0.6, PARETO)

    def test_desk_planner(self):
        for F in (1.0, 2.0):
            p = plan_desk_parameters(F, 1, 1.0, 0.5, 1.5, PARETO)
            required = {k: v for k, v in p.checks.items() if k != "open_box"}
            assert all(v["pass"] for v in required.values())
            assert p.force_ceiling >= F
            assert p.notes["planner"] == "desk"


class TestLifting:
    def test_constant_heights_flat(self):
        lift = build_lifting(np.full(6, 2.5), 3.0, 1.5, 1.0)
        xs = np.linspace(0, 6 * 4.5, 400)
        assert np.allclose(lift.value(xs), 2.5, atol=1e-14)
        assert np.allclose(lift.gradient_1d(xs), 0.0)
        assert np.allclose(lift.laplacian_1d(xs), 0.0)

    def test_box_restriction_exact(self):
        h = 1.0
        y = np.array([0.0, 0.9, 0.3, 1.1])
        lift = build_lifting(y, 3.0, 1.5, h)
        P = 4.5
        for a in range(4):
            xs = a * P + np.linspace(-1.5, 1.5, 21)  # inside Q_a (l/2 = 1.5)
            assert np.allclose(lift.value(xs), y[a], atol=1e-14)

    def test_two_box_measured_bounds(self):
        h, l, d = 1.0, 3.0, 1.5
        eps = 1e-3
        lift = build_lifting(np.array([0.0, 2 * h - eps]), l, d, h)
        norms = lift.measured_norms()
        c1 = LIFT_C1[1]
        assert norms["grad_inf"] <= c1 * h / d
        assert norms["hess_inf"] <= c1 * h / d**2
        # the measured Laplacian comes close to the frozen constant:
        # max |s''| = 10/sqrt(3) per unit gap, times the 2h height swing
        assert norms["hess_inf"] >= 0.9 * (2 * h - eps) * (10 / math.sqrt(3)) / d**2

    def test_calibration_of_frozen_constant(self):
        rng = np.random.default_rng(5)
        worst_g, worst_h = 0.0, 0.0
        h, l, d = 1.0, 2.0, 1.0
        for _ in range(40):
            n = int(rng.integers(2, 8))
            y = np.cumsum(rng.uniform(-2 * h, 2 * h, n) * 0.999)
            y -= y.min()
            while np.abs(np.diff(np.concatenate([y, [y[0]]]))).max() >= 2 * h:
                y *= 0.9
            lift = build_lifting(y, l, d, h)
            norms = lift.measured_norms(points_per_gap=256)
            worst_g = max(worst_g, norms["grad_inf"] * d / h)
            worst_h = max(worst_h, norms["hess_inf"] * d**2 / h)
        assert worst_h <= LIFT_C1[1]
        assert worst_g <= LIFT_C1[1]
        assert worst_h > 0.85 * LIFT_C1[1]  # the frozen constant is tight

    def test_neighbour_gap_precondition(self):
        with pytest.raises(ValueError):
            build_lifting(np.array([0.0, 2.0]), 3.0, 1.5, 1.0)  # gap == 2h

    def test_partition_of_unity_range(self):
        y = np.array([1.0, 3.0, 2.0])
        lift = build_lifting(y, 3.0, 1.5, 2.0)
        xs = np.linspace(0, 3 * 4.5, 1000)
        v = lift.value(xs)
        assert np.all(v >= y.min() - 1e-12) and np.all(v <= y.max() + 1e-12)


class TestAssembly:
    def build(self, seed=11, F=1.0, n_boxes=6):
        return build_desk_assembly(F, 1.0, 0.5, 1.5, PARETO, seed, n_boxes=n_boxes, levels=3)

    def test_obstacle_count_and_anchors(self):
        asm, ff, obs = self.build()
        assert obs.count >= 50
        assert len(asm.anchors_x) == 6
        assert np.all(asm.anchor_strengths >= asm.params.M)

    def test_anchor_dip_stays_inside_cylinder(self):
        asm, ff, obs = self.build()
        p = asm.params
        for xa, ya in zip(asm.anchors_x, asm.anchors_y):
            xs = xa + np.linspace(-p.r_in, p.r_in, 41)
            v = asm.value(xs % asm.domain_length)
            assert np.all(np.abs(v - ya) <= p.r_in + 1e-9)

    def test_verification_passes(self):
        asm, ff, obs = self.build()
        rep = verify_supersolution(asm, ff, 1.0)
        assert rep.passed
        assert rep.worst_interior_margin < 0
        assert rep.worst_slope_jump >= -1e-9
        assert rep.v_min > 0

    def test_force_above_ceiling_fails_outside_obstacles(self):
        asm, ff, obs = self.build()
        big_f = asm.params.force_ceiling + 1.0
        rep = verify_supersolution(asm, ff, big_f)
        assert not rep.passed
        assert rep.worst_interior_margin > 0

    def test_single_anchor_is_translated_profile(self):
        asm, ff, obs = build_desk_assembly(1.0, 0.05, 0.5, 1.5, PARETO, 3, n_boxes=1, levels=1)
        xa, ya = asm.anchors_x[0], asm.anchors_y[0]
        xs = np.linspace(0, asm.domain_length, 111, endpoint=False)
        L = asm.domain_length
        raw = (xs - xa) % L
        r = np.abs(np.where(raw > L / 2, raw - L, raw))
        manual = np.where(r <= asm.params.r_out,
                          np.asarray(asm.profile.value(np.minimum(r, asm.params.r_out))),
                          np.inf) + ya
        got = asm.value(xs)
        finite = np.isfinite(manual)
        assert np.allclose(got[finite], manual[finite], rtol=1e-12)

    def test_min_of_two_translates_verifies(self):
        # two anchors: v is the pointwise min of two local supersolutions
        asm, ff, obs = build_desk_assembly(1.0, 0.2, 0.5, 1.5, PARETO, 4, n_boxes=2, levels=1)
        rep = verify_supersolution(asm, ff, 1.0)
        assert rep.passed

    def test_round_trip_json_and_revalue(self):
        asm, ff, obs = self.build()
        blob = json.dumps(asm.to_json_dict())
        again = SupersolutionAssembly.from_json_dict(json.loads(blob))
        xs = np.linspace(0, asm.domain_length, 257, endpoint=False)
        assert np.allclose(again.value(xs), asm.value(xs), rtol=1e-14)

    def test_headroom_check_catches_small_box(self):
        asm, ff, obs = self.build()
        # shrink the sampling box ceiling below max(v) + r1
        obs2 = obs
        obs2.box = type(obs.box)(obs.box.x_lengths, obs.box.y_min, float(np.max(asm.value(
            np.linspace(0, asm.domain_length, 512, endpoint=False)))) - 1.0)
        ff2 = ForceField(obs2, ff.bump)
        rep = verify_supersolution(asm, ff2, 1.0)
        assert not rep.headroom_ok and not rep.passed
