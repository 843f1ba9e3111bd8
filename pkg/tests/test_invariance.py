import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evolveq.forms import Subdivision, build_step_form
from evolveq.invariance import (ConvexSet, ToleranceError, audit_trajectory,
                                check_criterion, check_criterion_symmetric,
                                check_step_criterion,
                                offdiagonal_sign_certificate, sample_pool)
from evolveq.presets import convex_set_for, get_preset
from evolveq.propagator import solve


def spd_metric(rng, n, offdiag=0.3):
    m = offdiag * rng.standard_normal((n, n))
    return m @ m.T + np.eye(n)


class TestProjection:
    def test_box_clamp_diagonal_metric(self):
        cset = ConvexSet.box(np.diag([1.0, 2.0, 3.0]), lower=0.0, upper=1.0)
        np.testing.assert_array_equal(cset.project([-1.0, 0.5, 7.0]),
                                      [0.0, 0.5, 1.0])

    def test_box_qp_matches_bound_constrained_oracle(self, rng):
        from scipy.optimize import minimize
        n = 6
        metric = spd_metric(rng, n)
        cset = ConvexSet.box(metric, lower=-0.5, upper=0.5)
        for _ in range(5):
            x = 2.0 * rng.standard_normal(n)
            got = cset.project(x)
            ref = minimize(lambda z: 0.5 * (z - x) @ metric @ (z - x),
                           np.zeros(n), jac=lambda z: metric @ (z - x),
                           method="L-BFGS-B", bounds=[(-0.5, 0.5)] * n,
                           options={"ftol": 1e-15, "gtol": 1e-12}).x
            np.testing.assert_allclose(got, ref, atol=1e-6)

    def test_halfspace_projection(self):
        cset = ConvexSet.halfspace(np.eye(2), np.array([1.0, 0.0]), 1.0)
        np.testing.assert_allclose(cset.project([3.0, 5.0]), [1.0, 5.0])
        np.testing.assert_array_equal(cset.project([0.5, -2.0]), [0.5, -2.0])

    def test_ball_projection(self):
        cset = ConvexSet.ball(np.eye(2), np.zeros(2), 1.0)
        np.testing.assert_allclose(cset.project([3.0, 4.0]), [0.6, 0.8])
        assert cset.distance([3.0, 4.0]) == pytest.approx(4.0)

    def test_bad_constructions(self):
        with pytest.raises(ValueError):
            ConvexSet.box(np.eye(2), lower=1.0, upper=0.0)
        with pytest.raises(ValueError):
            ConvexSet.ball(np.eye(2), np.zeros(2), 0.0)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(min_value=0, max_value=10**6))
    def test_projection_idempotent_and_variational(self, seed):
        rng = np.random.default_rng(seed)
        n = 4
        metric = spd_metric(rng, n)
        kind = rng.choice(["box", "halfspace", "ball"])
        if kind == "box":
            cset = ConvexSet.box(metric, lower=-1.0, upper=1.0)
        elif kind == "halfspace":
            cset = ConvexSet.halfspace(metric, rng.standard_normal(n), 0.5)
        else:
            cset = ConvexSet.ball(metric, rng.standard_normal(n), 1.0)
        x = 3.0 * rng.standard_normal(n)
        px = cset.project(x)
        np.testing.assert_allclose(cset.project(px), px, atol=1e-8)
        # variational inequality (x - Px, v - Px)_metric <= 0 for feasible v
        for _ in range(10):
            v = cset.project(rng.standard_normal(n))
            assert (x - px) @ metric @ (v - px) <= 1e-7


class TestSamplePool:
    def test_pool_size_and_finiteness(self, rng):
        cset = ConvexSet.box(np.eye(5), lower=0.0)
        pool = sample_pool(rng, cset, 100, 5)
        assert pool.shape == (100, 5)
        assert np.all(np.isfinite(pool))

    def test_pool_is_seed_deterministic(self):
        cset = ConvexSet.box(np.eye(5), lower=0.0)
        p1 = sample_pool(np.random.default_rng(7), cset, 60, 5)
        p2 = sample_pool(np.random.default_rng(7), cset, 60, 5)
        np.testing.assert_array_equal(p1, p2)


class TestCriterion:
    def test_heat_box_margin_nonnegative(self, heat_homogeneous):
        family = heat_homogeneous.problem.family
        cset = convex_set_for(heat_homogeneous, "box", lower=0.0)
        report = check_criterion(family, cset, n_vectors=2000, seed=3)
        assert report.margin >= 0.0

    def test_symmetric_variant_heat(self, heat_homogeneous):
        family = heat_homogeneous.problem.family
        cset = convex_set_for(heat_homogeneous, "box", lower=0.0)
        report = check_criterion_symmetric(family, cset, n_vectors=2000, seed=3)
        assert report.margin >= -1e-12

    def test_symmetric_variant_rejects_nonsymmetric(self, heat_homogeneous):
        from evolveq.forms import FormFamily
        base = heat_homogeneous.problem.family
        asym = FormFamily(base.space, base.eval, base.horizon, symmetric=False)
        cset = convex_set_for(heat_homogeneous, "box", lower=0.0)
        with pytest.raises(ValueError):
            check_criterion_symmetric(asym, cset)

    def test_broken_coupling_detected_both_ways(self):
        preset = get_preset("broken-coupling")
        family = preset.problem.family
        cset = convex_set_for(preset, "box", lower=0.0)
        report = check_criterion(family, cset, n_vectors=2000, seed=0)
        assert report.margin < 0.0
        assert np.isfinite(report.witness).all()
        traj = solve(preset.problem, Subdivision.uniform(preset.problem.horizon, 8))
        assert audit_trajectory(traj, cset) > 0.0

    def test_audit_heat_trajectory_zero(self, heat_homogeneous):
        cset = convex_set_for(heat_homogeneous, "box", lower=0.0)
        traj = solve(heat_homogeneous.problem,
                     Subdivision.uniform(heat_homogeneous.problem.horizon, 32))
        assert audit_trajectory(traj, cset) <= 1e-12


class TestCertificates:
    def test_heat_stencil_sign_certificate(self, heat_preset):
        a = heat_preset.problem.family.matrix(0.4)
        assert offdiagonal_sign_certificate(a)

    def test_broken_stencil_fails_certificate(self):
        preset = get_preset("broken-coupling")
        assert not offdiagonal_sign_certificate(preset.problem.family.matrix(0.0))

    def test_step_criterion_autonomous_is_exact(self):
        preset = get_preset("constant-heat", n_cells=16, load="none")
        family = preset.problem.family
        sf = build_step_form(family, Subdivision.uniform(family.horizon, 4))
        cset = convex_set_for(preset, "box", lower=0.0)
        worst = check_step_criterion(sf, family, cset, n_vectors=500, seed=1)
        assert abs(worst) <= 1e-12

    def test_step_criterion_heat_small(self, heat_homogeneous):
        family = heat_homogeneous.problem.family
        sf = build_step_form(family, Subdivision.uniform(family.horizon, 8))
        cset = convex_set_for(heat_homogeneous, "box", lower=0.0)
        worst = check_step_criterion(sf, family, cset, n_vectors=500, seed=1)
        assert np.isfinite(worst)
        assert worst >= -1e-3
