import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from virodyne.channel import (
    Environment,
    FieldQuery,
    HalfSpaceReflecting,
    RectangularDuctReflecting,
    Scenario,
    SourceSpec,
    concentration_continuous,
    concentration_instant,
    concentration_moving_source,
    concentration_multi_source,
    concentration_steady,
    continuous_point_concentration,
    evaluate_field,
    image_points,
    unit_instant_kernel,
)
from virodyne.core import Velocity
from virodyne.errors import OutOfRange, QuadratureFailure, SingularPoint
from virodyne.mobility import Trajectory

ENV40 = Environment(diffusivity=40.0)


class TestInstant:
    def test_zero_mass(self):
        src = SourceSpec.instant((0, 0, 0), 0.0)
        assert concentration_instant(src, ENV40, (1, 2, 3), 5.0) == 0.0

    def test_hand_evaluated_peak(self):
        # Q=1, D=1, v=0, r=r0, tau=1/(4 pi): (4 pi D tau)^(-3/2) = 1.
        env = Environment(diffusivity=1.0)
        src = SourceSpec.instant((0, 0, 0), 1.0)
        c = concentration_instant(src, env, (0, 0, 0), 1.0 / (4 * math.pi))
        assert c == pytest.approx(1.0, rel=1e-12)

    def test_radial_symmetry(self):
        src = SourceSpec.instant((1, 1, 1), 2.0)
        a = concentration_instant(src, ENV40, (1 + 3, 1, 1), 7.0)
        b = concentration_instant(src, ENV40, (1, 1 - 3, 1), 7.0)
        assert a == pytest.approx(b, rel=1e-14)

    def test_before_release_is_zero(self):
        src = SourceSpec.instant((0, 0, 0), 1.0, start_time=10.0)
        assert concentration_instant(src, ENV40, (1, 0, 0), 9.0) == 0.0
        assert concentration_instant(src, ENV40, (1, 0, 0), 10.0) == 0.0

    def test_galilean_consistency(self):
        # With wind v the free-space field equals the still field at r - v tau.
        wind = Velocity(1.5, -0.5, 2.0)
        env_w = Environment(diffusivity=3.0, wind=wind)
        env_0 = Environment(diffusivity=3.0)
        src = SourceSpec.instant((0.5, 1.0, -2.0), 1.7, start_time=1.0)
        t = 6.0
        tau = t - src.start_time
        r = np.array([4.0, 2.0, 1.0])
        shifted = r - wind.as_array() * tau
        a = concentration_instant(src, env_w, r, t)
        b = concentration_instant(src, env_0, shifted, t)
        assert a == pytest.approx(b, rel=1e-12)

    @given(st.floats(0.1, 50), st.floats(0.05, 20),
           st.floats(-20, 20), st.floats(-20, 20), st.floats(-20, 20))
    @settings(max_examples=50, deadline=None)
    def test_non_negative(self, d_coeff, tau, x, y, z):
        env = Environment(diffusivity=d_coeff)
        src = SourceSpec.instant((0, 0, 0), 1.0)
        assert concentration_instant(src, env, (x, y, z), tau) >= 0.0


class TestContinuous:
    def test_steady_state_limit(self):
        src = SourceSpec.continuous(1.0, position=(0, 0, 0))
        limit = 1.0 / (1600 * math.pi)
        assert concentration_steady(src, ENV40, (10, 0, 0)) == pytest.approx(limit)
        # finite-time values approach the limit from below
        c1 = concentration_continuous(src, ENV40, (10, 0, 0), 1e3)
        c2 = concentration_continuous(src, ENV40, (10, 0, 0), 1e5)
        assert c1 < c2 < limit

    def test_zero_at_start_time(self):
        src = SourceSpec.continuous(1.0, position=(0, 0, 0), start_time=5.0)
        assert concentration_continuous(src, ENV40, (3, 0, 0), 5.0) == 0.0

    def test_monotone_in_time(self):
        src = SourceSpec.continuous(2.0, position=(0, 0, 0))
        ts = [1.0, 5.0, 20.0, 100.0, 1000.0]
        vals = [concentration_continuous(src, ENV40, (7, 1, 0), t) for t in ts]
        assert all(a < b for a, b in zip(vals, vals[1:]))

    def test_singular_at_source(self):
        src = SourceSpec.continuous(1.0, position=(1, 2, 3))
        with pytest.raises(SingularPoint):
            concentration_continuous(src, ENV40, (1, 2, 3), 10.0)
        with pytest.raises(SingularPoint):
            concentration_steady(src, ENV40, (1, 2, 3))

    def test_closed_form_matches_time_quadrature_of_instant(self):
        # Independent oracle: integrate the instant kernel over emissions.
        src = SourceSpec.continuous(1.0, position=(0, 0, 0))
        r = np.array([6.0, 2.0, -1.0])
        t = 50.0
        ss = np.linspace(0, t, 20001)
        taus = t - ss
        kern = unit_instant_kernel(ENV40, np.zeros(3), r, taus)
        oracle = np.trapezoid(kern, ss)
        closed = concentration_continuous(src, ENV40, r, t)
        assert closed == pytest.approx(oracle, rel=1e-5)

    def test_quadrature_path_with_wind_matches_fine_trapezoid(self):
        env = Environment(diffusivity=10.0, wind=Velocity(1.0, 0.0, 0.0))
        src = SourceSpec.continuous(0.5, position=(0, 0, 0))
        r = np.array([8.0, 1.0, 0.0])
        t = 30.0
        ss = np.linspace(0, t, 40001)
        kern = unit_instant_kernel(env, np.zeros(3), r, t - ss)
        oracle = 0.5 * np.trapezoid(kern, ss)
        val = concentration_continuous(src, env, r, t)
        assert val == pytest.approx(oracle, rel=1e-4)

    def test_time_varying_rate_uses_quadrature(self):
        rate = lambda s: 1.0 if s < 10.0 else 0.0
        src = SourceSpec.continuous(rate, position=(0, 0, 0))
        const = SourceSpec.continuous(1.0, position=(0, 0, 0))
        r = (5, 0, 0)
        early = concentration_continuous(src, ENV40, r, 8.0)
        assert early == pytest.approx(
            concentration_continuous(const, ENV40, r, 8.0), rel=1e-5)
        # after shutoff the pulse decays below the always-on field
        assert concentration_continuous(src, ENV40, r, 60.0) < \
            concentration_continuous(const, ENV40, r, 60.0)

    def test_fast_scalar_helper_matches(self):
        src = SourceSpec.continuous(1.3, position=(1, 0, 2), start_time=2.0)
        a = concentration_continuous(src, ENV40, (4, 4, 4), 9.0)
        b = continuous_point_concentration(ENV40, (1, 0, 2), 1.3, 2.0,
                                           (4, 4, 4), 9.0)
        assert a == b


class TestMovingSource:
    def test_static_trajectory_degenerates_to_continuous(self):
        traj = Trajectory.static((0, 0, 25), 0.0, 100.0)
        moving = SourceSpec.continuous(1.0, trajectory=traj)
        static = SourceSpec.continuous(1.0, position=(0, 0, 25))
        a = concentration_moving_source(moving, ENV40, (35, 0, 25), 60.0)
        b = concentration_continuous(static, ENV40, (35, 0, 25), 60.0)
        assert a == pytest.approx(b, rel=1e-6)

    def test_trajectory_must_cover_query_time(self):
        traj = Trajectory.straight_line((0, 0, 0), (1, 0, 0), 0.0, 10.0)
        src = SourceSpec.continuous(1.0, trajectory=traj)
        with pytest.raises(OutOfRange):
            concentration_moving_source(src, ENV40, (5, 0, 0), 20.0)

    def test_quadrature_failure_at_singular_passage(self):
        # The observer sits exactly on the path at the passage instant.
        traj = Trajectory.straight_line((0, 0, 25), (2, 0, 0), 0.0, 100.0)
        src = SourceSpec.continuous(1.0, trajectory=traj)
        with pytest.raises(QuadratureFailure) as err:
            concentration_moving_source(src, ENV40, (35, 0, 25), 17.5)
        assert err.value.estimate > 0
        assert err.value.error_bound > 0

    def test_deterministic(self):
        traj = Trajectory.straight_line((0, 0, 0), (1.5, 0, 0), 0.0, 50.0)
        src = SourceSpec.continuous(1.0, trajectory=traj)
        a = concentration_moving_source(src, ENV40, (20, 3, 1), 30.0)
        b = concentration_moving_source(src, ENV40, (20, 3, 1), 30.0)
        assert a == b


class TestMultiSource:
    def test_singleton_equals_single(self):
        src = SourceSpec.continuous(1.0, position=(0, 0, 0))
        a = concentration_multi_source([src], ENV40, (5, 5, 5), 12.0)
        b = concentration_continuous(src, ENV40, (5, 5, 5), 12.0)
        assert a == b

    def test_two_colocated_sources_double(self):
        src = SourceSpec.instant((1, 1, 1), 0.7)
        single = concentration_instant(src, ENV40, (3, 0, 0), 4.0)
        both = concentration_multi_source([src, src], ENV40, (3, 0, 0), 4.0)
        assert both == pytest.approx(2 * single, rel=1e-14)

    def test_mixed_kinds_superpose(self):
        s1 = SourceSpec.instant((0, 0, 0), 1.0)
        s2 = SourceSpec.continuous(0.5, position=(10, 0, 0))
        r, t = (5, 0, 0), 8.0
        total = concentration_multi_source([s1, s2], ENV40, r, t)
        assert total == pytest.approx(
            concentration_instant(s1, ENV40, r, t)
            + concentration_continuous(s2, ENV40, r, t))


class TestBoundaries:
    def test_halfspace_normal_derivative_vanishes(self):
        env = Environment(diffusivity=2.0, boundary=HalfSpaceReflecting())
        src = SourceSpec.instant((0, 0, 3), 1.0)
        h = 1e-4
        for (x, y) in [(1.0, 0.5), (-2.0, 1.0), (0.0, 0.0)]:
            up = concentration_instant(src, env, (x, y, h), 2.0)
            dn = concentration_instant(src, env, (x, y, -h), 2.0)
            mid = concentration_instant(src, env, (x, y, 0.0), 2.0)
            assert abs(up - dn) / (2 * h) <= 1e-6 * mid / 1.0

    def test_halfspace_doubles_on_plane_source(self):
        env_h = Environment(diffusivity=1.0, boundary=HalfSpaceReflecting())
        env_f = Environment(diffusivity=1.0)
        src = SourceSpec.instant((0, 0, 0), 1.0)
        a = concentration_instant(src, env_h, (1, 1, 0.5), 1.0)
        b = concentration_instant(src, env_f, (1, 1, 0.5), 1.0)
        assert a > b  # reflected mass adds

    def test_duct_wall_derivative_vanishes(self):
        duct = RectangularDuctReflecting(width=2.0, height=1.5, image_order=10)
        env = Environment(diffusivity=0.5, boundary=duct)
        src = SourceSpec.instant((0, 0.7, 0.9), 1.0)
        h = 1e-4
        up = concentration_instant(src, env, (0.5, h, 0.8), 1.0)
        dn = concentration_instant(src, env, (0.5, -h, 0.8), 1.0)
        mid = concentration_instant(src, env, (0.5, 0.0, 0.8), 1.0)
        assert abs(up - dn) / (2 * h) <= 1e-6 * mid

    def test_duct_conserves_cross_section_mass(self):
        # Integrated over the duct cross-section the 1-D image sums are
        # nearly lossless, so the x-marginal stays Gaussian-normalized.
        duct = RectangularDuctReflecting(width=1.0, height=1.0, image_order=12)
        env = Environment(diffusivity=0.3, boundary=duct)
        src = SourceSpec.instant((0, 0.4, 0.6), 1.0)
        ys = np.linspace(0, 1, 41)
        zs = np.linspace(0, 1, 41)
        xs = np.linspace(-6, 6, 121)
        total = 0.0
        t = 1.0
        for x in xs:
            grid = np.array([(x, y, z) for y in ys for z in zs])
            vals = unit_instant_kernel(env, src.position.as_array(), grid,
                                       np.full(len(grid), t))
            plane = np.trapezoid(
                np.trapezoid(vals.reshape(41, 41), zs, axis=1), ys)
            total += plane
        total *= xs[1] - xs[0]
        assert total == pytest.approx(1.0, rel=1e-3)

    def test_wind_boundary_compatibility(self):
        with pytest.raises(ValueError):
            Environment(diffusivity=1.0, wind=Velocity(0, 0, 1),
                        boundary=HalfSpaceReflecting())
        with pytest.raises(ValueError):
            Environment(diffusivity=1.0, wind=Velocity(0, 1, 0),
                        boundary=RectangularDuctReflecting(1, 1))
        Environment(diffusivity=1.0, wind=Velocity(2, 0, 0),
                    boundary=RectangularDuctReflecting(1, 1))

    def test_image_points_counts(self):
        assert len(image_points(ENV40, np.zeros(3))) == 1
        env_h = Environment(diffusivity=1.0, boundary=HalfSpaceReflecting())
        assert len(image_points(env_h, np.array([0, 0, 2.0]))) == 2
        duct = RectangularDuctReflecting(1.0, 1.0, image_order=3)
        env_d = Environment(diffusivity=1.0, boundary=duct)
        assert len(image_points(env_d, np.array([0, 0.5, 0.5]))) == (2 * 7) ** 2


class TestEvaluateField:
    def test_empty_query(self):
        q = FieldQuery.from_pairs([])
        out = evaluate_field(q, Scenario(ENV40, [SourceSpec.instant((0, 0, 0), 1.0)]))
        assert out.size == 0

    def test_permutation_purity(self):
        src = SourceSpec.instant((0, 0, 0), 1.0)
        pts = [((x, y, 0.0), 3.0) for x in (1, 2, 3) for y in (0, 1, 4)]
        q = FieldQuery.from_pairs(pts)
        out = evaluate_field(q, Scenario(ENV40, [src]))
        perm = list(reversed(range(len(pts))))
        q2 = FieldQuery.from_pairs([pts[i] for i in perm])
        out2 = evaluate_field(q2, Scenario(ENV40, [src]))
        assert np.array_equal(out2, out[perm])

    def test_matches_scalar_calls(self):
        sources = [SourceSpec.instant((0, 0, 0), 1.0),
                   SourceSpec.continuous(0.3, position=(5, 5, 5))]
        pts = [((1.0, 2.0, 0.5), 4.0), ((4.0, 4.0, 4.0), 0.5),
               ((9.0, 9.0, 9.0), 25.0)]
        q = FieldQuery.from_pairs(pts)
        out = evaluate_field(q, Scenario(ENV40, sources))
        for (r, t), got in zip(pts, out):
            assert got == pytest.approx(
                concentration_multi_source(sources, ENV40, r, t), rel=1e-12)

    def test_pre_emission_points_are_zero(self):
        src = SourceSpec.continuous(1.0, position=(0, 0, 0), start_time=100.0)
        q = FieldQuery.from_pairs([((1, 1, 1), 5.0), ((1, 1, 1), 99.9)])
        out = evaluate_field(q, Scenario(ENV40, [src]))
        assert (out == 0.0).all()

    def test_thread_count_invariance(self, monkeypatch):
        src = SourceSpec.continuous(1.0, position=(0, 0, 25))
        q = FieldQuery.from_grid([35.0], [0.0], np.linspace(0, 50, 21), [30.0])
        monkeypatch.setenv("VIRODYNE_THREADS", "1")
        a = evaluate_field(q, Scenario(ENV40, [src]), chunk_size=4)
        monkeypatch.setenv("VIRODYNE_THREADS", "8")
        b = evaluate_field(q, Scenario(ENV40, [src]), chunk_size=4)
        assert np.array_equal(a, b)

    def test_pointwise_errors_carry_indices(self):
        from virodyne.errors import FieldEvaluationError
        src = SourceSpec.continuous(1.0, position=(0, 0, 0))
        q = FieldQuery.from_pairs([
            ((1, 0, 0), 5.0),
            ((0, 0, 0), 5.0),  # singular: observer on the source
            ((2, 0, 0), 5.0),
        ])
        with pytest.raises(FieldEvaluationError) as err:
            evaluate_field(q, Scenario(ENV40, [src]))
        assert [i for i, _ in err.value.failures] == [1]
