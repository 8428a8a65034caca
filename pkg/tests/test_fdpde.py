"""Cross-validation of the closed-form/quadrature solvers against the
independent explicit finite-difference route."""

import numpy as np
import pytest

from virodyne.channel import (
    Environment,
    SourceSpec,
    concentration_continuous,
    concentration_instant,
    concentration_multi_source,
)
from virodyne.core import Velocity
from virodyne.fdpde import FdGrid, FdSolution, solve_advection_diffusion


def _probe_points(rng, sol: FdSolution, n, exclude_fn, margin=12.0, floor=0.01):
    lo = np.array(sol.grid.lo) + margin
    hi = np.array(sol.grid.hi) - margin
    fd_max = sol.field.max()
    probes = []
    while len(probes) < n:
        p = rng.uniform(lo, hi)
        if exclude_fn(p):
            continue
        if sol.sample(p[None, :])[0] < floor * fd_max:
            continue
        probes.append(p)
    return np.array(probes)


class TestFdSolver:
    def test_stability_guard(self):
        grid = FdGrid((-5, -5, -5), (5, 5, 5), (11, 11, 11))
        with pytest.raises(ValueError):
            solve_advection_diffusion(grid, 10.0, (0, 0, 0),
                                      [SourceSpec.instant((0, 0, 0), 1.0)],
                                      t_end=1.0, dt=1.0)

    def test_instant_source_mass_on_grid(self):
        # Absorbing walls far away: deposited mass stays on the grid.
        grid = FdGrid((-20, -20, -20), (20, 20, 20), (41, 41, 41))
        src = SourceSpec.instant((0.3, -0.2, 0.1), 2.0)
        sol = solve_advection_diffusion(grid, 1.0, (0, 0, 0), [src], t_end=2.0)
        mass = sol.field.sum() * sol.grid.cell_volume()
        assert mass == pytest.approx(2.0, rel=1e-6)

    def test_instant_vs_analytic(self):
        # A lattice delta carries the largest early-time truncation error,
        # so this case gets the finest grid.
        grid = FdGrid((-30, -30, -30), (30, 30, 30), (61, 61, 61))
        env = Environment(diffusivity=8.0, wind=Velocity(1.0, 0.0, 0.0))
        src = SourceSpec.instant((-2.0, 0.0, 0.0), 1.0)
        t_end = 4.0
        sol = solve_advection_diffusion(grid, 8.0, (1.0, 0.0, 0.0), [src], t_end)
        rng = np.random.default_rng(3)
        probes = _probe_points(
            rng, sol, 12,
            exclude_fn=lambda p: np.linalg.norm(p - np.array([-2 + 1 * t_end, 0, 0])) < 4.0,
            margin=10.0, floor=0.05,
        )
        fd = sol.sample(probes)
        an = np.array([concentration_instant(src, env, p, t_end) for p in probes])
        assert (np.abs(fd - an) / an).max() < 0.05

    def test_continuous_vs_analytic(self):
        grid = FdGrid((-30, -30, -30), (30, 30, 30), (41, 41, 41))
        env = Environment(diffusivity=10.0)
        src = SourceSpec.continuous(1.0, position=(0.0, 0.0, 0.0))
        t_end = 2.0
        sol = solve_advection_diffusion(grid, 10.0, (0, 0, 0), [src], t_end)
        rng = np.random.default_rng(4)
        probes = _probe_points(
            rng, sol, 12,
            exclude_fn=lambda p: np.linalg.norm(p) < 5.0,
            margin=10.0,
        )
        fd = sol.sample(probes)
        an = np.array([concentration_continuous(src, env, p, t_end) for p in probes])
        assert (np.abs(fd - an) / an).max() < 0.05

    def test_multi_source_vs_analytic(self):
        # Three seeded random sources against the superposed closed forms.
        grid = FdGrid((-30, -30, -30), (30, 30, 30), (61, 61, 61))
        env = Environment(diffusivity=6.0)
        rng = np.random.default_rng(11)
        sources = []
        for _ in range(3):
            pos = tuple(rng.uniform(-6, 6, size=3))
            if rng.uniform() < 0.5:
                sources.append(SourceSpec.instant(pos, rng.uniform(0.5, 2.0)))
            else:
                sources.append(SourceSpec.continuous(rng.uniform(0.2, 1.0),
                                                     position=pos))
        t_end = 3.0
        sol = solve_advection_diffusion(grid, 6.0, (0, 0, 0), sources, t_end)

        def near_any_source(p):
            return any(np.linalg.norm(p - np.array(s.position.as_array())) < 5.0
                       for s in sources)

        probes = _probe_points(np.random.default_rng(12), sol, 12,
                               exclude_fn=near_any_source, margin=10.0,
                               floor=0.05)
        fd = sol.sample(probes)
        an = np.array([concentration_multi_source(sources, env, p, t_end)
                       for p in probes])
        assert (np.abs(fd - an) / an).max() < 0.05

    def test_reflecting_wall_vs_halfspace_images(self):
        # FD with a reflecting floor against the image-sum solution. The FD
        # box only refects at z = lo, so keep the plume away from other walls.
        grid = FdGrid((-24, -24, 0), (24, 24, 48), (41, 41, 41))
        env = Environment(diffusivity=4.0,
                          boundary=__import__("virodyne").HalfSpaceReflecting())
        src = SourceSpec.instant((0.0, 0.0, 3.0), 1.0)
        t_end = 3.0
        sol = solve_advection_diffusion(grid, 4.0, (0, 0, 0), [src], t_end,
                                        boundary="reflecting")
        probes = np.array([[2.0, 1.0, 1.5], [0.0, -3.0, 4.0], [4.0, 0.0, 0.8],
                           [-2.0, 2.0, 6.0]])
        fd = sol.sample(probes)
        an = np.array([concentration_instant(src, env, p, t_end) for p in probes])
        assert (np.abs(fd - an) / an).max() < 0.05

    def test_space_varying_velocity_runs(self):
        # Shear flow is only available through this solver.
        grid = FdGrid((-15, -15, -15), (15, 15, 15), (31, 31, 31))

        def shear(points, t):
            v = np.zeros_like(points)
            v[:, 0] = 0.2 * points[:, 1]
            return v

        src = SourceSpec.instant((0, 0, 0), 1.0)
        sol = solve_advection_diffusion(grid, 2.0, shear, [src], t_end=1.0)
        assert sol.field.min() > -1e-9
        assert sol.field.max() > 0
