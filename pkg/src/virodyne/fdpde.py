"""Explicit finite-difference solver for the advection-diffusion equation.

This is the package's independent numerical route: it never touches the
closed-form kernels in :mod:`virodyne.channel`, so the two can validate each
other. It is also the only solver that accepts a space- and time-varying
velocity field v(r, t).

Forward-Euler time stepping with central differences (second order in
space); sources are deposited with trilinear (cloud-in-cell) weights each
step. Walls are either absorbing (c = 0 outside) or reflecting (zero normal
flux). The scheme is conditionally stable; the default time step respects
both the diffusive bound dt <= 1 / (2 D sum(1/h_i^2)) and the advective CFL
bound with a 0.4 safety factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence, Union

import numpy as np

from .channel import SourceKind, SourceSpec

VelocityField = Union[Sequence[float], np.ndarray, Callable[[np.ndarray, float], np.ndarray]]


@dataclass(frozen=True)
class FdGrid:
    """Uniform cell-centered grid over an axis-aligned box."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    shape: tuple[int, int, int]

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if not (hi > lo).all():
            raise ValueError("grid box must have positive extent")
        if any(n < 3 for n in self.shape):
            raise ValueError("need at least 3 cells per axis")
        object.__setattr__(self, "lo", tuple(float(v) for v in lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in hi))
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))

    @property
    def spacing(self) -> np.ndarray:
        lo = np.array(self.lo)
        hi = np.array(self.hi)
        return (hi - lo) / np.array(self.shape, dtype=float)

    def axis_centers(self, axis: int) -> np.ndarray:
        h = self.spacing[axis]
        return self.lo[axis] + (np.arange(self.shape[axis]) + 0.5) * h

    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def cell_centers(self) -> np.ndarray:
        xs, ys, zs = (self.axis_centers(k) for k in range(3))
        xx, yy, zz = np.meshgrid(xs, ys, zs, indexing="ij")
        return np.stack([xx, yy, zz], axis=-1)


def _pad(c: np.ndarray, boundary: str) -> np.ndarray:
    mode = "edge" if boundary == "reflecting" else "constant"
    return np.pad(c, 1, mode=mode)


def _laplacian(cp: np.ndarray, h: np.ndarray) -> np.ndarray:
    core = cp[1:-1, 1:-1, 1:-1]
    lap = (cp[2:, 1:-1, 1:-1] - 2 * core + cp[:-2, 1:-1, 1:-1]) / h[0] ** 2
    lap += (cp[1:-1, 2:, 1:-1] - 2 * core + cp[1:-1, :-2, 1:-1]) / h[1] ** 2
    lap += (cp[1:-1, 1:-1, 2:] - 2 * core + cp[1:-1, 1:-1, :-2]) / h[2] ** 2
    return lap


def _gradient(cp: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    gx = (cp[2:, 1:-1, 1:-1] - cp[:-2, 1:-1, 1:-1]) / (2 * h[0])
    gy = (cp[1:-1, 2:, 1:-1] - cp[1:-1, :-2, 1:-1]) / (2 * h[1])
    gz = (cp[1:-1, 1:-1, 2:] - cp[1:-1, 1:-1, :-2]) / (2 * h[2])
    return gx, gy, gz


def _deposit_cic(field: np.ndarray, grid: FdGrid, point: np.ndarray, amount: float) -> None:
    """Spread `amount` (kg) onto the 8 cells around `point` with trilinear
    weights, as a concentration increment (divided by cell volume)."""
    h = grid.spacing
    lo = np.array(grid.lo)
    # Fractional index of the cell-center lattice.
    f = (np.asarray(point, dtype=float) - lo) / h - 0.5
    i0 = np.floor(f).astype(int)
    w1 = f - i0
    w0 = 1.0 - w1
    dens = amount / grid.cell_volume()
    for dx, wx in ((0, w0[0]), (1, w1[0])):
        ix = i0[0] + dx
        if not 0 <= ix < grid.shape[0]:
            continue
        for dy, wy in ((0, w0[1]), (1, w1[1])):
            iy = i0[1] + dy
            if not 0 <= iy < grid.shape[1]:
                continue
            for dz, wz in ((0, w0[2]), (1, w1[2])):
                iz = i0[2] + dz
                if not 0 <= iz < grid.shape[2]:
                    continue
                field[ix, iy, iz] += dens * wx * wy * wz


@dataclass
class FdSolution:
    grid: FdGrid
    field: np.ndarray
    t_end: float
    steps: int

    def sample(self, points: np.ndarray) -> np.ndarray:
        """Trilinear interpolation of the final field at arbitrary points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        h = self.grid.spacing
        lo = np.array(self.grid.lo)
        out = np.zeros(pts.shape[0])
        f = (pts - lo) / h - 0.5
        i0 = np.floor(f).astype(int)
        w1 = f - i0
        w0 = 1.0 - w1
        for k, (dx, dy, dz) in enumerate(
            (a, b, c) for a in (0, 1) for b in (0, 1) for c in (0, 1)
        ):
            ix = np.clip(i0[:, 0] + dx, 0, self.grid.shape[0] - 1)
            iy = np.clip(i0[:, 1] + dy, 0, self.grid.shape[1] - 1)
            iz = np.clip(i0[:, 2] + dz, 0, self.grid.shape[2] - 1)
            w = ((w1 if dx else w0)[:, 0] * (w1 if dy else w0)[:, 1]
                 * (w1 if dz else w0)[:, 2])
            out += w * self.field[ix, iy, iz]
        return out


def _velocity_on_grid(velocity: VelocityField, grid: FdGrid, t: float,
                      centers: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if callable(velocity):
        flat = velocity(centers.reshape(-1, 3), t)
        v = np.asarray(flat, dtype=float).reshape(grid.shape + (3,))
        return v[..., 0], v[..., 1], v[..., 2]
    v = np.asarray(velocity, dtype=float)
    shape = grid.shape
    return (np.full(shape, v[0]), np.full(shape, v[1]), np.full(shape, v[2]))


def _max_speed(velocity: VelocityField, grid: FdGrid, centers: np.ndarray) -> float:
    if callable(velocity):
        vx, vy, vz = _velocity_on_grid(velocity, grid, 0.0, centers)
        return float(np.sqrt(vx**2 + vy**2 + vz**2).max())
    return float(np.linalg.norm(np.asarray(velocity, dtype=float)))


def solve_advection_diffusion(
    grid: FdGrid,
    diffusivity: float,
    velocity: VelocityField,
    sources: Iterable[SourceSpec],
    t_end: float,
    dt: float | None = None,
    boundary: str = "absorbing",
) -> FdSolution:
    """March c_t = D lap(c) - v . grad(c) + sources from t=0 to t_end.

    boundary: 'absorbing' (c=0 beyond the walls) or 'reflecting' (zero
    normal flux). Instant sources inject their mass at the first step at or
    after their start time; continuous sources deposit rate * dt per step at
    their (possibly moving) midpoint-in-time position.

    For callable velocity fields the advective stability bound is estimated
    from the field at t=0; pass dt explicitly if the flow speeds up later.
    """
    if boundary not in ("absorbing", "reflecting"):
        raise ValueError("boundary must be 'absorbing' or 'reflecting'")
    D = float(diffusivity)
    if D <= 0:
        raise ValueError("diffusivity must be > 0")
    t_end = float(t_end)
    if t_end <= 0:
        raise ValueError("t_end must be > 0")
    h = grid.spacing
    centers = grid.cell_centers()
    diff_bound = 0.5 / (D * float((1.0 / h**2).sum()))
    vmax = _max_speed(velocity, grid, centers)
    adv_bound = float(h.min()) / vmax if vmax > 0 else math.inf
    dt_stable = 0.4 * min(diff_bound, adv_bound)
    if dt is None:
        n_steps = max(1, int(math.ceil(t_end / dt_stable)))
        dt = t_end / n_steps
    else:
        dt = float(dt)
        if dt > min(diff_bound, adv_bound):
            raise ValueError(
                f"dt={dt} exceeds the stability bound "
                f"{min(diff_bound, adv_bound):.3g}"
            )
        n_steps = max(1, int(round(t_end / dt)))
        dt = t_end / n_steps

    sources = list(sources)
    const_vel = not callable(velocity)
    if const_vel:
        vx, vy, vz = _velocity_on_grid(velocity, grid, 0.0, centers)

    c = np.zeros(grid.shape)
    injected_instant = [False] * len(sources)
    t = 0.0
    for step in range(n_steps):
        t_mid = t + 0.5 * dt
        for k, src in enumerate(sources):
            if src.kind is SourceKind.INSTANT:
                if not injected_instant[k] and t + dt >= src.start_time:
                    _deposit_cic(c, grid, src.point_at(src.start_time), src.strength)
                    injected_instant[k] = True
            else:
                if t_mid >= src.start_time:
                    pos = src.point_at(min(t_mid, src.trajectory.t_end)
                                       if src.trajectory is not None else t_mid)
                    _deposit_cic(c, grid, pos, src.rate_at(t_mid) * dt)
        cp = _pad(c, boundary)
        lap = _laplacian(cp, h)
        gx, gy, gz = _gradient(cp, h)
        if not const_vel:
            vx, vy, vz = _velocity_on_grid(velocity, grid, t_mid, centers)
        c = c + dt * (D * lap - (vx * gx + vy * gy + vz * gz))
        t += dt
    return FdSolution(grid=grid, field=c, t_end=t, steps=n_steps)
