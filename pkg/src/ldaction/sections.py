"""Grids of initial conditions on phase-space slices and Poincare maps.

Two slice kinds exist: ``full_plane`` for the 1-DoF systems, where a 2-D
lattice point is already the full (q, p) state, and ``energy_section`` for
the 2-DoF system, where one coordinate is held fixed and the conjugate
momentum is solved from energy conservation (non-negative root by the
section's sign convention).  Lattice points below the energy threshold are
infeasible and masked rather than rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import PhaseState, System
from .integrate import rk4_step, ESCAPE_THRESHOLD

CROSSING_TOL = 1.0e-10

_COORD_NAMES = {1: ("q", "p"), 2: ("x", "y", "px", "py")}


@dataclass(frozen=True)
class Axis:
    lo: float
    hi: float
    count: int

    def __post_init__(self):
        if self.count < 2:
            raise ValueError("axis resolution must be at least 2")
        if not self.hi > self.lo:
            raise ValueError("axis range must be non-empty")

    def values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.count)

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (self.count - 1)


@dataclass(frozen=True)
class SectionSpec:
    kind: str                      # "full_plane" or "energy_section"
    x_axis: Axis
    y_axis: Axis
    axis_names: tuple = ("q", "p")
    fixed: Optional[tuple] = None   # (coordinate name, value)
    solved: Optional[tuple] = None  # (momentum name, sign in {+1, -1})
    energy: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("full_plane", "energy_section"):
            raise ValueError(f"unknown section kind {self.kind!r}")
        if self.kind == "energy_section":
            if self.fixed is None or self.solved is None or self.energy is None:
                raise ValueError("energy_section needs fixed, solved and energy")
            if self.solved[1] not in (1, -1):
                raise ValueError("solved momentum sign must be +1 or -1")


def coord_index(system: System, name: str) -> int:
    names = _COORD_NAMES[system.dim]
    try:
        return names.index(name)
    except ValueError:
        raise ValueError(f"unknown coordinate {name!r} for a {system.dim}-DoF system") from None


@dataclass
class SectionGrid:
    """Row-major lattice on a section, optionally lifted to full states."""

    spec: SectionSpec
    points: np.ndarray           # (N, 2) section coordinates, x-major
    states: Optional[np.ndarray] = None   # (N, 2n) lifted states
    feasible: Optional[np.ndarray] = None  # (N,) bool

    @property
    def nx(self) -> int:
        return self.spec.x_axis.count

    @property
    def ny(self) -> int:
        return self.spec.y_axis.count

    def flat_index(self, i: int, j: int) -> int:
        return i * self.ny + j

    def point(self, i: int, j: int) -> np.ndarray:
        return self.points[self.flat_index(i, j)]


def build_grid(spec: SectionSpec, system: Optional[System] = None) -> SectionGrid:
    """Inclusive-endpoint lattice of section points; lifted when a system is given."""
    xv = spec.x_axis.values()
    yv = spec.y_axis.values()
    gx, gy = np.meshgrid(xv, yv, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    grid = SectionGrid(spec=spec, points=pts)
    if system is not None:
        grid.states, grid.feasible = lift_points(system, spec, pts)
    return grid


def lift_points(system: System, spec: SectionSpec, pts: np.ndarray):
    """Vectorized lift of section points to phase-space states."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    n = system.dim
    if spec.kind == "full_plane":
        if n != 1:
            raise ValueError("full_plane sections require a 1-DoF system")
        states = pts.copy()
        return states, np.ones(len(pts), dtype=bool)

    width = 2 * n
    states = np.zeros((len(pts), width))
    states[:, coord_index(system, spec.axis_names[0])] = pts[:, 0]
    states[:, coord_index(system, spec.axis_names[1])] = pts[:, 1]
    states[:, coord_index(system, spec.fixed[0])] = spec.fixed[1]
    solved_idx = coord_index(system, spec.solved[0])
    if solved_idx < n:
        raise ValueError("the solved coordinate must be a momentum")

    mass = getattr(system, "m", 1.0)
    # the solved slot must not contribute to the kinetic part of the residual
    # (a section axis may name the same coordinate that is being solved for)
    states[:, solved_idx] = 0.0
    residual = spec.energy - system.potential(states[:, :n]) - system.kinetic(states[:, n:])
    feasible = residual >= -1e-13
    p_solved = spec.solved[1] * np.sqrt(2.0 * mass * np.clip(residual, 0.0, None))
    states[:, solved_idx] = p_solved
    states[~feasible] = np.nan
    return states, feasible


def lift_to_energy_surface(system: System, spec: SectionSpec, point) -> Optional[PhaseState]:
    """Lift one section point; None when the point is infeasible."""
    states, feasible = lift_points(system, spec, np.asarray(point, dtype=float)[None, :])
    if not feasible[0]:
        return None
    s = states[0]
    return PhaseState(q=s[: system.dim], p=s[system.dim:])


@dataclass
class CrossingSet:
    """Section piercings of one trajectory with the required momentum sign."""

    points: np.ndarray   # (k, 2) plotted-axes values
    times: np.ndarray    # (k,)
    states: np.ndarray   # (k, 2n) interpolated full states
    complete: bool       # False when the trajectory escaped early


def _hermite(s0, f0, s1, f1, h, theta):
    t2 = theta * theta
    t3 = t2 * theta
    h00 = 2 * t3 - 3 * t2 + 1
    h10 = t3 - 2 * t2 + theta
    h01 = -2 * t3 + 3 * t2
    h11 = t3 - t2
    return h00 * s0 + (h10 * h) * f0 + h01 * s1 + (h11 * h) * f1


def _refine_crossing(system, s0, s1, h, fixed_idx, fixed_val):
    """Bisection on the cubic Hermite interpolant of the bracketing step."""
    f0 = system.derivative(s0)
    f1 = system.derivative(s1)
    a, b = 0.0, 1.0
    ga = s0[fixed_idx] - fixed_val
    theta = 0.5
    for _ in range(80):
        theta = 0.5 * (a + b)
        g = _hermite(s0[fixed_idx], f0[fixed_idx], s1[fixed_idx], f1[fixed_idx], h, theta) - fixed_val
        if abs(g) < CROSSING_TOL:
            break
        if (g < 0) == (ga < 0):
            a = theta
        else:
            b = theta
    return _hermite(s0, f0, s1, f1, h, theta), theta


def poincare_map_batch(
    system: System,
    states0: np.ndarray,
    spec: SectionSpec,
    t_max: float,
    dt: float,
    max_crossings: int = 10**6,
) -> list[CrossingSet]:
    """Crossings of several trajectories advanced together with RK4."""
    if spec.fixed is None or spec.solved is None:
        raise ValueError("poincare maps need a section with fixed coordinate and momentum sign")
    states0 = np.atleast_2d(np.asarray(states0, dtype=float))
    n_traj = len(states0)
    fixed_idx = coord_index(system, spec.fixed[0])
    fixed_val = float(spec.fixed[1])
    sign = spec.solved[1]
    ax1 = coord_index(system, spec.axis_names[0])
    ax2 = coord_index(system, spec.axis_names[1])

    n_steps = int(math.ceil(t_max / dt - 1e-9))
    s = states0.copy()
    offs = sign * (s[:, fixed_idx] - fixed_val)
    results = [dict(points=[], times=[], states=[], complete=True) for _ in range(n_traj)]
    alive = np.ones(n_traj, dtype=bool)
    done = np.zeros(n_traj, dtype=bool)

    for k in range(n_steps):
        s_new = rk4_step(system, s, dt)
        finite = np.isfinite(s_new).all(axis=-1) & (np.abs(s_new) <= ESCAPE_THRESHOLD).all(axis=-1)
        died = alive & ~finite
        for i in np.nonzero(died)[0]:
            results[i]["complete"] = False
        alive &= finite
        offs_new = sign * (s_new[:, fixed_idx] - fixed_val)
        crossing = alive & ~done & (offs < 0.0) & (offs_new >= 0.0)
        for i in np.nonzero(crossing)[0]:
            sc, theta = _refine_crossing(system, s[i], s_new[i], dt, fixed_idx, fixed_val)
            r = results[i]
            r["points"].append((sc[ax1], sc[ax2]))
            r["times"].append(k * dt + theta * dt)
            r["states"].append(sc)
            if len(r["points"]) >= max_crossings:
                done[i] = True
        s = np.where(alive[:, None], s_new, s)
        offs = sign * (s[:, fixed_idx] - fixed_val)
        if not (alive & ~done).any():
            break

    out = []
    for r in results:
        out.append(
            CrossingSet(
                points=np.array(r["points"]).reshape(-1, 2),
                times=np.array(r["times"]),
                states=np.array(r["states"]).reshape(-1, 2 * system.dim),
                complete=r["complete"],
            )
        )
    return out


def poincare_map(
    system: System,
    x0: PhaseState,
    spec: SectionSpec,
    t_max: float,
    dt: float = 1e-3,
    max_crossings: int = 10**6,
) -> CrossingSet:
    return poincare_map_batch(system, x0.as_array()[None, :], spec, t_max, dt, max_crossings)[0]
