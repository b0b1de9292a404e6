"""Unit tests for section grids, energy-surface lifts and Poincare maps."""

import math

import numpy as np
import pytest

from ldaction import (
    Axis,
    Harmonic,
    PhaseState,
    ProtonTransfer,
    Saddle,
    SectionSpec,
    build_grid,
    lift_to_energy_surface,
    poincare_map,
    poincare_map_batch,
)
from ldaction.sections import CROSSING_TOL, coord_index, lift_points


def sigma1(energy, x_range=(-1.05, 1.05), y_range=(-0.85, 0.85), count=31):
    return SectionSpec(
        kind="energy_section",
        x_axis=Axis(x_range[0], x_range[1], count),
        y_axis=Axis(y_range[0], y_range[1], count),
        axis_names=("y", "py"),
        fixed=("x", 0.0),
        solved=("px", 1),
        energy=energy,
    )


class TestAxis:
    def test_values_and_step(self):
        ax = Axis(-1.0, 1.0, 5)
        np.testing.assert_allclose(ax.values(), [-1.0, -0.5, 0.0, 0.5, 1.0])
        assert ax.step == pytest.approx(0.5)

    def test_validation(self):
        with pytest.raises(ValueError):
            Axis(0.0, 1.0, 1)
        with pytest.raises(ValueError):
            Axis(1.0, 0.0, 5)


class TestSpecValidation:
    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            SectionSpec(kind="diagonal", x_axis=Axis(0, 1, 2), y_axis=Axis(0, 1, 2))

    def test_energy_section_needs_all_parts(self):
        with pytest.raises(ValueError):
            SectionSpec(kind="energy_section", x_axis=Axis(0, 1, 2), y_axis=Axis(0, 1, 2))

    def test_coord_names(self):
        assert coord_index(Saddle(), "p") == 1
        assert coord_index(ProtonTransfer(), "py") == 3
        with pytest.raises(ValueError):
            coord_index(Saddle(), "px")


class TestFullPlaneGrid:
    def test_x_major_layout(self):
        spec = SectionSpec(kind="full_plane", x_axis=Axis(0.0, 1.0, 3), y_axis=Axis(0.0, 1.0, 2))
        grid = build_grid(spec, Saddle())
        assert grid.nx == 3 and grid.ny == 2
        np.testing.assert_allclose(grid.point(0, 0), [0.0, 0.0])
        np.testing.assert_allclose(grid.point(0, 1), [0.0, 1.0])
        np.testing.assert_allclose(grid.point(1, 0), [0.5, 0.0])
        assert grid.flat_index(2, 1) == 5

    def test_lift_is_identity_and_all_feasible(self):
        spec = SectionSpec(kind="full_plane", x_axis=Axis(-1, 1, 4), y_axis=Axis(-1, 1, 4))
        grid = build_grid(spec, Saddle())
        np.testing.assert_array_equal(grid.states, grid.points)
        assert grid.feasible.all()

    def test_full_plane_rejects_2dof(self):
        spec = SectionSpec(kind="full_plane", x_axis=Axis(-1, 1, 4), y_axis=Axis(-1, 1, 4))
        with pytest.raises(ValueError):
            build_grid(spec, ProtonTransfer())


class TestEnergyLift:
    def test_momentum_from_energy_at_origin(self):
        ps = lift_to_energy_surface(ProtonTransfer(), sigma1(0.1), np.array([0.0, 0.0]))
        # V(0, 0) = 0, so px = sqrt(2 H)
        assert float(ps.p[0]) == pytest.approx(math.sqrt(0.2), rel=1e-12)
        assert float(ps.q[0]) == 0.0 and float(ps.q[1]) == 0.0 and float(ps.p[1]) == 0.0

    def test_lifted_energy_is_exact(self):
        sys = ProtonTransfer()
        spec = sigma1(0.1)
        grid = build_grid(spec, sys)
        feas = grid.states[grid.feasible]
        np.testing.assert_allclose(sys.energy(feas), 0.1, atol=1e-12)

    def test_infeasible_point_is_none_and_nan(self):
        sys = ProtonTransfer()
        spec = sigma1(0.1)
        assert lift_to_energy_surface(sys, spec, np.array([0.0, 0.85])) is None
        states, feasible = lift_points(sys, spec, np.array([[0.0, 0.85]]))
        assert not feasible[0]
        assert np.isnan(states[0]).all()

    def test_negative_sign_convention(self):
        spec = SectionSpec(
            kind="energy_section",
            x_axis=Axis(-1, 1, 3), y_axis=Axis(-1, 1, 3),
            axis_names=("y", "py"), fixed=("x", 0.0), solved=("px", -1), energy=0.1,
        )
        ps = lift_to_energy_surface(ProtonTransfer(), spec, np.array([0.0, 0.0]))
        assert float(ps.p[0]) == pytest.approx(-math.sqrt(0.2))

    def test_solved_coordinate_must_be_momentum(self):
        spec = SectionSpec(
            kind="energy_section",
            x_axis=Axis(-1, 1, 3), y_axis=Axis(-1, 1, 3),
            axis_names=("y", "py"), fixed=("px", 0.0), solved=("x", 1), energy=0.1,
        )
        with pytest.raises(ValueError):
            build_grid(spec, ProtonTransfer())

    def test_feasibility_symmetric_without_coupling(self):
        sys = ProtonTransfer(coupling=0.0)
        grid = build_grid(sigma1(0.05, count=41), sys)
        mask = grid.feasible.reshape(41, 41)
        np.testing.assert_array_equal(mask, mask[::-1, ::-1])


def harmonic_section(sign=1):
    return SectionSpec(
        kind="energy_section",
        x_axis=Axis(-2, 2, 2), y_axis=Axis(-2, 2, 2),
        axis_names=("q", "p"), fixed=("q", 0.0), solved=("p", sign), energy=0.5,
    )


class TestPoincareMap:
    def test_harmonic_crossings_once_per_period(self):
        omega = 1.0
        cs = poincare_map(Harmonic(), PhaseState(q=1.0, p=0.0), harmonic_section(),
                          t_max=50.0, dt=1e-3)
        assert cs.complete and len(cs.times) >= 7
        gaps = np.diff(cs.times)
        np.testing.assert_allclose(gaps, 2.0 * math.pi / omega, atol=1e-9)
        # crossings carry positive momentum and sit on the section
        assert np.all(cs.states[:, 1] > 0)
        assert np.max(np.abs(cs.states[:, 0])) < CROSSING_TOL

    def test_both_sign_conventions_interleave(self):
        up = poincare_map(Harmonic(), PhaseState(q=1.0, p=0.0), harmonic_section(1),
                          t_max=30.0, dt=1e-3)
        down = poincare_map(Harmonic(), PhaseState(q=1.0, p=0.0), harmonic_section(-1),
                            t_max=30.0, dt=1e-3)
        merged = np.sort(np.concatenate([up.times, down.times]))
        np.testing.assert_allclose(np.diff(merged), math.pi, atol=1e-9)

    def test_crossing_energy_conservation(self):
        sys = ProtonTransfer()
        spec = sigma1(0.025, count=3)
        ps = lift_to_energy_surface(sys, spec, np.array([0.55, 0.0]))
        cs = poincare_map(sys, ps, spec, t_max=200.0, dt=5e-3)
        assert len(cs.times) > 10
        np.testing.assert_allclose(sys.energy(cs.states), 0.025, atol=1e-8)

    def test_fixed_point_returns_to_itself(self):
        # the barrier periodic orbit lives in the invariant plane y = py = 0
        sys = ProtonTransfer()
        spec = sigma1(0.1, count=3)
        ps = lift_to_energy_surface(sys, spec, np.array([0.0, 0.0]))
        cs = poincare_map(sys, ps, spec, t_max=40.0, dt=1e-3)
        assert len(cs.points) >= 2
        np.testing.assert_allclose(cs.points, 0.0, atol=1e-8)

    def test_batch_matches_single(self):
        sys = ProtonTransfer()
        spec = sigma1(0.025, count=3)
        pts = np.array([[0.55, 0.0], [0.65, 0.0]])
        states = np.array([
            lift_to_energy_surface(sys, spec, p).as_array() for p in pts
        ])
        batch = poincare_map_batch(sys, states, spec, 60.0, 5e-3)
        for k in range(2):
            single = poincare_map(
                sys, PhaseState(q=states[k, :2], p=states[k, 2:]), spec, 60.0, 5e-3)
            np.testing.assert_array_equal(batch[k].points, single.points)
            np.testing.assert_array_equal(batch[k].times, single.times)

    def test_max_crossings_truncates(self):
        cs = poincare_map(Harmonic(), PhaseState(q=1.0, p=0.0), harmonic_section(),
                          t_max=100.0, dt=1e-3, max_crossings=3)
        assert len(cs.times) == 3

    def test_requires_full_section_definition(self):
        spec = SectionSpec(kind="full_plane", x_axis=Axis(-1, 1, 3), y_axis=Axis(-1, 1, 3))
        with pytest.raises(ValueError):
            poincare_map(Harmonic(), PhaseState(q=1.0, p=0.0), spec, t_max=10.0)
