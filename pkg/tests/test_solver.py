import math

import numpy as np
import pytest
from scipy.interpolate import PchipInterpolator

from backend.errors import DegenerateDomainError, PreconditionError
from backend.geometry import area, boundary_gradient_bound
from backend.monitors import CSV_COLUMNS, record_state, series_column
from backend.profile import catenoid, cone, cylinder, graph_constant, tabulated
from backend.solver import (FlowEventKind, FlowState, StepControl, StopThresholds,
                            boundary_speed, build_initial_cap, compatibility_residuals, run,
                            spatial_rhs, state_from_samples, step)


def test_initial_cap_is_compatible(catenoid_profile):
    state = build_initial_cap(catenoid_profile, 1.0, 40)
    assert state.r == pytest.approx(math.cosh(1.0))
    assert state.u[-1] == 1.0
    constraint, neumann = compatibility_residuals(state)
    assert constraint <= 1e-12
    assert neumann <= 1e-12
    # c = -sinh(1) / (2 cosh(1)), axis value z0 - c r^2
    c = -math.sinh(1.0) / (2 * math.cosh(1.0))
    assert state.u[0] == pytest.approx(1.0 - c * math.cosh(1.0) ** 2)


def test_initial_cap_with_bump_keeps_boundary():
    state = build_initial_cap(catenoid(1.0), 0.5, 64, bump=0.1)
    constraint, neumann = compatibility_residuals(state)
    assert state.u[-1] == 0.5
    assert constraint <= 1e-12
    assert neumann <= 1e-3


def test_initial_cap_rejects_pinch_point(cone_profile):
    with pytest.raises(DegenerateDomainError):
        build_initial_cap(cone_profile, 0.0, 16)
    with pytest.raises(PreconditionError):
        build_initial_cap(cone_profile, 1.0, 2)
    with pytest.raises(PreconditionError):
        build_initial_cap(cone_profile, 1.0, 16, n=1)


def test_flat_disk_is_stationary():
    disk = build_initial_cap(cylinder(1.0), 0.3, 20)
    assert np.all(spatial_rhs(disk) == 0.0)
    assert boundary_speed(disk) == 0.0
    moved = step(disk, StepControl())
    assert np.allclose(moved.u, 0.3)
    assert moved.r == 1.0


def test_rhs_sign_follows_mean_curvature(catenoid_profile):
    # above the neck the cap bulges up (H > 0) and moves down
    upper = build_initial_cap(catenoid_profile, 1.0, 24)
    assert spatial_rhs(upper)[0] < 0
    assert boundary_speed(upper) < 0
    lower = build_initial_cap(catenoid_profile, -1.0, 24)
    assert spatial_rhs(lower)[0] > 0
    assert boundary_speed(lower) < 0


def test_axis_rhs_uses_smooth_limit():
    state = build_initial_cap(cone(1.0), 1.0, 16)
    # u = z0 + c (y^2 - r^2), c = -1/2: u_t at the axis is n * u_yy = 2 * 2c
    assert spatial_rhs(state)[0] == pytest.approx(-2.0)


def test_step_preserves_boundary_constraint(catenoid_profile):
    state = build_initial_cap(catenoid_profile, 1.0, 24)
    control = StepControl()
    for _ in range(20):
        state = step(state, control)
    assert abs(state.r - catenoid_profile.value(state.u[-1])) <= 1e-12 * max(1.0, state.r)
    assert state.t > 0


def test_time_step_scales_with_grid():
    control = StepControl(cfl_safety=0.4)
    state = build_initial_cap(cone(1.0), 1.0, 10)
    assert control.time_step(state) == pytest.approx(0.4 * 0.1 ** 2 / 2)
    wide = FlowState(n=4, t=0.0, r=1.0, u=state.u, profile=state.profile)
    assert control.time_step(wide) == pytest.approx(0.4 * 0.1 ** 2 / 4)


def test_step_control_validation():
    with pytest.raises(PreconditionError):
        StepControl(cfl_safety=1.5)
    with pytest.raises(PreconditionError):
        StepControl(dt_min=1e-2, dt_max=1e-3)
    with pytest.raises(PreconditionError):
        StopThresholds(pinch_fraction=0.0)


def test_zero_time_budget_returns_initial_record(catenoid_profile):
    state = build_initial_cap(catenoid_profile, 1.0, 16)
    result = run(state, thresholds=StopThresholds(t_max=0.0), sample_times=[0.0])
    assert result.event.kind == FlowEventKind.MAX_TIME
    assert [rec.t for rec in result.records] == [0.0]
    assert len(result.snapshots) == 1
    assert np.array_equal(result.snapshots[0].u, state.u)


def test_run_lands_on_sample_times(catenoid_profile):
    state = build_initial_cap(catenoid_profile, 1.0, 16)
    times = [0.0, 0.01, 0.025, 0.05]
    result = run(state, thresholds=StopThresholds(t_max=0.05), stride=10, sample_times=times)
    assert [snap.t for snap in result.snapshots] == times
    assert result.event.kind == FlowEventKind.MAX_TIME
    assert result.event.t_event == 0.05
    assert result.records[-1].t == 0.05


def test_step_budget_ends_run(catenoid_profile):
    state = build_initial_cap(catenoid_profile, 1.0, 16)
    result = run(state, StepControl(max_steps=25), stride=10)
    assert result.event.kind == FlowEventKind.MAX_TIME
    assert "budget" in result.event.message


def test_catenoid_converges_to_neck_disk(catenoid_profile, quick_thresholds):
    state = build_initial_cap(catenoid_profile, 1.0, 24)
    result = run(state, thresholds=quick_thresholds, stride=50)
    assert result.event.kind == FlowEventKind.CONVERGED
    final = result.event.state
    assert abs(final.u[-1]) <= 1e-2
    assert final.r == pytest.approx(1.0, abs=1e-2)
    assert result.records[-1].sup_grad <= 1e-3
    areas = series_column(result.records, "area")
    assert np.all(np.diff(areas) <= 1e-10)


def test_mean_curvature_sign_is_preserved(catenoid_profile, quick_thresholds):
    state = build_initial_cap(catenoid_profile, -1.0, 24)
    result = run(state, thresholds=quick_thresholds, stride=50)
    assert result.event.kind == FlowEventKind.CONVERGED
    active = [rec for rec in result.records if rec.sup_H > 1e-6]
    assert active
    assert all(rec.h_max < 0 for rec in active)


def test_cone_cap_pinches_like_a_shrinking_sphere(cone_profile):
    state = build_initial_cap(cone_profile, 1.0, 24)
    result = run(state, thresholds=StopThresholds(t_max=2.0))
    assert result.event.kind == FlowEventKind.PINCHED
    # a sphere centred at the apex meets the cone perpendicularly and dies at t = 1/2
    assert result.event.t_event == pytest.approx(0.5, abs=0.1)
    assert result.records[-1].r < 1e-3
    assert np.all(np.diff(series_column(result.records, "r")) < 0)


def test_state_from_samples_resamples_user_data(cone_profile):
    y = np.linspace(0.0, 1.0, 11)
    u = 1.0 - 0.5 * (y * y - 1.0)
    state = state_from_samples(cone_profile, y, u, M=20)
    assert state.M == 20
    assert state.r == 1.0
    assert state.u[-1] == pytest.approx(1.0)
    cap = build_initial_cap(cone_profile, 1.0, 20)
    assert np.allclose(state.u, cap.u, atol=1e-2)


def test_state_from_samples_rejects_bad_radii(cone_profile):
    with pytest.raises(PreconditionError):
        state_from_samples(cone_profile, [0.1, 0.5, 1.0], [1.0, 1.0, 1.0], M=8)


def test_record_fields(catenoid_profile):
    state = build_initial_cap(catenoid_profile, 1.0, 32)
    rec = record_state(state)
    assert list(rec.csv_row()) == CSV_COLUMNS
    assert rec.area == pytest.approx(area(state))
    assert rec.boundary_grad == pytest.approx(math.sinh(1.0))
    assert rec.u_boundary == 1.0
    assert rec.sup_A2 >= rec.sup_H ** 2 / state.n - 1e-12
    assert rec.dissipation > 0


def test_default_step_control_has_no_step_budget():
    assert StepControl().max_steps is None


def test_default_thresholds_run_to_convergence(catenoid_profile):
    state = build_initial_cap(catenoid_profile, 1.0, 16)
    result = run(state)
    assert result.event.kind == FlowEventKind.CONVERGED
    assert math.isfinite(result.event.t_event)
    assert result.event.t_event > 1.0
    assert abs(result.event.state.u[-1]) <= 1e-2


def test_leaving_a_tabulated_window_is_a_step_failure():
    z = np.linspace(0.5, 2.0, 40)
    profile = tabulated(z, np.cosh(z))
    state = build_initial_cap(profile, 1.0, 12)
    result = run(state, thresholds=StopThresholds(t_max=20.0), stride=50)
    assert result.event.kind == FlowEventKind.STEP_FAILURE
    assert "profile domain" in result.event.message
    assert result.event.state.u[-1] >= 0.5 - 1e-9


@pytest.mark.parametrize("z0", [1.0, -1.0])
def test_height_obeys_maximum_principle(catenoid_profile, z0):
    state = build_initial_cap(catenoid_profile, z0, 24)
    initial = float(np.max(np.abs(state.u)))
    result = run(state, thresholds=StopThresholds(t_max=2.0), stride=20)
    bound = max(initial, max(abs(rec.u_boundary) for rec in result.records))
    for rec in result.records:
        assert max(abs(rec.u_min), abs(rec.u_max)) <= bound + 1e-6


@pytest.mark.parametrize("z0", [1.0, -1.0, 0.5])
def test_gradient_obeys_maximum_principle(catenoid_profile, z0):
    state = build_initial_cap(catenoid_profile, z0, 24)
    result = run(state, thresholds=StopThresholds(t_max=2.0), stride=20)
    bound = max(result.records[0].sup_grad, boundary_gradient_bound(graph_constant(catenoid_profile)))
    assert all(rec.sup_grad <= bound + 1e-6 for rec in result.records)


def test_boundary_height_converges_at_second_order(catenoid_profile):
    heights = []
    for M in (32, 64, 128):
        state = build_initial_cap(catenoid_profile, 1.0, M)
        result = run(state, thresholds=StopThresholds(t_max=0.5), stride=1000)
        assert result.event.t_event == 0.5
        heights.append(float(result.event.state.u[-1]))
    coarse, fine = abs(heights[1] - heights[0]), abs(heights[2] - heights[1])
    assert fine > 0
    assert math.log2(coarse / fine) >= 1.8


def test_ordered_caps_stay_ordered(catenoid_profile):
    times = list(np.linspace(0.0, 2.0, 9))
    lower = run(build_initial_cap(catenoid_profile, 0.5, 20),
                thresholds=StopThresholds(t_max=2.0), sample_times=times)
    upper = run(build_initial_cap(catenoid_profile, 1.0, 20),
                thresholds=StopThresholds(t_max=2.0), sample_times=times)
    assert len(lower.snapshots) == len(upper.snapshots) == len(times)
    for below, above in zip(lower.snapshots, upper.snapshots):
        assert below.t == above.t
        radius = min(below.y[-1], above.y[-1])
        y = np.linspace(0.0, radius, 64)
        gap = PchipInterpolator(above.y, above.u)(y) - PchipInterpolator(below.y, below.u)(y)
        assert np.min(gap) > 0


def test_positive_mean_curvature_is_preserved(catenoid_profile, quick_thresholds):
    # c < 0 dome above the neck
    state = build_initial_cap(catenoid_profile, 1.0, 24)
    result = run(state, thresholds=quick_thresholds, stride=50)
    assert result.event.kind == FlowEventKind.CONVERGED
    active = [rec for rec in result.records if rec.sup_H > 1e-6]
    assert active
    assert all(rec.h_min > 0 for rec in active)


@pytest.mark.slow
def test_catenoid_converges_at_full_resolution(catenoid_profile):
    state = build_initial_cap(catenoid_profile, 1.0, 400)
    result = run(state)
    assert result.event.kind == FlowEventKind.CONVERGED
    final = result.event.state
    assert abs(final.u[-1]) <= 1e-2
    assert final.r == pytest.approx(1.0, abs=1e-2)
    assert result.records[-1].sup_grad <= 1e-3
