import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import PchipInterpolator

from backend.errors import DegenerateDomainError, PreconditionError, ProfileDomainError, StepFailure
from backend.geometry import radial_derivatives
from backend.monitors import TimeSeriesRecord, record_state
from backend.profile import SupportProfile
from config import flow_defaults as defaults

logger = logging.getLogger(__name__)


@lru_cache(maxsize=32)
def normalized_grid(m: int) -> np.ndarray:
    grid = np.linspace(0.0, 1.0, m + 1)
    grid.setflags(write=False)
    return grid


@dataclass(frozen=True)
class FlowState:
    """Radial graph on the normalized grid s_i = i/M, physical radius y = s·r."""

    n: int
    t: float
    r: float
    u: np.ndarray = field(repr=False)
    profile: SupportProfile = field(repr=False)

    @property
    def M(self) -> int:
        return self.u.size - 1

    @property
    def s(self) -> np.ndarray:
        return normalized_grid(self.M)

    @property
    def y(self) -> np.ndarray:
        return self.s * self.r

    def profile_slope(self) -> float:
        return self.profile.slope(float(self.u[-1]))

    def boundary_slope(self) -> float:
        """ω_y(r) imposed by the free-boundary condition."""
        return -self.profile_slope()


@dataclass(frozen=True)
class StepControl:
    cfl_safety: float = defaults.CFL_SAFETY
    dt_min: float = defaults.DT_MIN
    dt_max: float = defaults.DT_MAX
    max_steps: Optional[int] = defaults.MAX_STEPS

    def __post_init__(self):
        if not 0 < self.cfl_safety < 1:
            raise PreconditionError(f"cfl_safety must lie in (0, 1), got {self.cfl_safety}")
        if not 0 < self.dt_min <= self.dt_max:
            raise PreconditionError(f"Need 0 < dt_min <= dt_max, got {self.dt_min}, {self.dt_max}")
        if self.max_steps is not None and self.max_steps < 1:
            raise PreconditionError(f"max_steps must be positive, got {self.max_steps}")

    def time_step(self, state: FlowState) -> float:
        h = state.r / state.M
        dt = self.cfl_safety * h * h / max(2, state.n)
        return min(max(dt, self.dt_min), self.dt_max)


@dataclass(frozen=True)
class StopThresholds:
    pinch_fraction: float = defaults.PINCH_FRACTION
    eps_h: float = defaults.EPS_H
    eps_r: float = defaults.EPS_R
    trailing_window: int = defaults.TRAILING_WINDOW
    t_max: float = math.inf

    def __post_init__(self):
        if not 0 < self.pinch_fraction < 1:
            raise PreconditionError(f"pinch_fraction must lie in (0, 1), got {self.pinch_fraction}")
        if self.eps_h <= 0 or self.eps_r <= 0:
            raise PreconditionError("Convergence thresholds must be positive")
        if self.trailing_window < 1:
            raise PreconditionError("trailing_window must be at least one record")
        if self.t_max < 0:
            raise PreconditionError(f"t_max must be nonnegative, got {self.t_max}")


class FlowEventKind(str, Enum):
    CONVERGED = "Converged"
    PINCHED = "Pinched"
    MAX_TIME = "MaxTime"
    STEP_FAILURE = "StepFailure"


@dataclass(frozen=True)
class FlowEvent:
    kind: FlowEventKind
    t_event: float
    state: FlowState = field(repr=False)
    message: str = ""


@dataclass(frozen=True)
class Snapshot:
    t: float
    y: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)


class RunResult(NamedTuple):
    records: List[TimeSeriesRecord]
    event: FlowEvent
    snapshots: List[Snapshot]


# --- Initial data ---

def build_initial_cap(profile: SupportProfile, z0: float, M: int, n: int = 2,
                      bump: float = 0.0, side: float = 1.0) -> FlowState:
    """Compatible quadratic cap u = z0 + c(y² − r²) + bump·(1 − (y/r)²)²."""
    if n < 2:
        raise PreconditionError(f"Disk dimension must be at least 2, got {n}")
    if M < 4:
        raise PreconditionError(f"Grid needs at least 4 intervals, got M={M}")
    value, slope, _ = profile.eval(z0, side)
    if value <= defaults.PINCH_TOLERANCE:
        raise DegenerateDomainError(f"z0={z0} is a pinch point of {profile.describe()}")
    r = value
    c = -slope / (2.0 * r)
    s = normalized_grid(M)
    y = s * r
    u = z0 + c * (y * y - r * r) + bump * (1.0 - s * s) ** 2
    u[-1] = z0
    return FlowState(n=n, t=0.0, r=r, u=u, profile=profile)


def compatibility_residuals(state: FlowState) -> Tuple[float, float]:
    """(|r − ω_Σ(u_M)|, one-sided Neumann residual) of a state."""
    u = state.u
    h = state.r / state.M
    one_sided = (3.0 * u[-1] - 4.0 * u[-2] + u[-3]) / (2.0 * h)
    return (abs(state.r - state.profile.value(float(u[-1]))),
            abs(one_sided + state.profile_slope()))


def state_from_samples(profile: SupportProfile, y: Sequence[float], u: Sequence[float],
                       M: int, n: int = 2) -> FlowState:
    """Resample user data (y from 0 to r) onto the normalized grid.

    Compatibility with the free boundary is reported, not enforced.
    """
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    if y.size < 3 or y.shape != u.shape or y[0] != 0 or np.any(np.diff(y) <= 0):
        raise PreconditionError("Initial samples need increasing radii starting at 0")
    r = float(y[-1])
    grid = normalized_grid(M) * r
    state = FlowState(n=n, t=0.0, r=r, u=PchipInterpolator(y, u)(grid), profile=profile)
    constraint, neumann = compatibility_residuals(state)
    if constraint > 1e-6 or neumann > 1e-6:
        logger.warning(f"Initial samples are not compatible: |r - omega(u_M)|={constraint:.3e}, "
                       f"Neumann residual={neumann:.3e}")
    return state


# --- Semi-discrete system ---

def _system(profile: SupportProfile, n: int, u: np.ndarray, r: float) -> Tuple[np.ndarray, float]:
    """Nodal u_t and r' for values u on radius r."""
    slope = profile.slope(float(u[-1]))
    w_y, w_yy = radial_derivatives(u, r, -slope)
    v2 = 1.0 + slope * slope
    v = math.sqrt(v2)
    h_boundary = -w_yy[-1] / (v2 * v) + (n - 1) * slope / (r * v)
    r_dot = -(h_boundary / v) * slope

    s = normalized_grid(u.size - 1)
    rhs = np.empty_like(u)
    rhs[0] = n * w_yy[0]
    inner = w_y[1:]
    rhs[1:] = (w_yy[1:] / (1.0 + inner * inner)
               + (n - 1) * inner / (s[1:] * r)
               + s[1:] * r_dot * inner)
    return rhs, r_dot


def boundary_speed(state: FlowState) -> float:
    """r' = −(H/v)·dω_Σ/dz at the free boundary."""
    return _system(state.profile, state.n, state.u, state.r)[1]


def spatial_rhs(state: FlowState, r_dot: Optional[float] = None) -> np.ndarray:
    """Nodal time derivatives of u, including the moving-mesh advection term."""
    rhs, own_r_dot = _system(state.profile, state.n, state.u, state.r)
    if r_dot is not None and r_dot != own_r_dot:
        s = state.s
        w_y, _ = radial_derivatives(state.u, state.r, state.boundary_slope())
        rhs = rhs + s * (r_dot - own_r_dot) * w_y
    if not np.all(np.isfinite(rhs)):
        raise StepFailure(f"Non-finite right-hand side at t={state.t}", snapshot=state)
    return rhs


def _project(profile: SupportProfile, z: float, r: float) -> Tuple[float, float]:
    """Newton solve of ω_Σ(z) = r in z; near a critical height r follows z instead."""
    for _ in range(defaults.PROJECTION_MAX_ITERATIONS):
        value, slope, _ = profile.eval(z)
        mismatch = value - r
        if abs(mismatch) <= defaults.PROJECTION_TOLERANCE * max(1.0, r):
            return z, r
        if abs(slope) < defaults.PROJECTION_SLOPE_FLOOR:
            return z, value
        z -= mismatch / slope
        if not math.isfinite(z):
            break
    raise StepFailure(f"Boundary projection did not converge (r={r}, z={z})")


def step(state: FlowState, control: Optional[StepControl] = None,
         dt: Optional[float] = None) -> FlowState:
    """Heun step of the moving-mesh system followed by the boundary projection."""
    control = control or StepControl()
    dt = control.time_step(state) if dt is None else dt
    try:
        return _heun(state, dt)
    except ProfileDomainError as e:
        raise StepFailure(f"Boundary left the profile domain at t={state.t}: {e}", snapshot=state)


def _heun(state: FlowState, dt: float) -> FlowState:
    profile, n, u, r = state.profile, state.n, state.u, state.r

    k1, q1 = _system(profile, n, u, r)
    u1 = u + dt * k1
    r1 = r + dt * q1
    if not (r1 > 0 and np.all(np.isfinite(u1))):
        raise StepFailure(f"Predictor left the admissible set at t={state.t}", snapshot=state)
    k2, q2 = _system(profile, n, u1, r1)
    u_next = u + 0.5 * dt * (k1 + k2)
    r_next = r + 0.5 * dt * (q1 + q2)
    if not (r_next > 0 and math.isfinite(r_next) and np.all(np.isfinite(u_next))):
        raise StepFailure(f"Non-finite update at t={state.t}", snapshot=state)

    try:
        z, r_next = _project(profile, float(u_next[-1]), r_next)
    except StepFailure as e:
        raise StepFailure(str(e), snapshot=state)
    u_next[-1] = z
    return FlowState(n=n, t=state.t + dt, r=r_next, u=u_next, profile=profile)


def _converged(records: List[TimeSeriesRecord], thresholds: StopThresholds) -> bool:
    window = records[-thresholds.trailing_window:]
    if len(window) < thresholds.trailing_window:
        return False
    return all(rec.sup_H < thresholds.eps_h and abs(rec.r_dot) < thresholds.eps_r
               for rec in window)


def run(state: FlowState, control: Optional[StepControl] = None,
        thresholds: Optional[StopThresholds] = None,
        stride: int = defaults.RECORD_STRIDE,
        sample_times: Iterable[float] = ()) -> RunResult:
    """Evolve until convergence, pinch, t_max, step budget or failure."""
    control = control or StepControl()
    thresholds = thresholds or StopThresholds()
    if stride < 1:
        raise PreconditionError(f"Record stride must be positive, got {stride}")
    pinch_radius = thresholds.pinch_fraction * state.r
    pending = sorted(t for t in set(sample_times) if state.t <= t <= thresholds.t_max)
    snapshots: List[Snapshot] = []
    records = [record_state(state)]
    steps = 0
    event: Optional[FlowEvent] = None

    logger.info(f"Starting flow on {state.profile.describe()}: n={state.n}, M={state.M}, "
                f"r0={state.r:.6g}, u_M={state.u[-1]:.6g}")

    while event is None:
        while pending and pending[0] <= state.t:
            snapshots.append(Snapshot(state.t, state.y, state.u.copy()))
            pending.pop(0)
        if state.t >= thresholds.t_max:
            event = FlowEvent(FlowEventKind.MAX_TIME, state.t, state)
            break
        if control.max_steps is not None and steps >= control.max_steps:
            logger.warning(f"Step budget of {control.max_steps} exhausted at t={state.t}")
            event = FlowEvent(FlowEventKind.MAX_TIME, state.t, state, "step budget exhausted")
            break

        target = min([thresholds.t_max] + pending[:1])
        dt = min(control.time_step(state), target - state.t)
        try:
            state = step(state, control, dt)
        except StepFailure as e:
            logger.error(f"Step failed at t={state.t}: {e}")
            event = FlowEvent(FlowEventKind.STEP_FAILURE, state.t, e.snapshot or state, str(e))
            break
        if math.isfinite(target) and abs(state.t - target) <= 1e-12 * max(1.0, abs(target)):
            state = replace(state, t=target)
        steps += 1

        if state.r < pinch_radius:
            records.append(record_state(state))
            event = FlowEvent(FlowEventKind.PINCHED, state.t, state)
        elif steps % stride == 0:
            records.append(record_state(state))
            if _converged(records, thresholds):
                event = FlowEvent(FlowEventKind.CONVERGED, state.t, state)

    if records[-1].t != state.t and event.kind != FlowEventKind.STEP_FAILURE:
        records.append(record_state(state))
    logger.info(f"Flow finished with {event.kind.value} at t={event.t_event:.6g} "
                f"after {steps} steps, {len(records)} records")
    return RunResult(records, event, snapshots)
