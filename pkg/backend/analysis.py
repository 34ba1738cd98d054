import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel
from scipy import stats
from scipy.interpolate import PchipInterpolator

from backend.errors import (ComparisonFailure, InsufficientDataError, NotPinchingError,
                            PreconditionError)
from backend.geometry import boundary_gradient_bound, state_curvatures
from backend.monitors import TimeSeriesRecord, series_column
from backend.profile import (CriticalKind, RegionDecomposition, SupportProfile,
                             is_conelike)
from backend.solver import (FlowEvent, FlowEventKind, FlowState, RunResult, Snapshot,
                            StepControl, StopThresholds)
from backend.sweep_engine import FlowJob, SweepEngine
from config import flow_defaults as defaults

logger = logging.getLogger(__name__)

__all__ = [
    "TimeSeriesRecord", "SingularityKind", "SingularityReport", "BlowupTimeFit",
    "ExponentFit", "DissipationCheck", "LimitPrediction", "SweepReport",
    "estimate_blowup_time", "fit_blowup_exponent", "classify_singularity",
    "typeI_sandwich_check", "pinch_rate_constant", "type0_rate_constant",
    "check_gradient_bound", "predict_limit_disk", "verify_dissipation", "foliation_sweep",
]


class SingularityKind(str, Enum):
    TYPE_0 = "Type0"
    TYPE_I = "TypeI"
    TYPE_II = "TypeII"
    NONE = "NoSingularity"


@dataclass(frozen=True)
class BlowupTimeFit:
    t_blowup: float
    exponent: float      # p in r^p = a (T - t)
    rate: float          # a
    residual: float
    window: Tuple[float, float]


@dataclass(frozen=True)
class ExponentFit:
    beta: float
    half_width: float
    count: int
    window: Tuple[float, float]


@dataclass(frozen=True)
class DissipationCheck:
    max_defect: float
    area_nonincreasing: bool
    max_area_increase: float
    pairs: int


class SingularityReport(BaseModel):
    kind: Optional[SingularityKind] = None
    status: str = "ok"
    event: str
    t_event: float
    beta: Optional[float] = None
    beta_half_width: Optional[float] = None
    t_blowup: Optional[float] = None
    fit_exponent: Optional[float] = None
    fit_residual: Optional[float] = None
    fit_window: Optional[Tuple[float, float]] = None
    sup_A2_growth: Optional[float] = None
    sandwich: Optional[Tuple[float, float]] = None
    pinch_rate_constant: Optional[float] = None
    message: str = ""


class LimitPrediction(BaseModel):
    outcome: str                # "disk", "pinch" or "unavailable"
    z: Optional[float] = None
    basis: str = ""


class SweepReport(BaseModel):
    profile: str
    lower_event: str
    upper_event: str
    ordered: bool
    compared_times: int
    min_gap: Optional[float] = None
    lower_band: Tuple[float, float]
    upper_band: Tuple[float, float]
    residual_band: Optional[Tuple[float, float]] = None


# --- Blow-up fits ---

def _tail(series: Sequence[TimeSeriesRecord], window: int) -> List[TimeSeriesRecord]:
    tail = list(series[-window:])
    if len(tail) < defaults.MIN_FIT_RECORDS:
        raise InsufficientDataError(
            f"Need at least {defaults.MIN_FIT_RECORDS} records, got {len(tail)}"
        )
    return tail


def estimate_blowup_time(series: Sequence[TimeSeriesRecord], sigma: Optional[float] = None,
                         window: int = defaults.FIT_WINDOW) -> BlowupTimeFit:
    """Fit r^p = a(T − t) over the trailing window, p from {2, 2 − 2σ} by residual."""
    tail = _tail(series, window)
    t = series_column(tail, "t")
    r = series_column(tail, "r")
    if np.any(np.diff(r) >= 0):
        raise NotPinchingError("Boundary radius is not strictly decreasing over the fit window")

    exponents = [2.0]
    if sigma is not None and 0 < 2.0 - 2.0 * sigma != 2.0:
        exponents.append(2.0 - 2.0 * sigma)

    tau = t - t[-1]
    best: Optional[BlowupTimeFit] = None
    for p in exponents:
        target = r ** p
        slope, intercept = np.polyfit(tau, target, 1)
        if slope >= 0:
            continue
        spread = float(np.ptp(target)) or 1.0
        residual = float(np.sqrt(np.mean((target - (intercept + slope * tau)) ** 2))) / spread
        candidate = BlowupTimeFit(t_blowup=float(t[-1] + intercept / -slope), exponent=p,
                                  rate=float(-slope), residual=residual,
                                  window=(float(t[0]), float(t[-1])))
        if best is None or candidate.residual < best.residual:
            best = candidate
    if best is None:
        raise NotPinchingError("No decreasing fit of the boundary radius")
    return best


def fit_blowup_exponent(series: Sequence[TimeSeriesRecord], t_blowup: float,
                        window: int = defaults.FIT_WINDOW) -> ExponentFit:
    """Slope β of log sup|A|² against log(T − t), with a 95% half-width."""
    tail = list(series[-window:])
    if tail and t_blowup <= tail[-1].t:
        raise PreconditionError(f"Blow-up time {t_blowup} does not exceed the last record {tail[-1].t}")
    usable = [rec for rec in tail if rec.sup_A2 > 0]
    if len(usable) < defaults.MIN_FIT_RECORDS:
        raise InsufficientDataError(f"Only {len(usable)} usable records for the exponent fit")

    x = np.log(t_blowup - series_column(usable, "t"))
    y = np.log(series_column(usable, "sup_A2"))
    beta, intercept = np.polyfit(x, y, 1)
    dof = len(usable) - 2
    resid = y - (intercept + beta * x)
    spread = float(np.sum((x - x.mean()) ** 2))
    stderr = math.sqrt(float(np.sum(resid ** 2)) / dof / spread) if spread > 0 else math.inf
    return ExponentFit(beta=float(beta), half_width=float(stats.t.ppf(0.975, dof) * stderr),
                       count=len(usable), window=(usable[0].t, usable[-1].t))


def typeI_sandwich_check(series: Sequence[TimeSeriesRecord], t_blowup: float,
                         window: int = defaults.FIT_WINDOW) -> Tuple[float, float]:
    """Min and max of sup|A|²·(T − t) over the trailing window."""
    tail = list(series[-window:])
    ratios = [rec.sup_A2 * (t_blowup - rec.t) for rec in tail]
    return float(min(ratios)), float(max(ratios))


def pinch_rate_constant(series: Sequence[TimeSeriesRecord], t_blowup: float,
                        window: int = defaults.FIT_WINDOW) -> float:
    """Largest C₅ with r² ≥ 2C₅(T − t) on the trailing window."""
    tail = [rec for rec in series[-window:] if rec.t < t_blowup]
    if not tail:
        raise InsufficientDataError("No records before the blow-up time")
    return float(min(rec.r ** 2 / (2.0 * (t_blowup - rec.t)) for rec in tail))


def type0_rate_constant(series: Sequence[TimeSeriesRecord], sigma: float) -> float:
    """Smallest C with sup|A|² ≤ C·r^{2σ} along the trajectory."""
    return float(max(rec.sup_A2 / rec.r ** (2.0 * sigma) for rec in series))


def check_gradient_bound(series: Sequence[TimeSeriesRecord], graph_constant: float,
                         tolerance: float = defaults.GRADIENT_BOUND_TOLERANCE) -> List[Tuple[float, float]]:
    """Records whose boundary slope exceeds the graph-constant bound, as (t, slope)."""
    bound = boundary_gradient_bound(graph_constant)
    return [(rec.t, rec.boundary_grad) for rec in series if rec.boundary_grad > bound + tolerance]


def classify_singularity(event: FlowEvent, series: Sequence[TimeSeriesRecord],
                         sigma: Optional[float] = None,
                         window: int = defaults.FIT_WINDOW) -> SingularityReport:
    base = {"event": event.kind.value, "t_event": event.t_event}
    if event.kind == FlowEventKind.CONVERGED:
        return SingularityReport(kind=SingularityKind.NONE, **base)
    if event.kind == FlowEventKind.STEP_FAILURE:
        return SingularityReport(status="insufficient data", message=event.message, **base)

    try:
        time_fit = estimate_blowup_time(series, sigma, window)
        exponent = fit_blowup_exponent(series, time_fit.t_blowup, window)
    except (NotPinchingError, InsufficientDataError, PreconditionError) as e:
        logger.warning(f"Singularity classification skipped: {e}")
        return SingularityReport(status="insufficient data", message=str(e), **base)

    tail = series_column(list(series[-window:]), "sup_A2")
    growth = float(np.max(tail) / tail[0] - 1.0) if tail[0] > 0 else math.inf
    beta = exponent.beta
    status = "ok"
    if beta > defaults.TYPE0_BETA_FLOOR:
        kind = SingularityKind.TYPE_0
        if growth >= defaults.TYPE0_GROWTH_LIMIT:
            status = "ambiguous"
    elif beta >= defaults.TYPEI_BETA_FLOOR:
        kind = SingularityKind.TYPE_I
    else:
        kind = SingularityKind.TYPE_II

    report = SingularityReport(
        kind=kind, status=status, beta=beta, beta_half_width=exponent.half_width,
        t_blowup=time_fit.t_blowup, fit_exponent=time_fit.exponent,
        fit_residual=time_fit.residual, fit_window=time_fit.window, sup_A2_growth=growth,
        **base,
    )
    if kind == SingularityKind.TYPE_I:
        report.sandwich = typeI_sandwich_check(series, time_fit.t_blowup, window)
        if time_fit.exponent == 2.0:
            report.pinch_rate_constant = pinch_rate_constant(series, time_fit.t_blowup, window)
    logger.info(f"Classified {event.kind.value} run as {kind.value} (beta={beta:.4f}, "
                f"T_est={time_fit.t_blowup:.8g})")
    return report


# --- Limit prediction ---

def predict_limit_disk(profile: SupportProfile, decomposition: RegionDecomposition,
                       state: FlowState) -> LimitPrediction:
    """Predict the flat-disk limit of a flow from its initial state, when a limit criterion applies."""
    if is_conelike(profile):
        return LimitPrediction(outcome="pinch", basis="conical pinching cylinder")

    pinches = decomposition.pinch_points
    strict = [c for c in decomposition.critical_points
              if all(abs(c.z - p) > 1e-6 for p in pinches)]
    maxima = sorted(c.z for c in strict if c.kind == CriticalKind.STRICT_MAX)
    minima = sorted(c.z for c in strict if c.kind == CriticalKind.STRICT_MIN)
    u_lo, u_hi = float(np.min(state.u)), float(np.max(state.u))
    z_boundary = float(state.u[-1])

    crossed = [z for z in maxima if u_lo <= z <= u_hi]
    if not crossed:
        walls = maxima + list(pinches)
        below = max((z for z in walls if z < u_lo), default=-math.inf)
        above = min((z for z in walls if z > u_hi), default=math.inf)
        candidates = [z for z in minima if below < z < above]
        if len(candidates) == 1:
            return LimitPrediction(outcome="disk", z=candidates[0], basis="shrinking neck")
        return LimitPrediction(outcome="unavailable",
                               basis=f"{len(candidates)} minimal disks in the enclosing neck")

    if any(u_lo <= z <= u_hi for z in minima):
        return LimitPrediction(outcome="unavailable", basis="data spans a neck and a belly")
    z_min = max((z for z in minima if z < u_lo), default=None)
    z_max = min((z for z in minima if z > u_hi), default=None)
    belly = [z for z in maxima
             if (z_min is None or z > z_min) and (z_max is None or z < z_max)]
    _, _, H, _ = state_curvatures(state)
    if np.all(H < 0) and z_boundary > max(belly) and z_max is not None:
        return LimitPrediction(outcome="disk", z=z_max, basis="belly, H < 0 above the highest disk")
    if np.all(H > 0) and z_boundary < min(belly) and z_min is not None:
        return LimitPrediction(outcome="disk", z=z_min, basis="belly, H > 0 below the lowest disk")
    return LimitPrediction(outcome="unavailable", basis="belly data without sign-definite curvature")


# --- Area dissipation ---

def verify_dissipation(series: Sequence[TimeSeriesRecord],
                       t_range: Optional[Tuple[float, float]] = None,
                       floor: float = defaults.DISSIPATION_FLOOR) -> DissipationCheck:
    """Compare ΔArea/Δt with −∫H² between consecutive records."""
    if len(series) < 2:
        raise PreconditionError("Dissipation check needs at least two records")
    t = series_column(series, "t")
    area = series_column(series, "area")
    rate = series_column(series, "dissipation")

    worst, pairs = 0.0, 0
    for k in range(len(series) - 1):
        dt = t[k + 1] - t[k]
        if dt <= 0:
            continue
        if t_range and not (t_range[0] <= t[k] and t[k + 1] <= t_range[1]):
            continue
        mean_rate = 0.5 * (rate[k] + rate[k + 1])
        defect = abs((area[k + 1] - area[k]) / dt + mean_rate) / max(mean_rate, floor)
        worst = max(worst, float(defect))
        pairs += 1
    increase = float(np.max(np.diff(area)))
    return DissipationCheck(max_defect=worst,
                            area_nonincreasing=increase <= defaults.AREA_MONOTONE_TOLERANCE,
                            max_area_increase=max(increase, 0.0), pairs=pairs)


# --- Foliation sweep ---

def _ordering_gap(lower: Snapshot, upper: Snapshot, points: int = 64) -> float:
    """Minimum of upper − lower over the common physical radii."""
    radius = min(lower.y[-1], upper.y[-1])
    y = np.linspace(0.0, radius, points)
    return float(np.min(PchipInterpolator(upper.y, upper.u)(y)
                        - PchipInterpolator(lower.y, lower.u)(y)))


def _state_snapshot(state: FlowState) -> Snapshot:
    return Snapshot(state.t, state.y, state.u.copy())


def foliation_sweep(profile: SupportProfile, lower: FlowState, upper: FlowState,
                    control: Optional[StepControl] = None,
                    thresholds: Optional[StopThresholds] = None,
                    stride: int = defaults.RECORD_STRIDE,
                    samples: int = defaults.SWEEP_SAMPLE_COUNT,
                    engine: Optional[SweepEngine] = None) -> SweepReport:
    """Run two ordered caps and report where their time slices sweep."""
    control = control or StepControl()
    thresholds = thresholds or StopThresholds()
    if not math.isfinite(thresholds.t_max):
        raise PreconditionError("Foliation sweep needs a finite t_max")
    start_gap = _ordering_gap(_state_snapshot(lower), _state_snapshot(upper))
    if start_gap <= defaults.ORDERING_TOLERANCE:
        raise PreconditionError(f"Caps are not strictly ordered (gap {start_gap:.3e})")

    times = list(np.linspace(0.0, thresholds.t_max, samples))
    jobs = {
        "lower": FlowJob(lower, control, thresholds, stride, times),
        "upper": FlowJob(upper, control, thresholds, stride, times),
    }
    results = (engine or SweepEngine()).run_all(jobs)
    low, up = results["lower"], results["upper"]

    upper_by_time = {snap.t: snap for snap in up.snapshots}
    gaps = [(snap.t, _ordering_gap(snap, upper_by_time[snap.t]))
            for snap in low.snapshots if snap.t in upper_by_time]
    for t, gap in gaps:
        if gap < -defaults.ORDERING_TOLERANCE:
            logger.error(f"Flows crossed at t={t} (gap {gap:.3e})")
            raise ComparisonFailure(f"Ordering violated at t={t}: gap {gap:.3e}", t=t)

    lower_final, upper_final = low.event.state, up.event.state
    lower_band = (min(rec.u_min for rec in low.records), float(np.max(lower_final.u)))
    upper_band = (float(np.min(upper_final.u)), max(rec.u_max for rec in up.records))
    pinched = FlowEventKind.PINCHED in (low.event.kind, up.event.kind)
    residual = None if pinched else (lower_band[1], upper_band[0])
    report = SweepReport(
        profile=profile.describe(),
        lower_event=low.event.kind.value,
        upper_event=up.event.kind.value,
        ordered=True,
        compared_times=len(gaps),
        min_gap=min((gap for _, gap in gaps), default=None),
        lower_band=lower_band,
        upper_band=upper_band,
        residual_band=residual,
    )
    logger.info(f"Sweep on {report.profile}: {report.lower_event}/{report.upper_event}, "
                f"residual band {report.residual_band}")
    return report
