from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING, Dict, List

import numpy as np
from scipy.integrate import simpson

from backend.geometry import curvature_profile, radial_derivatives, sphere_measure

if TYPE_CHECKING:
    from backend.solver import FlowState

# Column order of the trajectory CSV
CSV_COLUMNS = ["t", "r", "sup_A2", "sup_H", "area", "boundary_grad", "u_min", "u_max"]


@dataclass(frozen=True)
class TimeSeriesRecord:
    """Monitors of one recorded flow state."""

    t: float
    r: float
    sup_A2: float
    sup_H: float
    area: float
    boundary_grad: float
    u_min: float
    u_max: float
    u_boundary: float
    r_dot: float
    h_min: float
    h_max: float
    sup_grad: float
    dissipation: float

    def csv_row(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in CSV_COLUMNS}

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def record_state(state: "FlowState") -> TimeSeriesRecord:
    slope = state.profile_slope()
    y = state.y
    w_y, w_yy = radial_derivatives(state.u, state.r, -slope)
    H, A2 = curvature_profile(y, w_y, w_yy, state.n)
    v = np.sqrt(1.0 + w_y * w_y)
    weight = y ** (state.n - 1) * v
    measure = sphere_measure(state.n - 1)
    return TimeSeriesRecord(
        t=state.t,
        r=state.r,
        sup_A2=float(np.max(A2)),
        sup_H=float(np.max(np.abs(H))),
        area=measure * float(simpson(weight, x=y)),
        boundary_grad=float(abs(w_y[-1])),
        u_min=float(np.min(state.u)),
        u_max=float(np.max(state.u)),
        u_boundary=float(state.u[-1]),
        r_dot=float(-(H[-1] / v[-1]) * slope),
        h_min=float(np.min(H)),
        h_max=float(np.max(H)),
        sup_grad=float(np.max(np.abs(w_y))),
        dissipation=measure * float(simpson(H * H * weight, x=y)),
    )


def series_column(series: List[TimeSeriesRecord], name: str) -> np.ndarray:
    return np.array([getattr(record, name) for record in series], dtype=float)
