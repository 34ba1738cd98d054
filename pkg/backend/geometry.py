import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Tuple

import numpy as np
from scipy.integrate import simpson
from scipy.special import gamma

from backend.errors import AxisRegularityError, PreconditionError, ProfileDomainError

if TYPE_CHECKING:
    from backend.profile import SupportProfile
    from backend.solver import FlowState


@dataclass(frozen=True)
class GraphPoint:
    """Radius, slope and second derivative of the radial graph ω at one point."""

    y: float
    w_y: float
    w_yy: float
    n: int = 2


def _check_point(p: GraphPoint) -> None:
    if p.n < 2:
        raise PreconditionError(f"Disk dimension must be at least 2, got {p.n}")
    if p.y < 0:
        raise PreconditionError(f"Radius must be nonnegative, got {p.y}")
    if p.y == 0 and p.w_y != 0:
        raise AxisRegularityError(f"Slope {p.w_y} at the axis; a smooth graph has zero slope there")


def slope_factor(p: GraphPoint) -> float:
    return math.sqrt(1.0 + p.w_y * p.w_y)


def mean_curvature(p: GraphPoint) -> float:
    _check_point(p)
    if p.y == 0:
        return -p.n * p.w_yy
    v = slope_factor(p)
    return -p.w_yy / v ** 3 - (p.n - 1) * p.w_y / (p.y * v)


def second_fundamental_norm(p: GraphPoint) -> float:
    _check_point(p)
    if p.y == 0:
        return p.n * p.w_yy * p.w_yy
    v2 = 1.0 + p.w_y * p.w_y
    return p.w_yy ** 2 / v2 ** 3 + (p.n - 1) * p.w_y ** 2 / (p.y * p.y * v2)


def neumann_residual(w_y_boundary: float, profile: "SupportProfile", z_boundary: float,
                     side: float = 1.0) -> float:
    """Zero exactly when the graph meets Σ perpendicularly at height z_boundary."""
    return w_y_boundary + profile.slope(z_boundary, side)


def boundary_gradient_bound(graph_constant: float) -> float:
    """Largest boundary slope |ω_y(r)| compatible with graph constant C_Σ."""
    if not 0 < graph_constant <= 1:
        raise ProfileDomainError(f"Graph constant must lie in (0, 1], got {graph_constant}")
    return math.sqrt(1.0 / graph_constant ** 2 - 1.0)


def sphere_measure(k: int) -> float:
    """Measure of the unit k-sphere."""
    return 2.0 * math.pi ** ((k + 1) / 2.0) / gamma((k + 1) / 2.0)


# --- Discrete operators on the normalized grid ---

def radial_derivatives(u: np.ndarray, r: float, boundary_slope: float) -> Tuple[np.ndarray, np.ndarray]:
    """ω_y and ω_yy at the nodes s_i = i/M of a graph on (0, r).

    Central differences inside; the axis uses the even reflection u_{-1} = u_1. At the
    boundary ω_y(r) = boundary_slope and ω_yy comes from the cubic through the last three
    nodes with that slope, so every node is second order.
    """
    m = u.size - 1
    h = r / m
    w_y = np.empty_like(u)
    w_yy = np.empty_like(u)
    w_y[1:-1] = (u[2:] - u[:-2]) / (2.0 * h)
    w_yy[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / (h * h)
    w_y[0] = 0.0
    w_yy[0] = 2.0 * (u[1] - u[0]) / (h * h)
    w_y[-1] = boundary_slope
    w_yy[-1] = (8.0 * u[-2] - u[-3] - 7.0 * u[-1] + 6.0 * h * boundary_slope) / (2.0 * h * h)
    return w_y, w_yy


def curvature_profile(y: np.ndarray, w_y: np.ndarray, w_yy: np.ndarray,
                      n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodal mean curvature H and |A|²; nodes at y = 0 use the axis limit."""
    v2 = 1.0 + w_y * w_y
    v = np.sqrt(v2)
    axis = y == 0
    safe_y = np.where(axis, 1.0, y)
    rotation = np.where(axis, w_yy, w_y / (safe_y * v))
    meridian = w_yy / (v2 * v)
    H = -meridian - (n - 1) * rotation
    A2 = meridian ** 2 + (n - 1) * rotation ** 2
    return H, A2


def state_curvatures(state: "FlowState"):
    """(y, ω_y, H, |A|²) of a flow state on its own grid."""
    y = state.y
    w_y, w_yy = radial_derivatives(state.u, state.r, state.boundary_slope())
    H, A2 = curvature_profile(y, w_y, w_yy, state.n)
    return y, w_y, H, A2


def _measure(state: "FlowState", integrand: np.ndarray, y: np.ndarray) -> float:
    return sphere_measure(state.n - 1) * float(simpson(integrand, x=y))


def area(state: "FlowState") -> float:
    """σ_{n-1} ∫_0^r y^{n-1} v dy."""
    y, w_y, _, _ = state_curvatures(state)
    return _measure(state, y ** (state.n - 1) * np.sqrt(1.0 + w_y * w_y), y)


def dissipation(state: "FlowState") -> float:
    """σ_{n-1} ∫_0^r H² y^{n-1} v dy, the rate at which the flow loses area."""
    y, w_y, H, _ = state_curvatures(state)
    return _measure(state, H * H * y ** (state.n - 1) * np.sqrt(1.0 + w_y * w_y), y)
