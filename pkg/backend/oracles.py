"""Closed-form checks of the curvature formulas and the discrete stencil."""

import logging
import math
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from backend.geometry import (GraphPoint, curvature_profile, mean_curvature,
                              radial_derivatives, second_fundamental_norm, sphere_measure)
from backend.geometry import area as state_area
from backend.profile import cylinder
from backend.solver import FlowState

logger = logging.getLogger(__name__)

ORDER_THRESHOLD = 1.8
RELATIVE_TOLERANCE = 1e-10
EXACT_FLOOR = 1e-10

Surface = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray, np.ndarray]]


class OracleResult(BaseModel):
    name: str
    value: Optional[float]
    expected: float
    error: float
    tolerance: float
    passed: bool


def _compare(name: str, value: float, expected: float,
             tolerance: float = RELATIVE_TOLERANCE) -> OracleResult:
    error = abs(value - expected) / max(1.0, abs(expected))
    return OracleResult(name=name, value=value, expected=expected, error=error,
                        tolerance=tolerance, passed=error <= tolerance)


def sphere_surface(R: float) -> Surface:
    def evaluate(y):
        w = np.sqrt(R * R - y * y)
        return w, -y / w, -R * R / w ** 3
    return evaluate


def paraboloid_surface(y):
    return 0.5 * y * y, y, np.ones_like(y)


def refinement_order(surface: Surface, r: float, n: int,
                     curvature: Callable[[np.ndarray, int], np.ndarray],
                     grids: Tuple[int, int] = (32, 64)) -> float:
    """Observed order of the nodal H from the stencil under mesh doubling.

    Errors are taken over every node; returns inf when the fine grid reproduces H
    to rounding.
    """
    errors = []
    for m in grids:
        y = np.linspace(0.0, r, m + 1)
        w, w_y_exact, _ = surface(y)
        w_y, w_yy = radial_derivatives(w, r, float(w_y_exact[-1]))
        H, _ = curvature_profile(y, w_y, w_yy, n)
        exact = curvature(y, n)
        errors.append(float(np.max(np.abs(H - exact))))
    coarse, fine = errors
    if fine <= EXACT_FLOOR:
        return math.inf
    return math.log(coarse / fine, grids[1] / grids[0])


class GeometryOracles:
    """Collection of curvature and area checks with closed-form answers."""

    def __init__(self):
        self.checks: Dict[str, Callable[[], List[OracleResult]]] = {
            "sphere": self._sphere_checks,
            "paraboloid": self._paraboloid_checks,
            "flat": self._flat_checks,
            "flat_area": self._flat_area_checks,
            "refinement": self._refinement_checks,
        }

    def run_all(self, names: Optional[List[str]] = None) -> List[OracleResult]:
        results: List[OracleResult] = []
        for name in names or list(self.checks):
            results.extend(self.checks[name]())
        failed = [res.name for res in results if not res.passed]
        if failed:
            logger.error(f"Geometry oracles failed: {', '.join(failed)}")
        else:
            logger.info(f"All {len(results)} geometry oracles passed")
        return results

    def _sphere_checks(self) -> List[OracleResult]:
        results = []
        for n in (2, 3):
            for R in (1.0, 2.0):
                y = 0.5 * R
                w, w_y, w_yy = sphere_surface(R)(np.array([y]))
                point = GraphPoint(y=y, w_y=float(w_y[0]), w_yy=float(w_yy[0]), n=n)
                axis = GraphPoint(y=0.0, w_y=0.0, w_yy=-1.0 / R, n=n)
                results += [
                    _compare(f"sphere H n={n} R={R:g}", mean_curvature(point), n / R),
                    _compare(f"sphere |A|^2 n={n} R={R:g}", second_fundamental_norm(point), n / R ** 2),
                    _compare(f"sphere axis H n={n} R={R:g}", mean_curvature(axis), n / R),
                ]
        return results

    def _paraboloid_checks(self) -> List[OracleResult]:
        point = GraphPoint(y=1.0, w_y=1.0, w_yy=1.0, n=2)
        return [
            _compare("paraboloid H", mean_curvature(point), -3.0 / (2.0 * math.sqrt(2.0))),
            _compare("paraboloid |A|^2", second_fundamental_norm(point), 0.625),
        ]

    def _flat_checks(self) -> List[OracleResult]:
        point = GraphPoint(y=0.7, w_y=0.0, w_yy=0.0, n=3)
        return [
            _compare("flat H", mean_curvature(point), 0.0),
            _compare("flat |A|^2", second_fundamental_norm(point), 0.0),
        ]

    def _flat_area_checks(self) -> List[OracleResult]:
        results = []
        for n in (2, 3, 4):
            disk = FlowState(n=n, t=0.0, r=1.0, u=np.zeros(513), profile=cylinder(1.0))
            results.append(_compare(f"flat disk area n={n}", state_area(disk),
                                    sphere_measure(n - 1) / n))
        return results

    def _refinement_checks(self) -> List[OracleResult]:
        def sphere_H(y, n):
            return np.full_like(y, n / 1.0)

        def paraboloid_H(y, n):
            v = np.sqrt(1.0 + y * y)
            return -1.0 / v ** 3 - (n - 1) / v

        results = []
        for label, surface, exact in (("sphere", sphere_surface(1.0), sphere_H),
                                      ("paraboloid", paraboloid_surface, paraboloid_H)):
            order = refinement_order(surface, 0.6, 2, exact)
            # None when the stencil is exact on both grids
            value = order if math.isfinite(order) else None
            results.append(OracleResult(name=f"{label} refinement order", value=value,
                                        expected=2.0, error=max(0.0, ORDER_THRESHOLD - order),
                                        tolerance=0.0, passed=order >= ORDER_THRESHOLD))
        return results
