import logging
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, minimize_scalar

from backend.errors import GraphConditionError, PreconditionError, ProfileDomainError
from config import flow_defaults as defaults

logger = logging.getLogger(__name__)

Window = Tuple[float, float]
Evaluator = Callable[[np.ndarray, float], Tuple[np.ndarray, np.ndarray, np.ndarray]]


class CriticalKind(str, Enum):
    STRICT_MIN = "strict-min"
    STRICT_MAX = "strict-max"
    DEGENERATE_FLAT = "degenerate-flat"


class RegionKind(str, Enum):
    SHRINKING_NECK = "shrinking-neck"
    BELLY = "belly"
    FLAT_DEGENERATE = "flat-degenerate"


@dataclass(frozen=True)
class EndFlags:
    eq_condition: bool
    no_shrink: bool
    status: str = "closed-form"


@dataclass(frozen=True)
class AsymptoticFlags:
    lower: EndFlags
    upper: EndFlags


@dataclass(frozen=True)
class CriticalPoint:
    z: float
    kind: CriticalKind


@dataclass(frozen=True)
class Region:
    z1: float
    z2: float
    kind: RegionKind


@dataclass(frozen=True)
class RegionDecomposition:
    regions: List[Region]
    critical_points: List[CriticalPoint]
    pinch_points: List[float]

    def region_at(self, z: float) -> Optional[Region]:
        for region in self.regions:
            if region.z1 <= z <= region.z2:
                return region
        return None


@dataclass(frozen=True)
class SupportProfile:
    """Generating curve ω_Σ of a rotationally symmetric support hypersurface."""

    kind: str
    params: Dict[str, Any]
    window: Window
    asymptotic_flags: AsymptoticFlags
    sigma: Optional[float] = None
    bounded_domain: bool = False
    _evaluator: Evaluator = field(default=None, repr=False, compare=False)

    def eval(self, z: float, side: float = 1.0) -> Tuple[float, float, float]:
        """Return (ω_Σ, dω_Σ/dz, d²ω_Σ/dz²) at z.

        ``side`` picks the one-sided derivative at a cone apex: positive for the
        branch above the apex, negative for the branch below.
        """
        z = float(z)
        if self.bounded_domain:
            z = self._clip_to_window(z)
        value, dz, dzz = self._evaluator(np.float64(z), side)
        return float(value), float(dz), float(dzz)

    def _clip_to_window(self, z):
        lo, hi = self.window
        span = hi - lo
        if np.any(z < lo - 1e-12 * span) or np.any(z > hi + 1e-12 * span):
            raise ProfileDomainError(f"Tabulated profile queried outside [{lo}, {hi}]")
        return np.clip(z, lo, hi)

    def eval_array(self, z: np.ndarray, side: float = 1.0) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        z = np.asarray(z, dtype=float)
        if self.bounded_domain:
            z = self._clip_to_window(z)
        return self._evaluator(z, side)

    def value(self, z: float, side: float = 1.0) -> float:
        return self.eval(z, side)[0]

    def slope(self, z: float, side: float = 1.0) -> float:
        return self.eval(z, side)[1]

    def with_window(self, window: Window) -> "SupportProfile":
        lo, hi = _check_window(window)
        if self.bounded_domain and (lo < self.window[0] or hi > self.window[1]):
            raise ProfileDomainError(
                f"Window [{lo}, {hi}] exceeds tabulated range {self.window}"
            )
        return SupportProfile(
            kind=self.kind,
            params=self.params,
            window=(lo, hi),
            asymptotic_flags=self.asymptotic_flags,
            sigma=self.sigma,
            bounded_domain=self.bounded_domain,
            _evaluator=self._evaluator,
        )

    def describe(self) -> str:
        args = ", ".join(f"{k}={v}" for k, v in self.params.items() if k != "samples")
        return f"{self.kind}({args})"


# --- Catalog ---

def _check_window(window: Window) -> Window:
    lo, hi = float(window[0]), float(window[1])
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        raise PreconditionError(f"Window [{lo}, {hi}] is degenerate")
    return lo, hi


def _both_ends(eq_condition: bool, no_shrink: bool) -> AsymptoticFlags:
    flags = EndFlags(eq_condition, no_shrink)
    return AsymptoticFlags(lower=flags, upper=flags)


def _signed(d: np.ndarray, side: float) -> np.ndarray:
    return np.where(d > 0, 1.0, np.where(d < 0, -1.0, math.copysign(1.0, side)))


def cylinder(R: float = 1.0, window: Window = (-2.0, 2.0)) -> SupportProfile:
    if R <= 0:
        raise ProfileDomainError(f"Cylinder radius must be positive, got {R}")

    def evaluate(z, side):
        return np.full_like(z, R), np.zeros_like(z), np.zeros_like(z)

    return SupportProfile("cylinder", {"R": R}, _check_window(window),
                          _both_ends(False, False), _evaluator=evaluate)


def catenoid(a: float = 1.0, window: Window = (-2.0, 2.0)) -> SupportProfile:
    if a <= 0:
        raise ProfileDomainError(f"Catenoid neck radius must be positive, got {a}")

    def evaluate(z, side):
        x = z / a
        return a * np.cosh(x), np.sinh(x), np.cosh(x) / a

    return SupportProfile("catenoid", {"a": a}, _check_window(window),
                          _both_ends(True, True), _evaluator=evaluate)


def cosine(A: float = 2.0, B: float = 1.0, k: float = 1.0,
           window: Window = (-1.0, 7.0)) -> SupportProfile:
    if A < abs(B):
        raise ProfileDomainError(f"cosine profile needs A >= |B|, got A={A}, B={B}")

    def evaluate(z, side):
        phase = k * z
        return A + B * np.cos(phase), -B * k * np.sin(phase), -B * k * k * np.cos(phase)

    oscillates = B != 0 and k != 0
    return SupportProfile("cosine", {"A": A, "B": B, "k": k}, _check_window(window),
                          _both_ends(oscillates, False), _evaluator=evaluate)


def cone(m: float = 1.0, z_star: float = 0.0, window: Window = (-2.0, 2.0)) -> SupportProfile:
    if m <= 0:
        raise ProfileDomainError(f"Cone slope must be positive, got {m}")

    def evaluate(z, side):
        d = z - z_star
        return m * np.abs(d), m * _signed(d, side), np.zeros_like(z)

    return SupportProfile("cone", {"m": m, "z_star": z_star}, _check_window(window),
                          _both_ends(True, True), sigma=0.0, _evaluator=evaluate)


def power(c: float = 1.0, alpha: float = 2.0, z_star: float = 0.0,
          window: Window = (-2.0, 2.0)) -> SupportProfile:
    if c <= 0 or alpha < 1:
        raise ProfileDomainError(f"power profile needs c > 0 and alpha >= 1, got c={c}, alpha={alpha}")

    def evaluate(z, side):
        d = z - z_star
        a = np.abs(d)
        sign = _signed(d, side)
        with np.errstate(divide="ignore", invalid="ignore"):
            dzz = c * alpha * (alpha - 1.0) * a ** (alpha - 2.0)
        if alpha == 2.0 or alpha == 1.0:
            dzz = np.full_like(z, c * alpha * (alpha - 1.0))
        return c * a ** alpha, c * alpha * a ** (alpha - 1.0) * sign, dzz

    return SupportProfile("power", {"c": c, "alpha": alpha, "z_star": z_star},
                          _check_window(window), _both_ends(True, True),
                          sigma=1.0 - 1.0 / alpha, _evaluator=evaluate)


def reciprocal_mollified(z_knee: float = 0.0, window: Window = (-2.0, 6.0)) -> SupportProfile:
    """Smooth decreasing profile: ω ~ 1/(z − z_knee) above the knee, ω ~ z_knee − z below.

    ω is the positive root of ω(ω + z − z_knee) = 1, hence ω' = −ω²/(1 + ω²).
    """

    def evaluate(z, side):
        d = z - z_knee
        root = np.sqrt(d * d + 4.0)
        value = np.where(d >= 0, 2.0 / (root + d), (root - d) / 2.0)
        sq = value * value
        return value, -sq / (1.0 + sq), 2.0 * sq * value / (1.0 + sq) ** 3

    flags = AsymptoticFlags(lower=EndFlags(True, True), upper=EndFlags(False, False))
    return SupportProfile("reciprocal-mollified", {"z_knee": z_knee}, _check_window(window),
                          flags, sigma=1.0, _evaluator=evaluate)


def gaussian_bump(base: float = 2.0, amplitude: float = -1.0,
                  window: Window = (-3.0, 3.0)) -> SupportProfile:
    if base + min(amplitude, 0.0) < 0 or base < 0:
        raise ProfileDomainError(f"gaussian-bump becomes negative: base={base}, amplitude={amplitude}")

    def evaluate(z, side):
        g = np.exp(-z * z)
        return base + amplitude * g, -2.0 * amplitude * z * g, amplitude * (4.0 * z * z - 2.0) * g

    return SupportProfile("gaussian-bump", {"base": base, "amplitude": amplitude},
                          _check_window(window), _both_ends(False, amplitude < 0),
                          _evaluator=evaluate)


def polynomial(coeffs: Sequence[float], window: Window = (-3.0, 3.0)) -> SupportProfile:
    """Polynomial profile, coefficients lowest order first."""
    poly = Polynomial([float(c) for c in coeffs])
    first, second = poly.deriv(1), poly.deriv(2)
    lo, hi = _check_window(window)
    grid = np.linspace(lo, hi, defaults.SAMPLES_PER_WINDOW)
    if np.min(poly(grid)) < -defaults.PINCH_TOLERANCE:
        raise ProfileDomainError("polynomial profile is negative on its window")

    def evaluate(z, side):
        return poly(z), first(z), second(z)

    trimmed = poly.trim()
    degree = trimmed.degree()
    lead = trimmed.coef[-1] if degree > 0 else 0.0
    upper_grows = degree > 0 and lead > 0
    lower_grows = degree > 0 and lead * (-1) ** degree > 0
    flags = AsymptoticFlags(lower=EndFlags(lower_grows, lower_grows),
                            upper=EndFlags(upper_grows, upper_grows))
    return SupportProfile("polynomial", {"coeffs": [float(c) for c in coeffs]}, (lo, hi),
                          flags, _evaluator=evaluate)


def tabulated(z: Sequence[float], w: Sequence[float]) -> SupportProfile:
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    if z.ndim != 1 or z.shape != w.shape or z.size < 4:
        raise ProfileDomainError("Tabulated profile needs two equal-length columns of at least 4 samples")
    if np.any(np.diff(z) <= 0):
        raise ProfileDomainError("Tabulated samples must be strictly increasing in z")
    if np.any(w < 0):
        raise ProfileDomainError("Tabulated profile has negative values")
    spline = CubicSpline(z, w, bc_type="not-a-knot")
    first, second = spline.derivative(1), spline.derivative(2)

    def evaluate(x, side):
        return spline(x), first(x), second(x)

    window = (float(z[0]), float(z[-1]))
    tail = max(4, z.size // 10)
    flags = AsymptoticFlags(
        lower=_window_end_flags(w[:tail], first(z[:tail]), direction=-1.0),
        upper=_window_end_flags(w[-tail:], first(z[-tail:]), direction=1.0),
    )
    return SupportProfile("tabulated", {"samples": int(z.size)}, window, flags,
                          bounded_domain=True, _evaluator=evaluate)


def _window_end_flags(values: np.ndarray, slopes: np.ndarray, direction: float) -> EndFlags:
    unsettled = float(np.ptp(values)) > defaults.FLATNESS_TOLERANCE
    outward = bool(np.all(direction * slopes > 0))
    return EndFlags(eq_condition=unsettled, no_shrink=outward, status="window-only")


def load_tabulated(path: str) -> SupportProfile:
    try:
        data = np.loadtxt(path, dtype=float, ndmin=2)
    except (OSError, ValueError) as e:
        raise ProfileDomainError(f"Cannot read tabulated profile {path}: {e}")
    if data.shape[1] != 2:
        raise ProfileDomainError(f"Tabulated profile {path} must have two columns (z, omega)")
    return tabulated(data[:, 0], data[:, 1])


_CATALOG: Dict[str, Tuple[Callable[..., SupportProfile], List[str]]] = {
    "cylinder": (cylinder, ["R"]),
    "catenoid": (catenoid, ["a"]),
    "cosine": (cosine, ["A", "B", "k"]),
    "cone": (cone, ["m", "z_star"]),
    "power": (power, ["c", "alpha", "z_star"]),
    "reciprocal-mollified": (reciprocal_mollified, ["z_knee"]),
    "gaussian-bump": (gaussian_bump, ["base", "amplitude"]),
}
_ALIASES = {"reciprocal": "reciprocal-mollified", "gaussian": "gaussian-bump"}
_PROFILE_PATTERN = re.compile(r"^\s*([A-Za-z][\w\-]*)\s*(?:\((.*)\))?\s*$")


def parse_profile(text: str, window: Optional[Window] = None,
                  profile_file: Optional[str] = None) -> SupportProfile:
    """Build a profile from a config string such as ``cone(m=1, z_star=0)``."""
    match = _PROFILE_PATTERN.match(text or "")
    if not match:
        raise ProfileDomainError(f"Cannot parse profile string '{text}'")
    kind = match.group(1).lower().replace("_", "-")
    kind = _ALIASES.get(kind, kind)
    body = (match.group(2) or "").strip()
    positional: List[float] = []
    named: Dict[str, float] = {}
    for token in filter(None, (t.strip() for t in body.split(","))):
        try:
            if "=" in token:
                key, raw = token.split("=", 1)
                named[key.strip()] = float(raw)
            else:
                positional.append(float(token))
        except ValueError:
            raise ProfileDomainError(f"Bad parameter '{token}' in profile string '{text}'")

    if kind == "tabulated":
        if not profile_file:
            raise ProfileDomainError("Tabulated profile needs profile_file")
        profile = load_tabulated(profile_file)
        return profile.with_window(window) if window else profile
    if kind == "polynomial":
        coeffs = positional or _indexed_coefficients(named, text)
        if not coeffs:
            raise ProfileDomainError("polynomial profile needs coefficients")
        return polynomial(coeffs, window=window) if window else polynomial(coeffs)
    if kind not in _CATALOG:
        raise ProfileDomainError(f"Unknown profile kind '{kind}'")

    factory, names = _CATALOG[kind]
    if len(positional) > len(names):
        raise ProfileDomainError(f"Too many parameters for {kind}: {positional}")
    kwargs: Dict[str, Any] = dict(zip(names, positional))
    for key, value in named.items():
        if key not in names:
            raise ProfileDomainError(f"Unknown parameter '{key}' for {kind}")
        kwargs[key] = value
    if window:
        kwargs["window"] = window
    return factory(**kwargs)


# --- Analysis ---

def _sample(profile: SupportProfile, window: Optional[Window], samples: int):
    lo, hi = _check_window(window or profile.window)
    z = np.linspace(lo, hi, samples)
    value, dz, dzz = profile.eval_array(z)
    return z, value, dz, dzz


def graph_constant(profile: SupportProfile, window: Optional[Window] = None,
                   samples: int = defaults.SAMPLES_PER_WINDOW) -> float:
    """C_Σ = inf over the window of 1/√(1 + (dω_Σ/dz)²)."""
    z, _, dz, _ = _sample(profile, window, samples)
    steep = np.abs(dz)
    if not np.all(np.isfinite(steep)):
        raise GraphConditionError(f"{profile.describe()} has unbounded slope on the window")
    i = int(np.argmax(steep))
    worst = float(steep[i])
    if 0 < i < z.size - 1:
        result = minimize_scalar(lambda x: -abs(profile.slope(x)), bounds=(z[i - 1], z[i + 1]),
                                 method="bounded", options={"xatol": defaults.ROOT_TOLERANCE})
        worst = max(worst, -float(result.fun))
    constant = 1.0 / math.sqrt(1.0 + worst * worst)
    if constant <= defaults.GRAPH_CONSTANT_FLOOR:
        raise GraphConditionError(f"Graph constant {constant} of {profile.describe()} is not positive")
    return constant


def _classify_extremum(profile: SupportProfile, z: float, h: float) -> Optional[CriticalKind]:
    lo, hi = profile.window if profile.bounded_domain else (-math.inf, math.inf)
    center = profile.value(z)
    left = profile.value(max(z - h, lo)) - center
    right = profile.value(min(z + h, hi)) - center
    if max(abs(left), abs(right)) < defaults.FLATNESS_TOLERANCE:
        return CriticalKind.DEGENERATE_FLAT
    if left > 0 and right > 0:
        return CriticalKind.STRICT_MIN
    if left < 0 and right < 0:
        return CriticalKind.STRICT_MAX
    return None


def _scan_roots(z: np.ndarray, g: np.ndarray, func: Callable[[float], float],
                accept: float) -> List[float]:
    """Zeros of a sampled function: exact-zero runs plus refined sign changes."""
    roots: List[float] = []
    zero = np.abs(g) <= 1e-14
    i = 0
    while i < z.size:
        if zero[i]:
            j = i
            while j + 1 < z.size and zero[j + 1]:
                j += 1
            roots.append(float(0.5 * (z[i] + z[j])))
            i = j + 1
            continue
        if i + 1 < z.size and not zero[i + 1] and g[i] * g[i + 1] < 0:
            root = brentq(func, z[i], z[i + 1], xtol=defaults.ROOT_TOLERANCE)
            if abs(func(root)) <= accept:
                roots.append(float(root))
        i += 1
    return roots


def critical_points(profile: SupportProfile, window: Optional[Window] = None,
                    samples: int = defaults.SAMPLES_PER_WINDOW) -> List[CriticalPoint]:
    z, _, dz, _ = _sample(profile, window, samples)
    h = float(z[1] - z[0])
    found: List[CriticalPoint] = []
    for root in _scan_roots(z, dz, profile.slope, defaults.DERIVATIVE_TOLERANCE):
        kind = _classify_extremum(profile, root, h)
        if kind is None:
            logger.debug(f"Skipping stationary inflection of {profile.describe()} at z={root}")
            continue
        found.append(CriticalPoint(root, kind))
    return found


def pinch_points(profile: SupportProfile, window: Optional[Window] = None,
                 samples: int = defaults.SAMPLES_PER_WINDOW) -> List[float]:
    z, value, dz, _ = _sample(profile, window, samples)
    h = float(z[1] - z[0])
    lower = np.concatenate(([True], value[1:] <= value[:-1]))
    upper = np.concatenate((value[:-1] <= value[1:], [True]))
    # a zero within one step of a sample keeps that sample below h * local slope
    steep = np.maximum(np.abs(dz), np.maximum(np.roll(np.abs(dz), 1), np.roll(np.abs(dz), -1)))
    reachable = value <= defaults.PINCH_TOLERANCE + 2.0 * h * steep
    points: List[float] = []
    for i in np.flatnonzero(lower & upper & reachable):
        a, b = z[max(i - 1, 0)], z[min(i + 1, z.size - 1)]
        result = minimize_scalar(profile.value, bounds=(a, b), method="bounded",
                                 options={"xatol": defaults.ROOT_TOLERANCE})
        candidates = [(float(result.fun), float(result.x)), (float(value[i]), float(z[i]))]
        best_value, best_z = min(candidates)
        if best_value > defaults.PINCH_TOLERANCE:
            continue
        if points and abs(best_z - points[-1]) < 2 * h:
            continue
        neighbours = [profile.value(x) for x in (best_z - h, best_z + h) if z[0] <= x <= z[-1]]
        if any(v <= defaults.PINCH_TOLERANCE for v in neighbours):
            logger.warning(f"Non-isolated zero of {profile.describe()} near z={best_z}; skipped")
            continue
        points.append(best_z)
    return points


def _split_between(profile: SupportProfile, a: CriticalPoint, b: CriticalPoint) -> float:
    curvature = lambda x: profile.eval(x)[2]
    ca, cb = curvature(a.z), curvature(b.z)
    if ca * cb < 0:
        return float(brentq(curvature, a.z, b.z, xtol=defaults.ROOT_TOLERANCE))
    return 0.5 * (a.z + b.z)


def _region_kind(interior: List[CriticalPoint]) -> RegionKind:
    kinds = {c.kind for c in interior}
    if CriticalKind.STRICT_MAX in kinds:
        return RegionKind.BELLY
    if CriticalKind.STRICT_MIN in kinds or not kinds:
        return RegionKind.SHRINKING_NECK
    return RegionKind.FLAT_DEGENERATE


def classify_regions(profile: SupportProfile, window: Optional[Window] = None,
                     samples: int = defaults.SAMPLES_PER_WINDOW) -> RegionDecomposition:
    """Tile the window into shrinking-neck, belly and flat-degenerate regions.

    Neighbouring minima and maxima are separated at the inflection between them;
    pinch points are region boundaries.
    """
    lo, hi = _check_window(window or profile.window)
    pinches = pinch_points(profile, (lo, hi), samples)
    crit = critical_points(profile, (lo, hi), samples)
    h = (hi - lo) / (samples - 1)
    interior_crit = [c for c in crit
                     if all(abs(c.z - p) > 2 * h for p in pinches)]

    bounds = {lo, hi}
    for a, b in zip(interior_crit, interior_crit[1:]):
        if a.kind != b.kind:
            bounds.add(_split_between(profile, a, b))
    bounds.update(p for p in pinches if lo < p < hi)
    edges = sorted(bounds)

    regions = []
    for z1, z2 in zip(edges, edges[1:]):
        inside = [c for c in interior_crit if z1 < c.z < z2]
        regions.append(Region(z1, z2, _region_kind(inside)))
    logger.info(f"{profile.describe()} on [{lo}, {hi}]: {len(regions)} regions, "
                f"{len(crit)} critical points, {len(pinches)} pinch points")
    return RegionDecomposition(regions=regions, critical_points=crit, pinch_points=pinches)


def check_asymptotics(profile: SupportProfile) -> AsymptoticFlags:
    return profile.asymptotic_flags


def contact_angle_equilibria(profile: SupportProfile, window: Optional[Window],
                             angle: float,
                             samples: int = defaults.SAMPLES_PER_WINDOW) -> List[float]:
    """Heights where a flat disk meets Σ at the prescribed contact angle."""
    if not 0 < angle < math.pi:
        raise PreconditionError(f"Contact angle must lie in (0, pi), got {angle}")
    target = math.cos(angle)
    if abs(target) < 1e-15:
        return [c.z for c in critical_points(profile, window, samples)]

    def residual(x: float) -> float:
        d = profile.slope(x)
        return d / math.sqrt(1.0 + d * d) + target

    z, _, dz, _ = _sample(profile, window, samples)
    g = dz / np.sqrt(1.0 + dz * dz) + target
    return _scan_roots(z, g, residual, 1e-8)


def is_conelike(profile: SupportProfile, window: Optional[Window] = None,
                samples: int = defaults.SAMPLES_PER_WINDOW) -> bool:
    """Single pinch point z* with (z − z*)·dω_Σ/dz > 0 elsewhere on the window."""
    pinches = pinch_points(profile, window, samples)
    if len(pinches) != 1:
        return False
    z_star = pinches[0]
    z, _, dz, _ = _sample(profile, window, samples)
    h = float(z[1] - z[0])
    away = np.abs(z - z_star) > h
    return bool(np.all((z[away] - z_star) * dz[away] > 0))


def pinch_exponent(profile: SupportProfile) -> Optional[float]:
    return profile.sigma


_COEFF_KEY = re.compile(r"^c(\d+)$")


def _indexed_coefficients(named: Dict[str, float], text: str) -> List[float]:
    """Dense coefficient list from keys c0, c1, ..., c10; missing powers are zero."""
    powers: Dict[int, float] = {}
    for key, value in named.items():
        match = _COEFF_KEY.match(key)
        if not match:
            raise ProfileDomainError(f"Unknown polynomial coefficient '{key}' in '{text}'")
        powers[int(match.group(1))] = value
    if not powers:
        return []
    coeffs = [0.0] * (max(powers) + 1)
    for power, value in powers.items():
        coeffs[power] = value
    return coeffs
