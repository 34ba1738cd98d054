import logging
import math
import os
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from dotenv import dotenv_values
from pydantic import BaseModel, ValidationError, field_validator, model_validator

from backend.errors import ConfigError, NeckFlowError
from backend.profile import SupportProfile, parse_profile
from backend.solver import (FlowState, StepControl, StopThresholds, build_initial_cap,
                            state_from_samples)
from config import flow_defaults as defaults

logger = logging.getLogger(__name__)


class RunConfig(BaseModel):
    """One scenario: profile, initial cap, step control, stop thresholds, output."""

    profile: str = "catenoid(a=1)"
    profile_file: Optional[str] = None
    window_lo: Optional[float] = None
    window_hi: Optional[float] = None
    n: int = 2
    M: int = 200
    z0: Optional[float] = None
    z0_upper: Optional[float] = None
    bump: float = 0.0
    initial_samples: Optional[str] = None
    cfl_safety: float = defaults.CFL_SAFETY
    dt_min: float = defaults.DT_MIN
    dt_max: float = defaults.DT_MAX
    max_steps: Optional[int] = defaults.MAX_STEPS
    t_max: float = math.inf
    pinch_fraction: float = defaults.PINCH_FRACTION
    eps_h: float = defaults.EPS_H
    eps_r: float = defaults.EPS_R
    trailing_window: int = defaults.TRAILING_WINDOW
    stride: int = defaults.RECORD_STRIDE
    snapshot_times: List[float] = []
    contact_angle: Optional[float] = None
    fit_window: int = defaults.FIT_WINDOW
    sigma: Optional[float] = None
    out_dir: str = defaults.OUTPUT_DIR
    seed: Optional[int] = None  # reserved; runs are deterministic

    @field_validator("snapshot_times", mode="before")
    @classmethod
    def split_times(cls, value: Any) -> Any:
        if isinstance(value, str):
            return [float(t) for t in value.replace(";", ",").split(",") if t.strip()]
        return value

    @field_validator("snapshot_times")
    @classmethod
    def nonnegative_times(cls, value: List[float]) -> List[float]:
        if any(t < 0 for t in value):
            raise ValueError("snapshot times must be nonnegative")
        return sorted(value)

    @field_validator("n")
    @classmethod
    def check_dimension(cls, value: int) -> int:
        if value < 2:
            raise ValueError("n must be at least 2")
        return value

    @field_validator("M")
    @classmethod
    def check_grid(cls, value: int) -> int:
        if value < 4:
            raise ValueError("M must be at least 4")
        return value

    @field_validator("stride", "trailing_window", "fit_window", "max_steps")
    @classmethod
    def check_positive(cls, value: Optional[int]) -> Optional[int]:
        if value is not None and value < 1:
            raise ValueError("must be a positive integer")
        return value

    @field_validator("contact_angle")
    @classmethod
    def check_angle(cls, value: Optional[float]) -> Optional[float]:
        if value is not None and not 0 < value < math.pi:
            raise ValueError("contact_angle must lie in (0, pi)")
        return value

    @model_validator(mode="after")
    def check_window(self) -> "RunConfig":
        if (self.window_lo is None) != (self.window_hi is None):
            raise ValueError("window_lo and window_hi must be given together")
        if self.window_lo is not None and not self.window_lo < self.window_hi:
            raise ValueError("window_lo must be below window_hi")
        return self

    @property
    def window(self) -> Optional[Tuple[float, float]]:
        if self.window_lo is None:
            return None
        return (self.window_lo, self.window_hi)

    def build_profile(self) -> SupportProfile:
        return parse_profile(self.profile, self.window, self.profile_file)

    def control(self) -> StepControl:
        return StepControl(cfl_safety=self.cfl_safety, dt_min=self.dt_min,
                           dt_max=self.dt_max, max_steps=self.max_steps)

    def thresholds(self) -> StopThresholds:
        return StopThresholds(pinch_fraction=self.pinch_fraction, eps_h=self.eps_h,
                              eps_r=self.eps_r, trailing_window=self.trailing_window,
                              t_max=self.t_max)

    def initial_state(self, profile: SupportProfile, z0: Optional[float] = None) -> FlowState:
        """Cap at z0 (or the configured z0), or resampled user data when given."""
        if z0 is None and self.initial_samples:
            try:
                data = np.loadtxt(self.initial_samples, dtype=float, ndmin=2)
            except (OSError, ValueError) as e:
                raise ConfigError(f"Cannot read initial samples {self.initial_samples}: {e}")
            return state_from_samples(profile, data[:, 0], data[:, 1], self.M, self.n)
        height = self.z0 if z0 is None else z0
        if height is None:
            raise ConfigError("Config needs z0 or initial_samples")
        return build_initial_cap(profile, height, self.M, self.n, self.bump)


def _normalize_keys(raw: Dict[str, Optional[str]]) -> Dict[str, Any]:
    values: Dict[str, Any] = {}
    for key, value in raw.items():
        name = key.strip().lower()
        if name == "m":
            name = "M"
        if value is None or value.strip() == "":
            continue
        values[name] = value.strip()
    return values


def load_run_config(path: Optional[str] = None, **overrides: Any) -> RunConfig:
    """Read a flat key=value file and validate it, including profile and step control."""
    values: Dict[str, Any] = {"out_dir": os.getenv("NECKFLOW_OUT_DIR", defaults.OUTPUT_DIR)}
    if path:
        if not os.path.isfile(path):
            raise ConfigError(f"Config file not found: {path}")
        values.update(_normalize_keys(dotenv_values(path)))
    values.update({k: v for k, v in overrides.items() if v is not None})

    unknown = sorted(set(values) - set(RunConfig.model_fields))
    if unknown:
        raise ConfigError(f"Unknown config keys: {', '.join(unknown)}")
    try:
        config = RunConfig(**values)
        profile = config.build_profile()
        config.control()
        config.thresholds()
        if config.z0 is not None or config.initial_samples:
            config.initial_state(profile)
        if config.z0_upper is not None:
            config.initial_state(profile, config.z0_upper)
    except ValidationError as e:
        raise ConfigError(f"Invalid config: {e}")
    except (NeckFlowError, ValueError, OSError) as e:
        raise ConfigError(str(e))
    logger.info(f"Loaded config: profile={config.profile}, n={config.n}, M={config.M}")
    return config
