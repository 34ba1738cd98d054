"""NeckFlow - free-boundary mean curvature flow of rotationally symmetric disks.

Command-line entry point: classify support profiles, evolve caps, classify
singularities, run foliation sweeps and check the geometry oracles.
"""

import argparse
import dataclasses
import logging
import os
import sys
from typing import Any, Dict, List, Optional, Tuple

from dotenv import load_dotenv
from pydantic import BaseModel

from backend.analysis import (classify_singularity, estimate_blowup_time,
                              foliation_sweep, predict_limit_disk)
from backend.errors import ComparisonFailure, ConfigError, NeckFlowError
from backend.oracles import GeometryOracles
from backend.profile import (classify_regions, check_asymptotics, contact_angle_equilibria,
                             graph_constant)
from backend.solver import FlowEventKind, RunResult, run
from backend.sweep_engine import SweepEngine
from config import flow_defaults as defaults
from utils.export_utils import ExportUtils
from utils.run_config import RunConfig, load_run_config

# Load environment variables
load_dotenv()

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


# Report models
class RegionReport(BaseModel):
    profile: str
    window: Tuple[float, float]
    graph_constant: float
    regions: List[Dict[str, Any]]
    critical_points: List[Dict[str, Any]]
    pinch_points: List[float]
    asymptotics: Dict[str, Any]
    contact_angle: Optional[float] = None
    contact_angle_equilibria: Optional[List[float]] = None


class EventSummary(BaseModel):
    profile: str
    n: int
    M: int
    event: str
    t_event: float
    message: str = ""
    records: int
    r_final: float
    u_boundary_final: float
    t_blowup: Optional[float] = None
    predicted_limit: Optional[Dict[str, Any]] = None
    snapshots: List[str] = []


# Handlers
def cmd_classify(config: RunConfig, export: ExportUtils) -> int:
    profile = config.build_profile()
    window = config.window or profile.window
    decomposition = classify_regions(profile, window)
    report = RegionReport(
        profile=profile.describe(),
        window=window,
        graph_constant=graph_constant(profile, window),
        regions=[{"z1": reg.z1, "z2": reg.z2, "kind": reg.kind.value}
                 for reg in decomposition.regions],
        critical_points=[{"z": c.z, "kind": c.kind.value}
                         for c in decomposition.critical_points],
        pinch_points=list(decomposition.pinch_points),
        asymptotics=dataclasses.asdict(check_asymptotics(profile)),
    )
    if config.contact_angle is not None:
        report.contact_angle = config.contact_angle
        report.contact_angle_equilibria = contact_angle_equilibria(profile, window,
                                                                   config.contact_angle)
    path = export.write_report(report, "regions.json")
    logger.info(f"Region report written to {path}")
    return EXIT_OK


def _evolve(config: RunConfig, export: ExportUtils) -> Tuple[RunResult, EventSummary]:
    """Run one flow and write trajectory, snapshots and summary."""
    profile = config.build_profile()
    state = config.initial_state(profile)
    prediction = None
    if config.initial_samples is None:
        decomposition = classify_regions(profile, config.window)
        prediction = predict_limit_disk(profile, decomposition, state).model_dump()

    result = run(state, config.control(), config.thresholds(),
                 stride=config.stride, sample_times=config.snapshot_times)
    export.write_trajectory(result.records)
    snapshots = export.write_snapshots(result.snapshots)

    t_blowup = None
    if result.event.kind == FlowEventKind.PINCHED:
        sigma = config.sigma if config.sigma is not None else profile.sigma
        try:
            t_blowup = estimate_blowup_time(result.records, sigma, config.fit_window).t_blowup
        except NeckFlowError as e:
            logger.warning(f"No blow-up time estimate: {e}")

    final = result.event.state
    summary = EventSummary(
        profile=profile.describe(), n=config.n, M=config.M,
        event=result.event.kind.value, t_event=result.event.t_event,
        message=result.event.message, records=len(result.records),
        r_final=final.r, u_boundary_final=float(final.u[-1]),
        t_blowup=t_blowup, predicted_limit=prediction,
        snapshots=[os.path.basename(p) for p in snapshots],
    )
    export.write_report(summary, "summary.json")
    return result, summary


def cmd_evolve(config: RunConfig, export: ExportUtils) -> int:
    result, summary = _evolve(config, export)
    if result.event.kind == FlowEventKind.STEP_FAILURE:
        logger.error(f"Flow failed at t={summary.t_event}: {summary.message}")
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_singularity(config: RunConfig, export: ExportUtils) -> int:
    result, _ = _evolve(config, export)
    profile = result.event.state.profile
    sigma = config.sigma if config.sigma is not None else profile.sigma
    report = classify_singularity(result.event, result.records, sigma, config.fit_window)
    export.write_report(report, "singularity.json")
    label = report.kind.value if report.kind else report.status
    logger.info(f"Singularity report: {label}")
    return EXIT_OK


def cmd_foliate(config: RunConfig, export: ExportUtils) -> int:
    if config.z0 is None or config.z0_upper is None:
        raise ConfigError("foliate needs both z0 and z0_upper")
    profile = config.build_profile()
    low, high = sorted((config.z0, config.z0_upper))
    report = foliation_sweep(
        profile,
        config.initial_state(profile, low),
        config.initial_state(profile, high),
        config.control(),
        config.thresholds(),
        stride=config.stride,
        engine=SweepEngine(max_workers=defaults.MAX_WORKERS),
    )
    export.write_report(report, "sweep.json")
    return EXIT_OK


def cmd_geometry_check(export: ExportUtils) -> int:
    results = GeometryOracles().run_all()
    print(f"{'check':<36} {'value':>22} {'expected':>22}  result")
    for res in results:
        value = "exact" if res.value is None else f"{res.value:.15g}"
        print(f"{res.name:<36} {value:>22} {res.expected:>22.15g}  "
              f"{'pass' if res.passed else 'FAIL'}")
    export.write_report(results, "geometry_check.json")
    return EXIT_OK if all(res.passed for res in results) else EXIT_RUNTIME


COMMANDS = {
    "classify": cmd_classify,
    "evolve": cmd_evolve,
    "singularity": cmd_singularity,
    "foliate": cmd_foliate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neckflow",
        description="Free-boundary mean curvature flow of rotationally symmetric disks",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in list(COMMANDS) + ["geometry-check"]:
        sub = subparsers.add_parser(name)
        sub.add_argument("--config", help="key=value run configuration file")
        sub.add_argument("--out", help="output directory")
        sub.add_argument("--stride", type=int, help="record every N steps")
        sub.add_argument("--quiet", action="store_true", help="only log warnings and errors")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.quiet else os.getenv("NECKFLOW_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    try:
        if args.command == "geometry-check":
            out_dir = args.out or os.getenv("NECKFLOW_OUT_DIR", defaults.OUTPUT_DIR)
            return cmd_geometry_check(ExportUtils(out_dir))
        if args.stride is not None and args.stride < 1:
            raise ConfigError(f"--stride must be positive, got {args.stride}")
        config = load_run_config(args.config, out_dir=args.out, stride=args.stride)
        export = ExportUtils(config.out_dir)
        return COMMANDS[args.command](config, export)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except ComparisonFailure as e:
        logger.error(f"Comparison failed: {e}")
        return EXIT_RUNTIME
    except NeckFlowError as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
