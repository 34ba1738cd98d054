import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Dict, Sequence

from backend.solver import FlowState, RunResult, StepControl, StopThresholds, run
from config import flow_defaults as defaults

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FlowJob:
    state: FlowState
    control: StepControl = field(default_factory=StepControl)
    thresholds: StopThresholds = field(default_factory=StopThresholds)
    stride: int = defaults.RECORD_STRIDE
    sample_times: Sequence[float] = ()


class SweepEngine:
    """Manages concurrent runs of independent flows on a shared profile."""

    def __init__(self, max_workers: int = defaults.MAX_WORKERS):
        self.max_workers = max(1, max_workers)

    def run_all(self, jobs: Dict[str, FlowJob]) -> Dict[str, RunResult]:
        """Run every job; a failing job aborts the sweep after the others finish."""
        if not jobs:
            logger.warning("No flows to run")
            return {}

        logger.info(f"Starting {len(jobs)} flows with {self.max_workers} workers")
        results: Dict[str, RunResult] = {}
        failures: Dict[str, Exception] = {}

        with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
            futures = {
                executor.submit(self._run_job, job): name
                for name, job in jobs.items()
            }

            for future in as_completed(futures):
                name = futures[future]
                try:
                    result = future.result()
                    results[name] = result
                    logger.info(f"Flow {name} finished: {result.event.kind.value} "
                                f"at t={result.event.t_event:.6g}")
                except Exception as e:
                    logger.error(f"Flow {name} failed: {e}")
                    failures[name] = e

        if failures:
            raise next(iter(failures.values()))
        logger.info("All flows completed")
        return results

    def _run_job(self, job: FlowJob) -> RunResult:
        return run(job.state, job.control, job.thresholds,
                   stride=job.stride, sample_times=job.sample_times)
