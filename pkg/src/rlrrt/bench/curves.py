"""Success-rate curves, finish-time summaries and P2P success by goal distance."""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from rlrrt.bench.experiment import TrialRecord
from rlrrt.env.dynamics import DynamicsParams
from rlrrt.env.env import EpisodeConfig
from rlrrt.env.tabulate import to_markdown
from rlrrt.env.world import LidarConfig, OccupancyGrid
from rlrrt.policy.base import LocalPlannerPolicy
from rlrrt.policy.rollout import count_reached

logger = logging.getLogger(__name__)


def success_curve(
    records: list[TrialRecord], budgets
) -> dict[str, list[float]]:
    """Per planner, the fraction of trials solved within each budget."""
    by_planner: dict[str, list[TrialRecord]] = defaultdict(list)
    for record in records:
        by_planner[record.planner].append(record)

    curves = {}
    for planner, group in by_planner.items():
        times = [r.time_to_first_solution for r in group if r.success]
        curves[planner] = [
            sum(t <= budget for t in times) / len(group) for budget in budgets
        ]
    return curves


def curve_table(curves: dict[str, list[float]], budgets) -> str:
    rows = [
        {"planner": planner, **{f"{b:g}": rate for b, rate in zip(budgets, rates)}}
        for planner, rates in curves.items()
    ]
    return to_markdown(rows, float_format=".2f")


def finish_time_summary(records: list[TrialRecord]) -> list[dict]:
    """Success count and finish-time statistics per planner."""
    by_planner: dict[str, list[TrialRecord]] = defaultdict(list)
    for record in records:
        by_planner[record.planner].append(record)

    rows = []
    for planner, group in by_planner.items():
        times = np.array([r.finish_time for r in group if r.success], dtype=float)
        rows.append(
            {
                "planner": planner,
                "trials": len(group),
                "solved": len(times),
                "median_finish": float(np.median(times)) if len(times) else math.nan,
                "mean_finish": float(np.mean(times)) if len(times) else math.nan,
                "max_finish": float(np.max(times)) if len(times) else math.nan,
            }
        )
    return rows


@dataclass(frozen=True, slots=True)
class DistanceBin:
    low: float
    high: float
    trials: int
    successes: int

    @property
    def rate(self) -> float:
        return self.successes / self.trials if self.trials else math.nan


def p2p_success_by_distance(
    policy: LocalPlannerPolicy,
    grid: OccupancyGrid,
    bins,
    trials: int,
    rng: np.random.Generator,
    cfg: EpisodeConfig | None = None,
    lidar: LidarConfig | None = None,
    dynamics: DynamicsParams | None = None,
) -> list[DistanceBin]:
    """Rollout success fraction for start/goal pairs in each distance bin.

    ``bins`` are bin edges, e.g. ``(0, 0.5, 5, 10)`` gives three bins.
    """
    results = []
    for low, high in zip(bins[:-1], bins[1:]):
        successes, attempted = count_reached(
            policy, grid, low, high, trials, rng, cfg, lidar, dynamics
        )
        results.append(DistanceBin(float(low), float(high), attempted, successes))
        logger.info("Bin [%.1f, %.1f): %d/%d reached", low, high, successes, attempted)
    return results


def distance_table(bins: list[DistanceBin]) -> str:
    return to_markdown(
        [
            {
                "distance": f"[{b.low:g}, {b.high:g})",
                "trials": b.trials,
                "reached": b.successes,
                "rate": b.rate,
            }
            for b in bins
        ],
        float_format=".2f",
    )
