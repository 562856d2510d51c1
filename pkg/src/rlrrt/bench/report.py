"""Critic value against estimated TTR along rollouts."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from rlrrt.policy.base import PolicyError
from rlrrt.policy.rollout import Trajectory

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class CriticSeries:
    """One trajectory's per-step estimated TTR next to the negated critic value."""

    times: np.ndarray
    ttr: np.ndarray
    neg_value: np.ndarray
    reached: bool

    def correlation(self) -> float:
        if len(self.ttr) < 2 or np.std(self.ttr) == 0 or np.std(self.neg_value) == 0:
            return float("nan")
        return float(np.corrcoef(self.ttr, self.neg_value)[0, 1])


def critic_vs_ttr_report(policy, estimator, trajectories: list[Trajectory]) -> list[CriticSeries]:
    if not callable(getattr(policy, "value", None)):
        logger.error("Policy %s has no critic", getattr(policy, "kind", type(policy).__name__))
        raise PolicyError("critic_vs_ttr_report needs a policy with a critic")

    report = []
    for traj in trajectories:
        if not traj.observations:
            logger.warning("Skipping empty trajectory")
            continue
        vectors = np.array([o.vector for o in traj.observations])
        ttr = estimator.predict_batch(vectors)
        neg_value = -np.array([policy.value(o) for o in traj.observations])
        report.append(
            CriticSeries(np.array(traj.times), np.asarray(ttr), neg_value, traj.reached)
        )

    logger.info("Compared critic and TTR on %d trajectories", len(report))
    return report


def write_report(report: list[CriticSeries], path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trajectory", "t", "ttr", "neg_value", "reached"])
        for i, series in enumerate(report):
            for t, ttr, v in zip(series.times, series.ttr, series.neg_value):
                writer.writerow([i, t, ttr, v, series.reached])
    return path
