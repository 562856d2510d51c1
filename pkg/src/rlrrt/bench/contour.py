"""TTR fields over free positions toward a fixed goal."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from rlrrt.env.dynamics import RobotKind, state_at_rest
from rlrrt.env.world import LidarConfig, OccupancyGrid, WorldError, point_free
from rlrrt.estimator import static_stack

logger = logging.getLogger(__name__)


@dataclass(slots=True, eq=False)
class TTRField:
    """``values[iy, ix]`` at ``(xs[ix], ys[iy])``; NaN where the robot does not fit."""

    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray
    goal: tuple[float, float]
    threshold: float

    @property
    def free(self) -> np.ndarray:
        return ~np.isnan(self.values)

    @property
    def unreachable(self) -> np.ndarray:
        return self.free & (np.nan_to_num(self.values, nan=0.0) > self.threshold)

    def value_at(self, x: float, y: float) -> float:
        ix = int(np.argmin(np.abs(self.xs - x)))
        iy = int(np.argmin(np.abs(self.ys - y)))
        return float(self.values[iy, ix])

    def to_csv(self, path: Path | str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "y", "ttr", "unreachable"])
            for iy, y in enumerate(self.ys):
                for ix, x in enumerate(self.xs):
                    if self.free[iy, ix]:
                        writer.writerow(
                            [x, y, self.values[iy, ix], bool(self.unreachable[iy, ix])]
                        )
        return path


def ttr_contour(
    model,
    grid: OccupancyGrid,
    goal: tuple[float, float],
    grid_step: float,
    robot_kind: RobotKind = RobotKind.DIFF_DRIVE,
    lidar: LidarConfig | None = None,
    robot_radius: float = 0.3,
    theta: float = 0.0,
) -> TTRField:
    """Evaluate ``model.time_to_reach`` from every free lattice point, at rest, facing ``theta``."""
    lidar = lidar or LidarConfig()
    if not point_free(grid, goal, robot_radius):
        logger.error("Contour goal %s is in collision", goal)
        raise WorldError(f"Goal {goal} is in collision")
    if grid_step <= 0:
        raise ValueError(f"{grid_step=} must be positive")

    width, height = grid.extent
    xs = np.arange(grid_step / 2, width, grid_step)
    ys = np.arange(grid_step / 2, height, grid_step)
    values = np.full((len(ys), len(xs)), np.nan)
    goals = np.array([goal])

    for iy, y in enumerate(ys):
        for ix, x in enumerate(xs):
            if not point_free(grid, (x, y), robot_radius):
                continue
            state = state_at_rest(robot_kind, float(x), float(y), theta)
            stack = static_stack(grid, state, lidar)
            values[iy, ix] = model.time_to_reach(state, stack, goals)[0]

    logger.info("Evaluated TTR at %d free points", int(np.sum(~np.isnan(values))))
    return TTRField(xs, ys, values, tuple(goal), model.ttr_threshold)


def paired_values(predicted: TTRField, truth: TTRField) -> tuple[np.ndarray, np.ndarray]:
    """Predicted and true TTR at the points both fields evaluated."""
    if predicted.values.shape != truth.values.shape:
        raise ValueError("Fields are on different lattices")
    both = predicted.free & truth.free
    return predicted.values[both], truth.values[both]
