import os
import unittest
from pathlib import Path

from rlrrt.env.dynamics import RobotKind
from rlrrt.env.world import LidarConfig, OccupancyGrid

SLOW = unittest.skipUnless(os.environ.get("RLRRT_SLOW") == "1", "set RLRRT_SLOW=1")

# 20 x 20 m
EMPTY = OccupancyGrid.empty(200, 200, 0.1)

# vertical wall from x=10.0 to x=10.2
WALL = EMPTY.with_box(10.0, 0.0, 10.2, 20.0)

# closed room from (12, 12) to (18, 18), walls 0.2 m thick
SEALED_ROOM = (
    EMPTY.with_box(12.0, 12.0, 18.0, 12.2)
    .with_box(12.0, 17.8, 18.0, 18.0)
    .with_box(12.0, 12.0, 12.2, 18.0)
    .with_box(17.8, 12.0, 18.0, 18.0)
)
ROOM_CENTER = (15.0, 15.0)

SMALL_LIDAR = LidarConfig(n_beams=8)

PARAM_SETS = [
    {
        "robot_kind": RobotKind.DIFF_DRIVE,
        "lidar": LidarConfig(n_beams=16),
    },
    {
        "robot_kind": RobotKind.CAR,
        "lidar": LidarConfig(n_beams=16, noise_sigma=0.0),
    },
    {
        "robot_kind": RobotKind.ASTEROID,
        "lidar": LidarConfig(n_beams=16, field_of_view=3.0),
    },
]


def map_text(grid: OccupancyGrid) -> str:
    return (
        f"width {grid.width_cells}\n"
        f"height {grid.height_cells}\n"
        f"resolution {grid.resolution}\n"
        f"{grid.to_ascii()}\n"
    )


def write_map(grid: OccupancyGrid, path: Path) -> Path:
    path.write_text(map_text(grid), encoding="utf-8")
    return path
