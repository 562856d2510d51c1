"""Occupancy-grid worlds, collision queries and simulated lidar."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from rlrrt.env.dynamics import (
    MAX_SPEED,
    MAX_STEER,
    MAX_TURN_RATE,
    STATE_TYPES,
    RobotKind,
    RobotState,
    state_at_rest,
)

logger = logging.getLogger(__name__)

OCCUPIED = "#"
FREE = "."
PGM_THRESHOLD = 127


class WorldError(Exception):
    """Raised on invalid world queries."""


class MapFormatError(ValueError):
    """Raised when a map file does not follow the expected format."""

    def __init__(self, path: Path | str, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


@dataclass(frozen=True, slots=True, eq=False)
class OccupancyGrid:
    """Rasterized world; ``cells[iy, ix]`` is True when occupied, ``iy=0`` at y=0."""

    cells: np.ndarray
    resolution: float

    def __post_init__(self):
        cells = np.array(self.cells, dtype=bool)
        if cells.ndim != 2 or 0 in cells.shape:
            raise ValueError(f"cells must be a non-empty 2D array, got {cells.shape=}")
        if self.resolution <= 0:
            raise ValueError(f"{self.resolution=} must be positive")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "resolution", float(self.resolution))

    @classmethod
    def empty(cls, width_cells: int, height_cells: int, resolution: float):
        return cls(np.zeros((height_cells, width_cells), dtype=bool), resolution)

    @property
    def width_cells(self) -> int:
        return self.cells.shape[1]

    @property
    def height_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def extent(self) -> tuple[float, float]:
        return self.width_cells * self.resolution, self.height_cells * self.resolution

    @property
    def free_cell_count(self) -> int:
        return int(self.cells.size - np.count_nonzero(self.cells))

    def inside(self, x: float, y: float) -> bool:
        width, height = self.extent
        return 0.0 <= x < width and 0.0 <= y < height

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return int(x // self.resolution), int(y // self.resolution)

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        return (ix + 0.5) * self.resolution, (iy + 0.5) * self.resolution

    def with_box(self, x0: float, y0: float, x1: float, y1: float) -> OccupancyGrid:
        """Copy of the grid with every cell overlapping the box marked occupied."""
        res = self.resolution
        ix0 = max(math.floor(min(x0, x1) / res), 0)
        iy0 = max(math.floor(min(y0, y1) / res), 0)
        ix1 = min(math.ceil(max(x0, x1) / res), self.width_cells)
        iy1 = min(math.ceil(max(y0, y1) / res), self.height_cells)

        cells = self.cells.copy()
        cells[iy0:iy1, ix0:ix1] = True
        return OccupancyGrid(cells, res)

    def to_ascii(self, marks: dict[tuple[int, int], str] | None = None) -> str:
        """Rows of the map, top row first, with optional per-cell overrides."""
        marks = marks or {}
        rows = []
        for iy in range(self.height_cells - 1, -1, -1):
            rows.append(
                "".join(
                    marks.get((ix, iy), OCCUPIED if self.cells[iy, ix] else FREE)
                    for ix in range(self.width_cells)
                )
            )
        return "\n".join(rows)


@dataclass(frozen=True, slots=True)
class LidarConfig:
    """Simulated planar lidar."""

    n_beams: int = 64
    max_range: float = 5.0
    noise_sigma: float = 0.1
    field_of_view: float = 2 * math.pi

    def __post_init__(self):
        if self.n_beams < 1:
            raise ValueError(f"{self.n_beams=} must be at least 1")
        if self.max_range <= 0:
            raise ValueError(f"{self.max_range=} must be positive")
        if self.noise_sigma < 0:
            raise ValueError(f"{self.noise_sigma=} cannot be negative")
        if not 0 < self.field_of_view <= 2 * math.pi:
            raise ValueError(f"{self.field_of_view=} must be in (0, 2pi]")

    def beam_offsets(self) -> np.ndarray:
        """Beam angles in the robot frame, beam 0 on the heading, counterclockwise."""
        if math.isclose(self.field_of_view, 2 * math.pi):
            return np.arange(self.n_beams) * (2 * math.pi / self.n_beams)
        if self.n_beams == 1:
            return np.zeros(1)
        return np.linspace(-self.field_of_view / 2, self.field_of_view / 2, self.n_beams)


@dataclass(frozen=True, slots=True)
class GoalSpec:
    """Goal position with acceptance radius d_G."""

    position: tuple[float, float]
    radius: float = 0.5

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"{self.radius=} must be positive")
        x, y = self.position
        object.__setattr__(self, "position", (float(x), float(y)))

    def distance(self, x: float, y: float) -> float:
        return math.hypot(self.position[0] - x, self.position[1] - y)

    def contains(self, x: float, y: float) -> bool:
        return self.distance(x, y) < self.radius


def _parse_header(path: Path, lines: list[str], idx: int, key: str, kind: type):
    if idx >= len(lines):
        raise MapFormatError(path, idx + 1, f"missing '{key}' header")

    parts = lines[idx].split()
    if len(parts) != 2 or parts[0] != key:
        raise MapFormatError(path, idx + 1, f"expected '{key} <value>'")

    try:
        return kind(parts[1])
    except ValueError as exc:
        raise MapFormatError(path, idx + 1, f"invalid {key} {parts[1]!r}") from exc


def _load_ascii(path: Path) -> OccupancyGrid:
    lines = path.read_text(encoding="utf-8").splitlines()
    while lines and not lines[-1].strip():
        lines.pop()

    width = _parse_header(path, lines, 0, "width", int)
    height = _parse_header(path, lines, 1, "height", int)
    resolution = _parse_header(path, lines, 2, "resolution", float)

    if width < 1 or height < 1:
        raise MapFormatError(path, 1, f"{width=} and {height=} must be positive")
    if resolution <= 0:
        raise MapFormatError(path, 3, f"{resolution=} must be positive")

    rows = lines[3:]
    if len(rows) != height:
        raise MapFormatError(path, 4 + len(rows), f"expected {height} rows, got {len(rows)}")

    cells = np.zeros((height, width), dtype=bool)
    for i, row in enumerate(rows):
        lineno = i + 4
        if len(row) != width:
            raise MapFormatError(path, lineno, f"expected {width} columns, got {len(row)}")

        for col, symbol in enumerate(row):
            if symbol == OCCUPIED:
                cells[height - 1 - i, col] = True
            elif symbol != FREE:
                raise MapFormatError(
                    path, lineno, f"unknown cell symbol {symbol!r} at offset {col}"
                )

    return OccupancyGrid(cells, resolution)


def _load_pgm(path: Path) -> OccupancyGrid:
    data = path.read_bytes()

    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise MapFormatError(path, 1, "truncated PGM header")
        tokens.append(data[start:pos])
    pos += 1

    if tokens[0] != b"P5":
        raise MapFormatError(path, 1, f"unsupported magic {tokens[0]!r}")

    width, height, maxval = (int(t) for t in tokens[1:])
    if maxval > 255:
        raise MapFormatError(path, 1, f"{maxval=} above 255 is not supported")

    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    if pixels.size != width * height:
        raise MapFormatError(path, 1, "pixel data shorter than header dimensions")

    meta = path.with_suffix(".meta")
    if not meta.exists():
        raise MapFormatError(meta, 1, "missing resolution sidecar")
    meta_lines = meta.read_text(encoding="utf-8").splitlines()
    resolution = _parse_header(meta, meta_lines, 0, "resolution", float)

    # top row first in the image
    cells = pixels.reshape(height, width)[::-1] < PGM_THRESHOLD
    return OccupancyGrid(cells, resolution)


def load_map(path: Path | str) -> OccupancyGrid:
    """Load an ASCII map, or a PGM P5 image with a ``.meta`` resolution sidecar."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Map not found: {path}")

    grid = _load_pgm(path) if path.suffix == ".pgm" else _load_ascii(path)

    logger.debug(
        "Loaded map %s: %dx%d cells at %.3f m, %d free",
        path,
        grid.width_cells,
        grid.height_cells,
        grid.resolution,
        grid.free_cell_count,
    )
    return grid


def point_free(grid: OccupancyGrid, p: tuple[float, float], robot_radius: float) -> bool:
    """True iff a disc of ``robot_radius`` at ``p`` lies in the map and hits no occupied cell."""
    x, y = p
    r = robot_radius
    width, height = grid.extent

    if x - r < 0 or y - r < 0 or x + r > width or y + r > height:
        return False

    res = grid.resolution
    ix0 = max(math.floor((x - r) / res), 0)
    iy0 = max(math.floor((y - r) / res), 0)
    ix1 = min(math.floor((x + r) / res), grid.width_cells - 1)
    iy1 = min(math.floor((y + r) / res), grid.height_cells - 1)

    block = grid.cells[iy0 : iy1 + 1, ix0 : ix1 + 1]
    if not block.any():
        return True

    iys, ixs = np.nonzero(block)
    ixs = ixs + ix0
    iys = iys + iy0

    # distance from p to the closest point of each occupied cell
    dx = np.maximum(np.maximum(ixs * res - x, 0.0), x - (ixs + 1) * res)
    dy = np.maximum(np.maximum(iys * res - y, 0.0), y - (iys + 1) * res)
    return not bool(np.any(dx * dx + dy * dy <= r * r))


def raycast(
    grid: OccupancyGrid, origin: tuple[float, float], angle: float, max_range: float
) -> float:
    """Distance to the first occupied cell along a ray, capped at ``max_range``.

    Cells are traversed with a DDA walk; leaving the map counts as a hit.
    """
    x0, y0 = origin
    if not grid.inside(x0, y0):
        raise WorldError(f"Ray origin {origin} is outside the map")

    ix, iy = grid.cell_of(x0, y0)
    if grid.cells[iy, ix]:
        return 0.0

    res = grid.resolution
    dx, dy = math.cos(angle), math.sin(angle)

    if dx > 0:
        step_x, t_max_x, t_delta_x = 1, ((ix + 1) * res - x0) / dx, res / dx
    elif dx < 0:
        step_x, t_max_x, t_delta_x = -1, (ix * res - x0) / dx, -res / dx
    else:
        step_x, t_max_x, t_delta_x = 0, math.inf, math.inf

    if dy > 0:
        step_y, t_max_y, t_delta_y = 1, ((iy + 1) * res - y0) / dy, res / dy
    elif dy < 0:
        step_y, t_max_y, t_delta_y = -1, (iy * res - y0) / dy, -res / dy
    else:
        step_y, t_max_y, t_delta_y = 0, math.inf, math.inf

    width, height = grid.width_cells, grid.height_cells
    cells = grid.cells

    while True:
        if t_max_x < t_max_y:
            t = t_max_x
            ix += step_x
            t_max_x += t_delta_x
        else:
            t = t_max_y
            iy += step_y
            t_max_y += t_delta_y

        if t >= max_range:
            return max_range
        if not (0 <= ix < width and 0 <= iy < height) or cells[iy, ix]:
            return t


def lidar_scan(
    grid: OccupancyGrid,
    pose: tuple[float, float, float],
    cfg: LidarConfig,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Noisy ranges for ``cfg.n_beams`` beams around ``pose = (x, y, theta)``."""
    x, y, theta = pose
    ranges = np.array(
        [raycast(grid, (x, y), theta + offset, cfg.max_range) for offset in cfg.beam_offsets()]
    )

    if cfg.noise_sigma > 0:
        if rng is None:
            raise WorldError("A random generator is required for noisy scans")
        ranges = np.clip(ranges + rng.normal(0.0, cfg.noise_sigma, size=ranges.size), 0.0, cfg.max_range)

    return ranges


def state_pose(state: RobotState) -> tuple[float, float, float]:
    return state.x, state.y, state.theta


def sample_velocity(kind: RobotKind, rng: np.random.Generator) -> dict[str, float]:
    """Velocity fields drawn uniformly within the robot's bounds."""
    if kind is RobotKind.DIFF_DRIVE:
        return {
            "v": rng.uniform(-MAX_SPEED, MAX_SPEED),
            "omega": rng.uniform(-MAX_TURN_RATE, MAX_TURN_RATE),
        }
    if kind is RobotKind.CAR:
        return {"v": rng.uniform(0.0, MAX_SPEED), "steer": rng.uniform(-MAX_STEER, MAX_STEER)}

    while True:
        xdot, ydot = rng.uniform(-MAX_SPEED, MAX_SPEED, size=2)
        if xdot * xdot + ydot * ydot <= MAX_SPEED * MAX_SPEED:
            return {"xdot": float(xdot), "ydot": float(ydot)}


def sample_free_state(
    grid: OccupancyGrid,
    robot_kind: RobotKind,
    rng: np.random.Generator,
    goal: GoalSpec | None = None,
    p_goal_bias: float = 0.0,
    robot_radius: float = 0.3,
    max_attempts: int = 100_000,
) -> RobotState:
    """Goal-biased uniform sample over collision-free states."""
    if grid.free_cell_count == 0:
        raise WorldError("Map has no free cell")

    if rng.random() < p_goal_bias and goal is not None:
        theta = rng.uniform(-math.pi, math.pi)
        return state_at_rest(robot_kind, *goal.position, theta=theta)

    width, height = grid.extent
    for _ in range(max_attempts):
        x = rng.uniform(0.0, width)
        y = rng.uniform(0.0, height)
        if point_free(grid, (x, y), robot_radius):
            theta = rng.uniform(-math.pi, math.pi)
            return STATE_TYPES[robot_kind](
                x=x, y=y, theta=theta, **sample_velocity(robot_kind, rng)
            )

    raise WorldError(f"No free state found in {max_attempts} attempts ({robot_radius=})")
