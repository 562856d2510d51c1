"""Search tree of robot states with a planar nearest-neighbor index."""

from __future__ import annotations

import json
import logging
from collections.abc import Iterator
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from rlrrt.env.dynamics import STATE_FIELDS, RobotAction, RobotState
from rlrrt.env.observation import FrameStack

logger = logging.getLogger(__name__)

REBUILD_EVERY = 64


class TreeError(Exception):
    """Raised when the tree structure is inconsistent."""


@dataclass(slots=True, eq=False)
class Node:
    """Tree vertex; ``action_log`` and ``path`` cover the motion from the parent."""

    id: int
    state: RobotState
    parent: int | None = None
    target: tuple[float, float] | None = None
    arrival_time: float = 0.0
    action_log: tuple[RobotAction, ...] = ()
    path: tuple[tuple[float, float], ...] = ()
    frames: FrameStack | None = None
    n_children: int = 0
    active: bool = True
    removed: bool = False

    @property
    def position(self) -> tuple[float, float]:
        return self.state.x, self.state.y

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "parent": self.parent,
            "state": dict(zip(STATE_FIELDS[self.state.kind], self.state.as_array().tolist())),
            "arrival_time": self.arrival_time,
            "target": list(self.target) if self.target is not None else None,
            "actions": [a.as_array().tolist() for a in self.action_log],
            "path": [list(p) for p in self.path],
        }


class Tree:
    """Nodes indexed by id; the k-d tree is rebuilt periodically and new nodes are scanned."""

    def __init__(self, root_state: RobotState, frames: FrameStack | None = None):
        self.nodes: list[Node] = [Node(0, root_state, frames=frames)]
        self._xy: list[tuple[float, float]] = [(root_state.x, root_state.y)]
        self._index: cKDTree | None = None
        self._indexed = 0

    def __len__(self):
        return len(self.nodes)

    def __iter__(self) -> Iterator[Node]:
        return iter(self.nodes)

    def __getitem__(self, node_id: int) -> Node:
        return self.nodes[node_id]

    @property
    def root(self) -> Node:
        return self.nodes[0]

    @property
    def robot_kind(self):
        return self.root.state.kind

    def add(
        self,
        state: RobotState,
        parent: int,
        target: tuple[float, float] | None = None,
        arrival_time: float = 0.0,
        action_log: tuple[RobotAction, ...] = (),
        path: tuple[tuple[float, float], ...] = (),
        frames: FrameStack | None = None,
    ) -> Node:
        if not 0 <= parent < len(self.nodes) or self.nodes[parent].removed:
            raise TreeError(f"Unknown parent {parent}")
        if state.kind is not self.robot_kind:
            raise TreeError(f"{state.kind=} does not match {self.robot_kind=}")

        node = Node(
            len(self.nodes),
            state,
            parent,
            target,
            arrival_time,
            tuple(action_log),
            tuple(path),
            frames,
        )
        self.nodes.append(node)
        self.nodes[parent].n_children += 1
        self._xy.append((state.x, state.y))

        if len(self.nodes) - self._indexed >= REBUILD_EVERY:
            self._rebuild()
        return node

    def _rebuild(self):
        self._index = cKDTree(np.array(self._xy))
        self._indexed = len(self._xy)
        logger.debug("Rebuilt k-d index over %d nodes", self._indexed)

    def positions(self) -> np.ndarray:
        return np.array(self._xy)

    def _usable(self, node_id: int, active_only: bool) -> bool:
        node = self.nodes[node_id]
        return not node.removed and (node.active or not active_only)

    def k_nearest(
        self, x: float, y: float, k: int, active_only: bool = False
    ) -> list[int]:
        """Ids of the ``k`` closest nodes, ordered by distance then id."""
        if k < 1:
            raise ValueError(f"{k=} must be at least 1")

        if active_only or self._index is None or k >= self._indexed:
            ids = np.arange(len(self._xy))
        else:
            _, idx = self._index.query((x, y), k=k)
            ids = np.concatenate([np.atleast_1d(idx), np.arange(self._indexed, len(self._xy))])

        ids = [int(i) for i in ids if self._usable(int(i), active_only)]
        xy = self.positions()
        dist = np.hypot(xy[ids, 0] - x, xy[ids, 1] - y) if ids else np.zeros(0)
        order = sorted(range(len(ids)), key=lambda i: (dist[i], ids[i]))
        return [ids[i] for i in order[:k]]

    def within_radius(
        self, x: float, y: float, radius: float, active_only: bool = False
    ) -> list[int]:
        ids = list(range(self._indexed, len(self._xy)))
        if self._index is not None:
            ids += self._index.query_ball_point((x, y), radius)

        xy = self.positions()
        return sorted(
            i
            for i in set(ids)
            if self._usable(i, active_only) and np.hypot(xy[i, 0] - x, xy[i, 1] - y) <= radius
        )

    def deactivate(self, node_id: int):
        self.nodes[node_id].active = False

    def remove_leaf(self, node_id: int):
        node = self.nodes[node_id]
        if node.n_children or node.parent is None:
            raise TreeError(f"Node {node_id} is not a removable leaf")
        node.removed = True
        node.active = False
        self.nodes[node.parent].n_children -= 1

    def path_to(self, node_id: int) -> list[Node]:
        """Nodes from the root to ``node_id``."""
        chain = []
        current: int | None = node_id
        while current is not None:
            node = self.nodes[current]
            chain.append(node)
            current = node.parent
            if len(chain) > len(self.nodes):
                raise TreeError("Parent links contain a cycle")
        return chain[::-1]

    def edges(self) -> list[tuple[int, int]]:
        return [
            (node.parent, node.id)
            for node in self.nodes
            if node.parent is not None and not node.removed
        ]

    def check_integrity(self):
        """One root, parents precede children, child counts agree."""
        if self.root.parent is not None or self.root.arrival_time != 0.0:
            raise TreeError("Root must have no parent and zero arrival time")

        counts = [0] * len(self.nodes)
        for node in self.nodes[1:]:
            if node.parent is None:
                raise TreeError(f"Node {node.id} has no parent")
            if not 0 <= node.parent < node.id:
                raise TreeError(f"Node {node.id} has parent {node.parent}")
            if not node.removed:
                if self.nodes[node.parent].removed:
                    raise TreeError(f"Node {node.id} hangs off removed {node.parent}")
                counts[node.parent] += 1

        for node, count in zip(self.nodes, counts):
            if node.n_children != count:
                raise TreeError(f"Node {node.id} counts {node.n_children} children, has {count}")

    def to_dict(self) -> dict:
        return {
            "robot_kind": self.robot_kind.value,
            "nodes": [node.to_dict() for node in self.nodes if not node.removed],
            "edges": [list(e) for e in self.edges()],
        }

    def dump(self, path: Path | str) -> Path:
        """Write nodes and edges as JSON for rendering."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=1))
        return path
