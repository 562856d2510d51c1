"""SVG figures of maps, search trees and plans."""

from __future__ import annotations

import logging
from pathlib import Path

import matplotlib
from matplotlib.collections import LineCollection
from matplotlib.figure import Figure

from rlrrt.env.world import OccupancyGrid
from rlrrt.planner.plan import MotionPlan
from rlrrt.planner.tree import Tree

logger = logging.getLogger(__name__)

TREE_COLORS = ("#e0b000", "#3070c0", "#40a040", "#c04040", "#8050b0")
PLAN_COLORS = ("#d04000", "#103080", "#206020", "#800000", "#402060")

SVG_RC = {"svg.hashsalt": "rlrrt", "svg.fonttype": "none"}


def tree_segments(tree: Tree | dict) -> list[list[tuple[float, float]]]:
    """One polyline per edge, from the parent through every waypoint to the child."""
    nodes = tree.to_dict()["nodes"] if isinstance(tree, Tree) else tree["nodes"]
    by_id = {node["id"]: node for node in nodes}

    segments = []
    for node in nodes:
        if node["parent"] is None or node["parent"] not in by_id:
            continue
        parent = by_id[node["parent"]]["state"]
        line = [(parent["x"], parent["y"]), *(tuple(p) for p in node["path"])]
        child = (node["state"]["x"], node["state"]["y"])
        if line[-1] != child:
            line.append(child)
        segments.append(line)
    return segments


def plan_polyline(plan: MotionPlan | dict) -> list[tuple[float, float]]:
    if isinstance(plan, MotionPlan):
        return plan.positions()
    return [tuple(p) for p in plan["positions"]]


def render_svg(
    grid: OccupancyGrid,
    trees: dict[str, Tree | dict] | None,
    plans: dict[str, MotionPlan | dict] | None,
    out_path: Path | str,
    start: tuple[float, float] | None = None,
    goal: tuple[float, float] | None = None,
    title: str | None = None,
) -> Path:
    """Obstacles, trees in per-planner colors, plan polylines and start/goal markers."""
    out_path = Path(out_path)
    width, height = grid.extent

    with matplotlib.rc_context(SVG_RC):
        fig = Figure(figsize=(6.0, 6.0 * height / width))
        ax = fig.add_subplot()
        ax.imshow(
            grid.cells,
            origin="lower",
            extent=(0.0, width, 0.0, height),
            cmap="Greys",
            vmin=0,
            vmax=1,
            interpolation="nearest",
        )

        for i, (name, tree) in enumerate((trees or {}).items()):
            segments = tree_segments(tree)
            if segments:
                ax.add_collection(
                    LineCollection(
                        segments,
                        colors=TREE_COLORS[i % len(TREE_COLORS)],
                        linewidths=0.6,
                        linestyles="solid" if i % 2 == 0 else "dashed",
                        label=f"{name} tree",
                    )
                )

        for i, (name, plan) in enumerate((plans or {}).items()):
            xs, ys = zip(*plan_polyline(plan))
            ax.plot(xs, ys, color=PLAN_COLORS[i % len(PLAN_COLORS)], linewidth=2.0, label=name)

        if start is not None:
            ax.plot(*start, marker="o", color="black", markersize=6, linestyle="none", label="start")
        if goal is not None:
            ax.plot(*goal, marker="*", color="red", markersize=10, linestyle="none", label="goal")

        ax.set_xlim(0.0, width)
        ax.set_ylim(0.0, height)
        ax.set_aspect("equal")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        if title:
            ax.set_title(title)
        if trees or plans or start is not None or goal is not None:
            ax.legend(loc="upper right", fontsize="small")

        out_path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(out_path, format="svg", metadata={"Date": None})

    logger.debug("Rendered %s", out_path)
    return out_path
