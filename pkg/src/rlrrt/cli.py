"""``rlrrt`` command line: training, data collection, planning and benchmarks."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from rlrrt.bench.contour import ttr_contour
from rlrrt.bench.curves import (
    curve_table,
    distance_table,
    finish_time_summary,
    p2p_success_by_distance,
    success_curve,
)
from rlrrt.bench.experiment import (
    PLANNERS,
    ArtifactError,
    resolve_policy,
    run_experiment,
    sample_query,
)
from rlrrt.bench.render import render_svg
from rlrrt.bench.report import critic_vs_ttr_report, write_report
from rlrrt.config import ConfigError, Settings
from rlrrt.env.dynamics import RobotKind, state_at_rest
from rlrrt.env.env import sample_goal_near
from rlrrt.env.tabulate import to_markdown
from rlrrt.env.world import WorldError, load_map, sample_free_state
from rlrrt.estimator import (
    HORIZONS,
    DatasetError,
    ReachabilityEstimator,
    RolloutOracle,
    TTRConfig,
    TTRDataset,
    collect_training_data,
    mean_signed_error,
    train_estimator,
    train_ttr_only_estimator,
)
from rlrrt.planner.plan import PlannerError, verify_plan
from rlrrt.planner.rrt import rl_rrt, rl_rrt_euclidean, rrt_steer_plan
from rlrrt.planner.sst import sst_plan
from rlrrt.policy.actor_critic import (
    UndertrainedPolicyError,
    dump_training_curve,
    train_actor_critic,
)
from rlrrt.policy.base import PolicyError
from rlrrt.policy.rollout import rollout

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
TRAIN_MAP = "maps/train.map"
EVAL_MAP = "maps/office.map"


def setup_logging(level: str, log_file: Path | None):
    handlers: list[logging.Handler] = [logging.StreamHandler()]
    if log_file is not None:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file, mode="w"))
    logging.basicConfig(level=level, format=LOG_FORMAT, handlers=handlers, force=True)


def floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def named_path(text: str) -> tuple[str, Path]:
    if "=" in text:
        name, path = text.split("=", 1)
        return name, Path(path)
    return Path(text).stem, Path(text)


### Subcommands ###


def cmd_train_policy(args, settings: Settings):
    kind = RobotKind(args.robot)
    grid = load_map(args.map)
    cfg = settings.build("actor_critic", seed=args.seed, episodes=args.episodes)

    try:
        policy = train_actor_critic(
            kind,
            grid,
            settings.reward(kind),
            cfg,
            settings.build("episode"),
            settings.build("lidar"),
            settings.build("dynamics"),
        )
    except UndertrainedPolicyError as exc:
        exc.policy.save(args.out)
        dump_training_curve(exc.policy, args.out / "training_curve.json")
        raise

    policy.save(args.out)
    dump_training_curve(policy, args.out / "training_curve.json")


def cmd_collect_ttr(args, settings: Settings):
    kind = RobotKind(args.robot)
    grid = load_map(args.map)
    lidar = settings.build("lidar")
    policy = resolve_policy(args.policy, kind, lidar, args.seed)
    cfg = TTRConfig.for_robot(kind, **settings.section("ttr", n_episodes=args.episodes))

    dataset = collect_training_data(
        policy, grid, cfg, np.random.default_rng(args.seed), lidar, settings.build("dynamics")
    )
    dataset.save(args.out)


def cmd_train_estimator(args, settings: Settings):
    dataset = TTRDataset.load(args.dataset)
    cfg = settings.build("train", seed=args.seed, epochs=args.epochs)

    trainer = train_ttr_only_estimator if args.ttr_only else train_estimator
    est = trainer(dataset, cfg, holdout=args.holdout)
    est.save(args.out)

    if est.metrics is not None:
        print(est.metrics.to_markdown())
    print(f"\nMean signed error: {mean_signed_error(est, dataset):+.3f} s")


def cmd_plan(args, settings: Settings):
    kind = RobotKind(args.robot)
    grid = load_map(args.map)
    lidar = settings.build("lidar")
    dynamics = settings.build("dynamics")
    rng = np.random.default_rng(args.seed)

    query = settings.build(
        "experiment",
        map_path=str(args.map),
        robot_kind=kind,
        start=args.start,
        goal=args.goal,
        seed_base=args.seed,
    )
    start, goal = sample_query(grid, query, rng, dynamics.robot_radius)
    logger.info("Planning from (%.2f, %.2f) to %s", start.x, start.y, goal.position)

    if args.planner == "sst":
        cfg = settings.build(
            "sst",
            seed=args.seed,
            time_budget=args.budget,
            max_iterations=args.iterations,
            goal_radius=goal.radius,
        )
        result = sst_plan(grid, start, goal, kind, cfg, rng, dynamics)
    else:
        estimator = None
        if args.planner == "rl_rrt":
            if args.estimator is None:
                raise ArtifactError("rl_rrt needs --estimator")
            estimator = ReachabilityEstimator.load(args.estimator)

        horizon = estimator.t_horizon if estimator is not None else HORIZONS[kind]
        cfg = settings.build(
            "planner",
            ttr_threshold=settings.get("planner", "ttr_threshold", horizon),
            t_max_extend=settings.get("planner", "t_max_extend", horizon),
            seed=args.seed,
            time_budget=args.budget,
            max_iterations=args.iterations,
            goal_radius=goal.radius,
        )
        match args.planner:
            case "rl_rrt":
                policy = resolve_policy(args.policy, kind, lidar, args.seed)
                result = rl_rrt(grid, start, goal, policy, estimator, cfg, rng, lidar, dynamics)
            case "rl_rrt_e":
                policy = resolve_policy(args.policy, kind, lidar, args.seed)
                result = rl_rrt_euclidean(grid, start, goal, policy, cfg, rng, lidar, dynamics)
            case "rrt_dw" | "rrt_s":
                result = rrt_steer_plan(
                    grid, start, goal, args.planner == "rrt_dw", cfg, rng, lidar, dynamics
                )

    result.to_json(args.out)
    if args.tree is not None and result.tree is not None:
        result.tree.dump(args.tree)

    if result.success:
        check = verify_plan(result, grid, dynamics)
        logger.info(
            "%s: finish time %.1f s, %d nodes, replay error %.2e",
            result.planner,
            result.finish_time,
            result.stats.tree_size,
            check.max_error,
        )
    else:
        logger.info("%s: %s after %d samples", result.planner, result.reason, result.stats.samples)

    if args.svg is not None:
        render_svg(
            grid,
            {result.planner: result.tree} if result.tree is not None else None,
            {result.planner: result} if result.success else None,
            args.svg,
            start=(start.x, start.y),
            goal=goal.position,
        )


def cmd_bench(args, settings: Settings):
    cfg = settings.build(
        "experiment",
        map_path=str(args.map) if args.map is not None else None,
        robot_kind=args.robot,
        planners=tuple(args.planners) if args.planners else None,
        trials=args.trials,
        budgets=args.budgets,
        budget_mode=args.budget_mode,
        policy=args.policy,
        estimator_path=args.estimator,
        seed_base=args.seed,
    )
    records = run_experiment(cfg, settings.build("lidar"), settings.build("dynamics"), args.out)

    print(curve_table(success_curve(records, cfg.budgets), cfg.budgets))
    print()
    print(to_markdown(finish_time_summary(records), float_format=".1f"))


def cmd_contour(args, settings: Settings):
    kind = RobotKind(args.robot)
    grid = load_map(args.map)
    lidar = settings.build("lidar")
    dynamics = settings.build("dynamics")

    if args.estimator is not None:
        model = ReachabilityEstimator.load(args.estimator)
    else:
        policy = resolve_policy(args.oracle, kind, lidar, args.seed)
        cfg = TTRConfig.for_robot(kind, **settings.section("ttr"))
        model = RolloutOracle(policy, grid, cfg, lidar, dynamics, args.seed)

    field = ttr_contour(
        model, grid, args.goal[:2], args.step, kind, lidar, dynamics.robot_radius
    )
    field.to_csv(args.out)
    free = int(field.free.sum())
    print(f"{int(field.unreachable.sum())}/{free} free points above {field.threshold:g} s")


def cmd_render(args, settings: Settings):
    del settings
    grid = load_map(args.map)
    trees = {name: json.loads(path.read_text()) for name, path in map(named_path, args.tree)}
    plans = {}
    for name, path in map(named_path, args.plan):
        plan = json.loads(path.read_text())
        if "positions" in plan:
            plans[name] = plan
        else:
            logger.warning("Skipping %s: no solution in %s", name, path)

    render_svg(
        grid,
        trees,
        plans,
        args.out,
        start=args.start[:2] if args.start else None,
        goal=args.goal[:2] if args.goal else None,
    )


def cmd_p2p_eval(args, settings: Settings):
    kind = RobotKind(args.robot)
    grid = load_map(args.map)
    lidar = settings.build("lidar")
    policy = resolve_policy(args.policy, kind, lidar, args.seed)

    bins = p2p_success_by_distance(
        policy,
        grid,
        args.bins,
        args.trials,
        np.random.default_rng(args.seed),
        settings.build("episode"),
        lidar,
        settings.build("dynamics"),
    )
    print(distance_table(bins))


def cmd_critic_report(args, settings: Settings):
    kind = RobotKind(args.robot)
    grid = load_map(args.map)
    lidar = settings.build("lidar")
    dynamics = settings.build("dynamics")
    episode = settings.build("episode")
    rng = np.random.default_rng(args.seed)

    policy = resolve_policy(args.policy, kind, lidar, args.seed)
    estimator = ReachabilityEstimator.load(args.estimator)

    trajectories = []
    for _ in range(args.episodes):
        sampled = sample_free_state(grid, kind, rng, robot_radius=dynamics.robot_radius)
        start = state_at_rest(kind, sampled.x, sampled.y, sampled.theta)
        goal = sample_goal_near(
            grid, start, episode.goal_sample_radius, rng, dynamics.robot_radius
        )
        trajectories.append(
            rollout(policy, grid, start, goal, episode, rng, lidar, dynamics, settings.reward(kind))
        )

    report = critic_vs_ttr_report(policy, estimator, trajectories)
    write_report(report, args.out)
    correlations = [s.correlation() for s in report]
    print(f"Median TTR / -V correlation: {np.nanmedian(correlations):.3f}")


### Parser ###


def add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", type=Path, help="key = value config file")
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one config value",
    )
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--log-file", type=Path)


def add_world(parser: argparse.ArgumentParser, default_map: str | None):
    parser.add_argument("--map", type=Path, default=default_map)
    parser.add_argument(
        "--robot",
        default=None if default_map is None else RobotKind.DIFF_DRIVE.value,
        choices=[k.value for k in RobotKind],
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rlrrt", description="Kinodynamic RRT with learned local planners."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-policy", help="train an actor-critic P2P policy")
    add_common(p)
    add_world(p, TRAIN_MAP)
    p.add_argument("--episodes", type=int)
    p.add_argument("--out", type=Path, default=Path("artifacts/policy"))
    p.set_defaults(func=cmd_train_policy)

    p = sub.add_parser("collect-ttr", help="roll a policy out and label time to reach")
    add_common(p)
    add_world(p, TRAIN_MAP)
    p.add_argument("--policy", default="dwa", help="dwa, dwa_no_clearance, zero, random or a checkpoint")
    p.add_argument("--episodes", type=int)
    p.add_argument("--out", type=Path, default=Path("artifacts/ttr_dataset.npz"))
    p.set_defaults(func=cmd_collect_ttr)

    p = sub.add_parser("train-estimator", help="fit the reachability estimator")
    add_common(p)
    p.add_argument("--dataset", type=Path, default=Path("artifacts/ttr_dataset.npz"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--holdout", type=float, default=0.1)
    p.add_argument("--ttr-only", action="store_true", help="train on goal-reaching episodes only")
    p.add_argument("--out", type=Path, default=Path("artifacts/estimator.npz"))
    p.set_defaults(func=cmd_train_estimator)

    p = sub.add_parser("plan", help="solve one planning query")
    add_common(p)
    add_world(p, EVAL_MAP)
    p.add_argument("--planner", default="rl_rrt", choices=PLANNERS)
    p.add_argument("--policy", default="dwa")
    p.add_argument("--estimator", type=Path)
    p.add_argument("--start", type=floats, help="x,y[,theta]")
    p.add_argument("--goal", type=floats, help="x,y")
    p.add_argument("--budget", type=float, help="wall-clock seconds")
    p.add_argument("--iterations", type=int, help="iteration budget instead of seconds")
    p.add_argument("--out", type=Path, default=Path("artifacts/plan.json"))
    p.add_argument("--tree", type=Path, help="also dump the search tree as JSON")
    p.add_argument("--svg", type=Path, help="also render the tree and plan")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("bench", help="seeded planner comparison")
    add_common(p)
    add_world(p, None)
    p.add_argument("--planners", nargs="+", choices=PLANNERS)
    p.add_argument("--trials", type=int)
    p.add_argument("--budgets", type=floats)
    p.add_argument("--budget-mode", choices=["seconds", "iterations"])
    p.add_argument("--policy")
    p.add_argument("--estimator")
    p.add_argument("--out", type=Path, default=Path("artifacts/bench.csv"))
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("contour", help="TTR field toward one goal")
    add_common(p)
    add_world(p, EVAL_MAP)
    model = p.add_mutually_exclusive_group(required=True)
    model.add_argument("--estimator", type=Path)
    model.add_argument("--oracle", metavar="POLICY", help="roll this policy out for true TTR")
    p.add_argument("--goal", type=floats, required=True)
    p.add_argument("--step", type=float, default=0.5)
    p.add_argument("--out", type=Path, default=Path("artifacts/contour.csv"))
    p.set_defaults(func=cmd_contour)

    p = sub.add_parser("render", help="draw trees and plans over a map")
    add_common(p)
    add_world(p, EVAL_MAP)
    p.add_argument("--tree", action="append", default=[], metavar="[NAME=]PATH")
    p.add_argument("--plan", action="append", default=[], metavar="[NAME=]PATH")
    p.add_argument("--start", type=floats)
    p.add_argument("--goal", type=floats)
    p.add_argument("--out", type=Path, default=Path("artifacts/render.svg"))
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("p2p-eval", help="policy success rate by goal distance")
    add_common(p)
    add_world(p, EVAL_MAP)
    p.add_argument("--policy", default="dwa")
    p.add_argument("--bins", type=floats, default=(0.0, 2.0, 5.0, 10.0, 15.0, 20.0))
    p.add_argument("--trials", type=int, default=20)
    p.set_defaults(func=cmd_p2p_eval)

    p = sub.add_parser("critic-report", help="critic value against estimated TTR")
    add_common(p)
    add_world(p, TRAIN_MAP)
    p.add_argument("--policy", required=True, help="actor-critic checkpoint")
    p.add_argument("--estimator", type=Path, required=True)
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--out", type=Path, default=Path("artifacts/critic_report.csv"))
    p.set_defaults(func=cmd_critic_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level, args.log_file)

    try:
        settings = Settings.load(args.config, args.set)
        args.func(args, settings)
    except (
        ArtifactError,
        ConfigError,
        DatasetError,
        FileNotFoundError,
        PlannerError,
        PolicyError,
        WorldError,
    ) as exc:
        logger.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
