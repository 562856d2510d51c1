"""Obstacle-aware reachability: TTR data collection, labeling, regression and queries."""

from __future__ import annotations

import json
import logging
import math
from collections.abc import Iterator
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from rlrrt.env.dynamics import DynamicsParams, RobotKind, RobotState, state_at_rest
from rlrrt.env.env import EpisodeConfig, Outcome, sample_goal_near
from rlrrt.env.observation import (
    N_FRAMES,
    N_SCALARS,
    FrameStack,
    Observation,
    ObservationScale,
    make_observation,
    normalize_observation,
    observation_size,
)
from rlrrt.env.tabulate import to_markdown
from rlrrt.env.world import (
    LidarConfig,
    OccupancyGrid,
    lidar_scan,
    sample_free_state,
    state_pose,
)
from rlrrt.neuralnet import (
    NetworkError,
    NeuralNet,
    TrainConfig,
    load_network,
    save_network,
    train,
)
from rlrrt.policy.base import LocalPlannerPolicy
from rlrrt.policy.rollout import Trajectory, rollout

logger = logging.getLogger(__name__)

HIDDEN_DIMS = (500, 200, 100)
DROPOUT_P = 0.5
HORIZONS = {RobotKind.DIFF_DRIVE: 20.0, RobotKind.ASTEROID: 20.0, RobotKind.CAR: 40.0}
LABEL_TOLERANCE = 1e-9


class DatasetError(ValueError):
    """Raised on empty or inconsistent TTR datasets."""


@dataclass(frozen=True, slots=True)
class TTRConfig:
    """Data collection settings; ``t_horizon`` doubles as the reachability threshold."""

    dt: float = 0.1
    t_horizon: float = 20.0
    n_episodes: int = 200
    goal_sample_radius: float = 20.0
    goal_radius: float = 0.5

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"{self.dt=} must be positive")
        if self.t_horizon <= self.dt:
            raise ValueError(f"{self.t_horizon=} must exceed {self.dt=}")
        if self.n_episodes < 0:
            raise ValueError(f"{self.n_episodes=} cannot be negative")

    @classmethod
    def for_robot(cls, kind: RobotKind, **kwargs) -> TTRConfig:
        kwargs.setdefault("t_horizon", HORIZONS[RobotKind(kind)])
        return cls(**kwargs)

    @property
    def ttr_threshold(self) -> float:
        return self.t_horizon

    def episode_config(self) -> EpisodeConfig:
        return EpisodeConfig(
            dt_policy=self.dt,
            max_episode_time=self.t_horizon,
            goal_radius=self.goal_radius,
            goal_sample_radius=self.goal_sample_radius,
        )


def ttr_step_cost(
    elapsed: float, collided: bool, cfg: TTRConfig, reached: bool = False
) -> tuple[float, bool]:
    """Cost of one step and whether the episode is over.

    Collisions and running out of time cost ``dt + t_horizon``.
    """
    if collided:
        return cfg.dt + cfg.t_horizon, True
    if reached:
        return cfg.dt, True
    if elapsed >= cfg.t_horizon - LABEL_TOLERANCE:
        return cfg.dt + cfg.t_horizon, True
    return cfg.dt, False


def cumulative_future_cost(costs) -> list[float]:
    """Suffix sums: ``out[i] = sum(costs[i:])``."""
    costs = np.asarray(costs, dtype=float)
    if costs.size == 0:
        raise DatasetError("Cannot label an empty cost history")
    return np.cumsum(costs[::-1])[::-1].tolist()


def trajectory_costs(traj: Trajectory, cfg: TTRConfig) -> list[float]:
    """Per-step TTR costs of a finished rollout."""
    costs = []
    for i in range(traj.n_steps):
        last = i == traj.n_steps - 1
        cost, _ = ttr_step_cost(
            (i + 1) * cfg.dt,
            last and traj.outcome is Outcome.COLLIDED,
            cfg,
            reached=last and traj.outcome is Outcome.REACHED,
        )
        costs.append(cost)
    return costs


def trajectory_labels(traj: Trajectory, cfg: TTRConfig) -> list[float]:
    if traj.n_steps == 0:
        return []
    return cumulative_future_cost(trajectory_costs(traj, cfg))


@dataclass(frozen=True, slots=True)
class TrainingSample:
    observation: Observation
    label: float


@dataclass(slots=True, eq=False)
class TTRDataset:
    """Labeled observations, one row per recorded step."""

    robot_kind: RobotKind
    n_beams: int
    max_range: float
    dt: float
    t_horizon: float
    n_episodes: int
    observations: np.ndarray
    labels: np.ndarray
    episode_ids: np.ndarray
    steps: np.ndarray
    reached: np.ndarray

    def __post_init__(self):
        n = len(self.labels)
        self.observations = np.asarray(self.observations, dtype=float).reshape(
            n, observation_size(self.n_beams)
        )
        for name in ("labels", "episode_ids", "steps", "reached"):
            if len(getattr(self, name)) != n:
                raise DatasetError(f"{name} has {len(getattr(self, name))} rows, expected {n}")

    def __len__(self):
        return len(self.labels)

    @classmethod
    def empty(cls, robot_kind: RobotKind, lidar: LidarConfig, cfg: TTRConfig) -> TTRDataset:
        return cls(
            robot_kind,
            lidar.n_beams,
            lidar.max_range,
            cfg.dt,
            cfg.t_horizon,
            0,
            np.zeros((0, observation_size(lidar.n_beams))),
            np.zeros(0),
            np.zeros(0, dtype=int),
            np.zeros(0, dtype=int),
            np.zeros(0, dtype=bool),
        )

    def samples(self) -> Iterator[TrainingSample]:
        for vector, label in zip(self.observations, self.labels):
            yield TrainingSample(Observation.from_vector(vector), float(label))

    def subset(self, mask: np.ndarray) -> TTRDataset:
        mask = np.asarray(mask)
        return replace(
            self,
            n_episodes=len(np.unique(self.episode_ids[mask])),
            observations=self.observations[mask],
            labels=self.labels[mask],
            episode_ids=self.episode_ids[mask],
            steps=self.steps[mask],
            reached=self.reached[mask],
        )

    def filter_reached(self) -> TTRDataset:
        """Only samples from episodes that reached the goal."""
        return self.subset(self.reached)

    def split_by_episode(
        self, holdout: float, rng: np.random.Generator
    ) -> tuple[TTRDataset, TTRDataset]:
        """Train/test split with whole episodes on each side."""
        episodes = np.unique(self.episode_ids)
        n_test = math.ceil(holdout * len(episodes)) if len(episodes) > 1 else 0
        test_ids = rng.permutation(episodes)[:n_test]
        test = np.isin(self.episode_ids, test_ids)
        return self.subset(~test), self.subset(test)

    def header(self) -> dict:
        return {
            "robot_kind": self.robot_kind.value,
            "n_beams": self.n_beams,
            "max_range": self.max_range,
            "dt": self.dt,
            "t_horizon": self.t_horizon,
            "n_episodes": self.n_episodes,
        }

    def save(self, path: Path | str) -> Path:
        path = Path(path).with_suffix(".npz")
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("wb") as fh:
            np.savez(
                fh,
                header=np.array(json.dumps(self.header(), sort_keys=True)),
                observations=self.observations.astype("<f8"),
                labels=self.labels.astype("<f8"),
                episode_ids=self.episode_ids.astype("<i8"),
                steps=self.steps.astype("<i8"),
                reached=self.reached.astype(bool),
            )
        logger.info("Saved %d samples from %d episodes to %s", len(self), self.n_episodes, path)
        return path

    @classmethod
    def load(cls, path: Path | str) -> TTRDataset:
        path = Path(path).with_suffix(".npz")
        with np.load(path) as data:
            header = json.loads(str(data["header"]))
            return cls(
                RobotKind(header["robot_kind"]),
                int(header["n_beams"]),
                float(header["max_range"]),
                float(header["dt"]),
                float(header["t_horizon"]),
                int(header["n_episodes"]),
                data["observations"],
                data["labels"],
                data["episode_ids"],
                data["steps"],
                data["reached"],
            )


def collect_training_data(
    policy: LocalPlannerPolicy,
    grid: OccupancyGrid,
    cfg: TTRConfig,
    rng: np.random.Generator,
    lidar: LidarConfig | None = None,
    dynamics: DynamicsParams | None = None,
) -> TTRDataset:
    """Roll the policy out between random start/goal pairs and label every observation."""
    lidar = lidar or LidarConfig()
    dynamics = dynamics or DynamicsParams()
    episode_cfg = cfg.episode_config()

    obs, labels, ids, steps, reached = [], [], [], [], []
    for ep in range(cfg.n_episodes):
        sampled = sample_free_state(
            grid, policy.robot_kind, rng, robot_radius=dynamics.robot_radius
        )
        start = state_at_rest(policy.robot_kind, sampled.x, sampled.y, sampled.theta)
        goal = sample_goal_near(
            grid, start, cfg.goal_sample_radius, rng, dynamics.robot_radius
        )

        traj = rollout(policy, grid, start, goal, episode_cfg, rng, lidar, dynamics)
        ep_labels = trajectory_labels(traj, cfg)

        obs += [o.vector for o in traj.observations[: traj.n_steps]]
        labels += ep_labels
        ids += [ep] * traj.n_steps
        steps += list(range(traj.n_steps))
        reached += [traj.reached] * traj.n_steps

        logger.debug("Episode %d: %s in %d steps", ep, traj.outcome, traj.n_steps)
        if (ep + 1) % 50 == 0:
            logger.info("Collected %d/%d episodes, %d samples", ep + 1, cfg.n_episodes, len(labels))

    if not labels:
        return TTRDataset.empty(policy.robot_kind, lidar, cfg)

    return TTRDataset(
        policy.robot_kind,
        lidar.n_beams,
        lidar.max_range,
        cfg.dt,
        cfg.t_horizon,
        cfg.n_episodes,
        np.array(obs),
        np.array(labels),
        np.array(ids, dtype=int),
        np.array(steps, dtype=int),
        np.array(reached, dtype=bool),
    )


@dataclass(frozen=True, slots=True)
class ConfusionMetrics:
    """Reachability classification counts; positive means reachable."""

    tp: int
    fp: int
    fn: int
    tn: int

    @classmethod
    def from_values(cls, predicted, actual, threshold: float) -> ConfusionMetrics:
        pred_pos = np.asarray(predicted) < threshold
        true_pos = np.asarray(actual) < threshold
        return cls(
            tp=int(np.sum(pred_pos & true_pos)),
            fp=int(np.sum(pred_pos & ~true_pos)),
            fn=int(np.sum(~pred_pos & true_pos)),
            tn=int(np.sum(~pred_pos & ~true_pos)),
        )

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 0.0

    def to_markdown(self) -> str:
        """Confusion matrix in percent of all samples, then the derived scores."""
        pct = 100.0 / max(self.total, 1)
        matrix = to_markdown(
            [
                {
                    "": "true reachable",
                    "predicted reachable": self.tp * pct,
                    "predicted unreachable": self.fn * pct,
                },
                {
                    "": "true unreachable",
                    "predicted reachable": self.fp * pct,
                    "predicted unreachable": self.tn * pct,
                },
            ],
            float_format=".1f",
        )
        scores = to_markdown(
            [
                {
                    "precision": self.precision * 100,
                    "recall": self.recall * 100,
                    "accuracy": self.accuracy * 100,
                    "samples": self.total,
                }
            ],
            float_format=".1f",
        )
        return f"{matrix}\n\n{scores}"


@dataclass(slots=True, eq=False)
class ReachabilityEstimator:
    """Regressor from an observation to the expected TTR, in seconds."""

    robot_kind: RobotKind
    net: NeuralNet
    scale: ObservationScale
    t_horizon: float
    metrics: ConfusionMetrics | None = None
    loss_curve: list[float] = field(default_factory=list)
    query_count: int = 0

    def __post_init__(self):
        n_beams = (self.net.input_dim - N_SCALARS) // N_FRAMES
        if observation_size(n_beams) != self.net.input_dim or self.net.output_dim != 1:
            raise NetworkError(f"Network {self.net.layer_dims} is not a TTR regressor")

    @classmethod
    def create(
        cls,
        robot_kind: RobotKind,
        n_beams: int,
        max_range: float,
        t_horizon: float,
        seed: int = 0,
        hidden_dims: tuple[int, ...] = HIDDEN_DIMS,
        dropout_p: float = DROPOUT_P,
    ) -> ReachabilityEstimator:
        net = NeuralNet.create(
            (observation_size(n_beams), *hidden_dims, 1), seed, dropout_p=dropout_p
        )
        scale = ObservationScale.for_robot(robot_kind, max_range)
        return cls(robot_kind, net, scale, t_horizon)

    @property
    def ttr_threshold(self) -> float:
        return self.t_horizon

    def predict_batch(self, vectors: np.ndarray) -> np.ndarray:
        """TTR for a ``(batch, dim)`` array of raw observation vectors."""
        vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
        if vectors.shape[1] != self.net.input_dim:
            raise NetworkError(
                f"Observation has {vectors.shape[1]} values, estimator expects {self.net.input_dim}"
            )
        self.query_count += len(vectors)
        out = self.net.forward(normalize_observation(vectors, self.scale))
        return out[:, 0] * self.t_horizon

    def predict_ttr(self, observation: Observation | np.ndarray) -> float:
        vector = observation.vector if isinstance(observation, Observation) else observation
        return float(self.predict_batch(vector)[0])

    def is_reachable(self, observation: Observation) -> bool:
        return self.predict_ttr(observation) < self.ttr_threshold

    def time_to_reach(
        self, state: RobotState, stack: FrameStack, goals: np.ndarray
    ) -> np.ndarray:
        """Predicted TTR from ``state`` (seeing ``stack``) to each goal position."""
        vectors = [make_observation(state, tuple(g), stack).vector for g in goals]
        return self.predict_batch(np.array(vectors))

    def save(self, path: Path | str) -> Path:
        meta = {
            "robot_kind": self.robot_kind.value,
            "t_horizon": self.t_horizon,
            "scale": asdict(self.scale),
        }
        if self.metrics is not None:
            meta["metrics"] = asdict(self.metrics)
        return save_network(self.net, path, meta)

    @classmethod
    def load(cls, path: Path | str) -> ReachabilityEstimator:
        net, meta = load_network(path)
        scale = meta["scale"]
        scale["velocity_scale"] = tuple(scale["velocity_scale"])
        metrics = meta.get("metrics")
        return cls(
            RobotKind(meta["robot_kind"]),
            net,
            ObservationScale(**scale),
            float(meta["t_horizon"]),
            ConfusionMetrics(**metrics) if metrics else None,
        )


def evaluate(est: ReachabilityEstimator, dataset: TTRDataset) -> ConfusionMetrics:
    predicted = est.predict_batch(dataset.observations)
    return ConfusionMetrics.from_values(predicted, dataset.labels, est.ttr_threshold)


def train_estimator(
    dataset: TTRDataset,
    cfg: TrainConfig | None = None,
    holdout: float = 0.1,
    hidden_dims: tuple[int, ...] = HIDDEN_DIMS,
    dropout_p: float = DROPOUT_P,
) -> ReachabilityEstimator:
    """L2 regression on the labels; held-out episodes give the classification metrics."""
    cfg = cfg or TrainConfig()
    if not len(dataset):
        raise DatasetError("Cannot train an estimator on an empty dataset")

    rng = np.random.default_rng(cfg.seed)
    train_set, test_set = dataset.split_by_episode(holdout, rng)
    if not len(train_set):
        raise DatasetError("No training samples left after the held-out split")

    est = ReachabilityEstimator.create(
        dataset.robot_kind,
        dataset.n_beams,
        dataset.max_range,
        dataset.t_horizon,
        cfg.seed,
        hidden_dims,
        dropout_p,
    )

    inputs = normalize_observation(train_set.observations, est.scale)
    result = train(est.net, inputs, train_set.labels / est.t_horizon, cfg)
    est.net = result.net
    est.loss_curve = result.loss_curve

    if len(test_set):
        est.metrics = evaluate(est, test_set)
        logger.info(
            "Held-out accuracy=%.3f precision=%.3f recall=%.3f on %d samples",
            est.metrics.accuracy,
            est.metrics.precision,
            est.metrics.recall,
            est.metrics.total,
        )
    else:
        logger.warning("Dataset has a single episode, no held-out metrics")

    est.query_count = 0
    return est


def train_ttr_only_estimator(
    dataset: TTRDataset, cfg: TrainConfig | None = None, **kwargs
) -> ReachabilityEstimator:
    """Estimator trained only on episodes that reached their goal."""
    reached = dataset.filter_reached()
    if not len(reached):
        raise DatasetError("No goal-reaching episodes in the dataset")
    return train_estimator(reached, cfg, **kwargs)


def mean_signed_error(est: ReachabilityEstimator, dataset: TTRDataset) -> float:
    """Mean of prediction minus label; positive means overestimation."""
    if not len(dataset):
        raise DatasetError("Cannot evaluate on an empty dataset")
    return float(np.mean(est.predict_batch(dataset.observations) - dataset.labels))


def predicted_vs_true(
    est: ReachabilityEstimator, dataset: TTRDataset
) -> tuple[np.ndarray, np.ndarray]:
    return est.predict_batch(dataset.observations), dataset.labels.copy()


@dataclass(slots=True, eq=False)
class RolloutOracle:
    """Ground-truth TTR: roll the policy out and label the episode."""

    policy: LocalPlannerPolicy
    grid: OccupancyGrid
    cfg: TTRConfig = field(default_factory=TTRConfig)
    lidar: LidarConfig = field(default_factory=LidarConfig)
    dynamics: DynamicsParams = field(default_factory=DynamicsParams)
    seed: int = 0
    query_count: int = 0

    @property
    def ttr_threshold(self) -> float:
        return self.cfg.t_horizon

    @property
    def robot_kind(self) -> RobotKind:
        return self.policy.robot_kind

    def rollout_ttr(self, state: RobotState, goal: tuple[float, float]) -> float:
        traj = rollout(
            self.policy,
            self.grid,
            state,
            goal,
            self.cfg.episode_config(),
            np.random.default_rng(self.seed),
            self.lidar,
            self.dynamics,
        )
        labels = trajectory_labels(traj, self.cfg)
        return labels[0] if labels else 0.0

    def time_to_reach(
        self, state: RobotState, stack: FrameStack | None, goals: np.ndarray
    ) -> np.ndarray:
        del stack  # the rollout observes the world itself
        self.query_count += len(goals)
        return np.array([self.rollout_ttr(state, (float(g[0]), float(g[1]))) for g in goals])


def static_stack(grid: OccupancyGrid, state: RobotState, lidar: LidarConfig) -> FrameStack:
    """Frame stack of one noise-free scan, for states with no recorded history."""
    scan = lidar_scan(grid, state_pose(state), replace(lidar, noise_sigma=0.0))
    return FrameStack([scan])


def avg_ttr(
    est,
    from_state: RobotState,
    to_state: RobotState,
    grid: OccupancyGrid,
    n_samples: int = 10,
    half_width: float = 0.3,
    rng: np.random.Generator | None = None,
    stack: FrameStack | None = None,
    lidar: LidarConfig | None = None,
) -> float:
    """Mean TTR toward targets drawn in a position square of ``half_width`` around ``to_state``."""
    if from_state.kind is not to_state.kind:
        raise ValueError(f"{from_state.kind=} does not match {to_state.kind=}")
    if n_samples < 1:
        raise ValueError(f"{n_samples=} must be at least 1")

    rng = rng if rng is not None else np.random.default_rng()
    if stack is None:
        stack = static_stack(grid, from_state, lidar or LidarConfig())

    center = np.array([to_state.x, to_state.y])
    if half_width:
        goals = center + rng.uniform(-half_width, half_width, size=(n_samples, 2))
    else:
        goals = center[None, :]

    return float(np.mean(est.time_to_reach(from_state, stack, goals)))
