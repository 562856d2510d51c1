"""Deterministic-policy actor-critic trained with fixed reward weights."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from rlrrt.env.dynamics import (
    DynamicsParams,
    RobotAction,
    RobotKind,
    action_high,
    action_low,
)
from rlrrt.env.env import EpisodeConfig, Outcome, raw_env
from rlrrt.env.observation import (
    Observation,
    ObservationScale,
    normalize_observation,
    observation_size,
)
from rlrrt.env.reward import RewardWeights
from rlrrt.env.world import LidarConfig, OccupancyGrid
from rlrrt.neuralnet import (
    Activation,
    Adam,
    NeuralNet,
    TrainingDivergedError,
    l2_loss_grad,
    load_network,
    save_network,
)
from rlrrt.policy.base import PolicyError, PolicyKind, RandomPolicy
from rlrrt.policy.rollout import count_reached

logger = logging.getLogger(__name__)

ACTION_DIM = 2


class UndertrainedPolicyError(PolicyError):
    """Trained policy does not beat random actions by the configured margin."""

    def __init__(
        self, policy: ActorCriticPolicy, trained: float, baseline: float, margin: float
    ):
        super().__init__(
            f"P2P success {trained:.2f} does not beat random actions "
            f"({baseline:.2f}) by {margin:.2f}"
        )
        self.policy = policy
        self.trained = trained
        self.baseline = baseline


@dataclass(frozen=True, slots=True)
class ActorCriticConfig:
    """Actor-critic hyperparameters; noise is in units of the action half-range."""

    actor_hidden: tuple[int, ...] = (256, 128)
    critic_hidden: tuple[int, ...] = (256, 128)
    actor_learning_rate: float = 1e-4
    critic_learning_rate: float = 1e-3
    gamma: float = 0.99
    tau: float = 0.005
    buffer_size: int = 100_000
    batch_size: int = 64
    episodes: int = 300
    warmup_steps: int = 1_000
    noise_sigma: float = 0.3
    noise_decay: float = 0.995
    min_noise_sigma: float = 0.05
    eval_episodes: int = 100
    eval_max_distance: float = 5.0
    success_margin: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"{self.gamma=} must be in [0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"{self.tau=} must be in (0, 1]")
        if self.batch_size < 1 or self.buffer_size < self.batch_size:
            raise ValueError(f"{self.batch_size=} must be in [1, {self.buffer_size=}]")
        if self.episodes < 0:
            raise ValueError(f"{self.episodes=} cannot be negative")
        if self.eval_episodes < 0:
            raise ValueError(f"{self.eval_episodes=} cannot be negative")
        if self.eval_max_distance <= 0:
            raise ValueError(f"{self.eval_max_distance=} must be positive")
        if not 0.0 <= self.success_margin <= 1.0:
            raise ValueError(f"{self.success_margin=} must be in [0, 1]")


class ReplayBuffer:
    """Fixed-capacity transition memory; the oldest transitions are overwritten."""

    def __init__(self, capacity: int, obs_dim: int, action_dim: int = ACTION_DIM):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.terminal = np.zeros(capacity, dtype=bool)
        self._next = 0
        self._size = 0

    def __len__(self):
        return self._size

    def add(self, obs, action, reward: float, next_obs, terminal: bool):
        i = self._next
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        self.terminal[i] = terminal
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = rng.integers(0, self._size, size=batch_size)
        return (
            self.obs[idx],
            self.actions[idx],
            self.rewards[idx],
            self.next_obs[idx],
            self.terminal[idx],
        )


@dataclass(slots=True, eq=False)
class ActorCriticPolicy:
    """Learned P2P policy: tanh actor scaled to the action box, plus its critic."""

    robot_kind: RobotKind
    actor: NeuralNet
    critic: NeuralNet
    scale: ObservationScale
    seed: int = 0
    training_curve: list[float] = field(default_factory=list)
    evaluation: dict[str, float] = field(default_factory=dict)
    kind: PolicyKind = PolicyKind.LEARNED

    @classmethod
    def create(
        cls,
        robot_kind: RobotKind,
        lidar: LidarConfig | None = None,
        cfg: ActorCriticConfig | None = None,
    ) -> ActorCriticPolicy:
        """Untrained policy with freshly initialized networks."""
        lidar = lidar or LidarConfig()
        cfg = cfg or ActorCriticConfig()
        obs_dim = observation_size(lidar.n_beams)

        rng = np.random.default_rng(cfg.seed)
        actor = NeuralNet.create(
            (obs_dim, *cfg.actor_hidden, ACTION_DIM), rng, Activation.TANH
        )
        critic = NeuralNet.create((obs_dim + ACTION_DIM, *cfg.critic_hidden, 1), rng)

        # small final layer so initial actions stay near the box center
        actor.weights[-1] *= 0.1

        scale = ObservationScale.for_robot(robot_kind, lidar.max_range)
        return cls(robot_kind, actor, critic, scale, cfg.seed)

    def _center_half(self) -> tuple[np.ndarray, np.ndarray]:
        low, high = action_low(self.robot_kind), action_high(self.robot_kind)
        return (high + low) / 2, (high - low) / 2

    def action_from_unit(self, u) -> RobotAction:
        center, half = self._center_half()
        return RobotAction(self.robot_kind, *(center + half * np.asarray(u)))

    def unit_from_action(self, action: RobotAction) -> np.ndarray:
        center, half = self._center_half()
        return (action.as_array() - center) / half

    def normalize(self, observation: Observation | np.ndarray) -> np.ndarray:
        return normalize_observation(observation, self.scale)

    def unit_action(self, normalized_obs: np.ndarray) -> np.ndarray:
        return self.actor.forward(normalized_obs)

    def act(self, observation: Observation) -> RobotAction:
        return self.action_from_unit(self.unit_action(self.normalize(observation)))

    def value(self, observation: Observation) -> float:
        """Critic estimate ``Q(o, mu(o))``."""
        obs = self.normalize(observation)
        u = self.unit_action(obs)
        return float(self.critic.forward(np.concatenate([obs, u]))[0])

    def save(self, path: Path | str) -> Path:
        """Checkpoint as ``path/actor.npz`` and ``path/critic.npz`` with metadata sidecars."""
        path = Path(path)
        meta = {
            "robot_kind": self.robot_kind.value,
            "scale": asdict(self.scale),
            "seed": self.seed,
            "training_curve": self.training_curve,
            "evaluation": self.evaluation,
        }
        save_network(self.actor, path / "actor", meta)
        save_network(self.critic, path / "critic", {"robot_kind": self.robot_kind.value})
        logger.info("Saved %s policy to %s", self.robot_kind, path)
        return path

    @classmethod
    def load(cls, path: Path | str) -> ActorCriticPolicy:
        path = Path(path)
        actor, meta = load_network(path / "actor")
        critic, _ = load_network(path / "critic")

        scale = meta["scale"]
        scale["velocity_scale"] = tuple(scale["velocity_scale"])
        return cls(
            RobotKind(meta["robot_kind"]),
            actor,
            critic,
            ObservationScale(**scale),
            int(meta.get("seed", 0)),
            list(meta.get("training_curve", [])),
            dict(meta.get("evaluation", {})),
        )


class ActorCriticTrainer:
    """Off-policy updates with target networks and Gaussian exploration noise."""

    def __init__(self, policy: ActorCriticPolicy, cfg: ActorCriticConfig):
        self.policy = policy
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)

        self.target_actor = policy.actor.copy()
        self.target_critic = policy.critic.copy()
        self.actor_opt = Adam(policy.actor.parameters(), cfg.actor_learning_rate)
        self.critic_opt = Adam(policy.critic.parameters(), cfg.critic_learning_rate)

        self.buffer = ReplayBuffer(cfg.buffer_size, policy.actor.input_dim)
        self.n_updates = 0

    def explore(self, obs: np.ndarray, sigma: float, warmup: bool) -> np.ndarray:
        if warmup:
            return self.rng.uniform(-1.0, 1.0, ACTION_DIM)
        u = self.policy.unit_action(obs) + self.rng.normal(0.0, sigma, ACTION_DIM)
        return np.clip(u, -1.0, 1.0)

    def update(self) -> tuple[float, float]:
        """One critic and one actor step on a sampled batch; returns both losses."""
        cfg = self.cfg
        actor, critic = self.policy.actor, self.policy.critic
        obs, u, reward, next_obs, terminal = self.buffer.sample(cfg.batch_size, self.rng)

        next_u = self.target_actor.forward(next_obs)
        next_q = self.target_critic.forward(np.concatenate([next_obs, next_u], axis=1))[:, 0]
        target = reward + cfg.gamma * (~terminal) * next_q

        critic_loss, grads = l2_loss_grad(critic, np.concatenate([obs, u], axis=1), target)
        if not math.isfinite(critic_loss):
            raise TrainingDivergedError(
                f"Non-finite critic loss after {self.n_updates} updates",
                {"updates": self.n_updates, "critic_loss": critic_loss},
            )
        self.critic_opt.step(grads)

        # ascend Q(o, mu(o)) through the critic's input gradient
        mu, actor_cache = actor.forward_cached(obs)
        q, critic_cache = critic.forward_cached(np.concatenate([obs, mu], axis=1))
        _, d_input = critic.backward(critic_cache, -np.ones_like(q) / len(q))
        actor_grads, _ = actor.backward(actor_cache, d_input[:, -ACTION_DIM:])
        self.actor_opt.step(actor_grads)

        self.target_actor.soft_update(actor, cfg.tau)
        self.target_critic.soft_update(critic, cfg.tau)
        self.n_updates += 1

        return critic_loss, -float(np.mean(q))


def train_actor_critic(
    robot_kind: RobotKind,
    grid: OccupancyGrid,
    weights: RewardWeights | None = None,
    cfg: ActorCriticConfig | None = None,
    episode: EpisodeConfig | None = None,
    lidar: LidarConfig | None = None,
    dynamics: DynamicsParams | None = None,
) -> ActorCriticPolicy:
    """Train a P2P policy on ``grid``; the per-episode return curve is kept on the policy."""
    cfg = cfg or ActorCriticConfig()
    lidar = lidar or LidarConfig()
    robot_kind = RobotKind(robot_kind)

    env = raw_env(grid, robot_kind, episode, lidar, dynamics, weights, render_mode=None)
    policy = ActorCriticPolicy.create(robot_kind, lidar, cfg)
    trainer = ActorCriticTrainer(policy, cfg)

    sigma = cfg.noise_sigma
    total_steps = 0
    reached = 0
    for ep in range(cfg.episodes):
        obs, _ = env.reset(seed=int(trainer.rng.integers(2**32)))
        ep_return = 0.0

        while env.outcome is None:
            u = trainer.explore(obs, sigma, total_steps < cfg.warmup_steps)
            action = policy.action_from_unit(u)
            next_obs, reward, terminated, _, _ = env.step(action.as_array())

            trainer.buffer.add(obs, policy.unit_from_action(action), reward, next_obs, terminated)
            if len(trainer.buffer) >= cfg.batch_size and total_steps >= cfg.warmup_steps:
                trainer.update()

            obs = next_obs
            ep_return += reward
            total_steps += 1

        reached += env.outcome is Outcome.REACHED
        policy.training_curve.append(ep_return)
        sigma = max(cfg.min_noise_sigma, sigma * cfg.noise_decay)

        if (ep + 1) % 10 == 0 or ep + 1 == cfg.episodes:
            logger.info(
                "Episode %d/%d: return=%.3f reached=%d sigma=%.3f",
                ep + 1,
                cfg.episodes,
                ep_return,
                reached,
                sigma,
            )

    env.close()

    if cfg.eval_episodes:
        policy.evaluation = evaluate_against_random(policy, grid, cfg, episode, lidar, dynamics)
        trained, baseline = policy.evaluation["trained"], policy.evaluation["random"]
        logger.info(
            "P2P success within %.1f m: trained=%.2f random=%.2f",
            cfg.eval_max_distance,
            trained,
            baseline,
        )
        if trained - baseline < cfg.success_margin:
            logger.error("Policy misses the %.2f margin over random actions", cfg.success_margin)
            raise UndertrainedPolicyError(policy, trained, baseline, cfg.success_margin)

    return policy


def evaluate_against_random(
    policy: ActorCriticPolicy,
    grid: OccupancyGrid,
    cfg: ActorCriticConfig,
    episode: EpisodeConfig | None = None,
    lidar: LidarConfig | None = None,
    dynamics: DynamicsParams | None = None,
) -> dict[str, float]:
    """Success rates of ``policy`` and of random actions on the same short start/goal pairs."""
    episode = episode or EpisodeConfig()
    if cfg.eval_max_distance <= episode.goal_radius:
        raise ValueError(f"{cfg.eval_max_distance=} must exceed {episode.goal_radius=}")

    rates = {}
    for name, candidate in (
        ("trained", policy),
        ("random", RandomPolicy(policy.robot_kind, cfg.seed)),
    ):
        reached, attempted = count_reached(
            candidate,
            grid,
            episode.goal_radius,
            cfg.eval_max_distance,
            cfg.eval_episodes,
            np.random.default_rng(cfg.seed + 1),
            episode,
            lidar,
            dynamics,
        )
        rates[name] = reached / attempted if attempted else 0.0
    return rates


def dump_training_curve(policy: ActorCriticPolicy, path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps({"seed": policy.seed, "returns": policy.training_curve}, indent=2)
    )
    return path
