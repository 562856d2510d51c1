"""Key-value config files mapped onto the dataclass configs.

```
# comment
[planner]
k_c = 20
max_iterations = none

[experiment]
planners = rl_rrt, sst
budgets = 1, 2, 5
```
"""

from __future__ import annotations

import logging
import types
import typing
from dataclasses import fields
from enum import Enum
from pathlib import Path

from rlrrt.bench.experiment import ExperimentConfig
from rlrrt.env.dynamics import DynamicsParams, RobotKind
from rlrrt.env.env import EpisodeConfig
from rlrrt.env.reward import RewardWeights
from rlrrt.env.world import LidarConfig
from rlrrt.estimator import TTRConfig
from rlrrt.neuralnet import TrainConfig
from rlrrt.planner.rrt import PlannerConfig
from rlrrt.planner.sst import SstConfig
from rlrrt.policy.actor_critic import ActorCriticConfig
from rlrrt.policy.dwa import DwaConfig

logger = logging.getLogger(__name__)

SECTIONS: dict[str, type] = {
    "lidar": LidarConfig,
    "dynamics": DynamicsParams,
    "episode": EpisodeConfig,
    "reward": RewardWeights,
    "train": TrainConfig,
    "actor_critic": ActorCriticConfig,
    "dwa": DwaConfig,
    "ttr": TTRConfig,
    "planner": PlannerConfig,
    "sst": SstConfig,
    "experiment": ExperimentConfig,
}

TRUE = {"true", "yes", "on", "1"}
FALSE = {"false", "no", "off", "0"}
NONE = {"none", "null", ""}


class ConfigError(ValueError):
    """Raised on malformed config files and overrides."""

    def __init__(self, path: Path | str, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


def field_types(cls: type) -> dict[str, object]:
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in fields(cls) if f.init}


def coerce(text: str, hint) -> object:
    """Convert ``text`` to ``hint``; tuples are comma lists, ``none`` maps to None."""
    text = text.strip()
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)

    if origin in (typing.Union, types.UnionType):
        if type(None) in args and text.lower() in NONE:
            return None
        inner = [a for a in args if a is not type(None)]
        if len(inner) != 1:
            raise ValueError(f"unsupported union {hint}")
        return coerce(text, inner[0])

    if origin is tuple:
        items = [item for item in text.split(",") if item.strip()]
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(coerce(item, args[0]) for item in items)
        if len(items) != len(args):
            raise ValueError(f"expected {len(args)} values, got {len(items)}")
        return tuple(coerce(item, a) for item, a in zip(items, args))

    if hint is bool:
        if text.lower() in TRUE:
            return True
        if text.lower() in FALSE:
            return False
        raise ValueError(f"{text!r} is not a boolean")

    if isinstance(hint, type) and issubclass(hint, Enum):
        return hint(text)

    if hint in (int, float, str):
        return hint(text)

    raise ValueError(f"unsupported field type {hint}")


def parse_config(path: Path | str) -> dict[str, dict[str, object]]:
    """Section name to coerced field values."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config not found: {path}")

    values: dict[str, dict[str, object]] = {}
    section = None
    hints: dict[str, object] = {}

    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue

        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in SECTIONS:
                raise ConfigError(path, lineno, f"unknown section [{section}]")
            hints = field_types(SECTIONS[section])
            values.setdefault(section, {})
            continue

        if "=" not in line:
            raise ConfigError(path, lineno, f"expected 'key = value', got {line!r}")
        if section is None:
            raise ConfigError(path, lineno, "key outside a [section]")

        key, text = (part.strip() for part in line.split("=", 1))
        if key not in hints:
            raise ConfigError(path, lineno, f"unknown key {key!r} in [{section}]")
        try:
            values[section][key] = coerce(text, hints[key])
        except ValueError as exc:
            raise ConfigError(path, lineno, f"{key}: {exc}") from exc

    logger.debug("Loaded config %s: %s", path, sorted(values))
    return values


def parse_override(text: str) -> tuple[str, str, object]:
    """``section.key=value`` from the command line."""
    if "=" not in text or "." not in text.split("=", 1)[0]:
        raise ConfigError("--set", 0, f"expected 'section.key=value', got {text!r}")

    target, value = text.split("=", 1)
    section, key = (part.strip() for part in target.split(".", 1))
    if section not in SECTIONS:
        raise ConfigError("--set", 0, f"unknown section {section!r}")

    hints = field_types(SECTIONS[section])
    if key not in hints:
        raise ConfigError("--set", 0, f"unknown key {key!r} in [{section}]")
    try:
        return section, key, coerce(value, hints[key])
    except ValueError as exc:
        raise ConfigError("--set", 0, f"{key}: {exc}") from exc


class Settings:
    """Config-file values with command-line overrides on top."""

    def __init__(self, values: dict[str, dict[str, object]] | None = None):
        self.values = {name: dict(v) for name, v in (values or {}).items()}

    @classmethod
    def load(cls, path: Path | str | None, overrides: list[str] = ()) -> Settings:
        settings = cls(parse_config(path) if path is not None else None)
        for text in overrides:
            settings.set(*parse_override(text))
        return settings

    def set(self, section: str, key: str, value: object):
        self.values.setdefault(section, {})[key] = value

    def get(self, section: str, key: str, default=None):
        return self.values.get(section, {}).get(key, default)

    def section(self, name: str, **explicit) -> dict[str, object]:
        merged = dict(self.values.get(name, {}))
        merged.update({k: v for k, v in explicit.items() if v is not None})
        return merged

    def build(self, section: str, **explicit):
        """Dataclass for ``section``; explicit keyword values beat file values, None is ignored."""
        return SECTIONS[section](**self.section(section, **explicit))

    def reward(self, kind: RobotKind) -> RewardWeights:
        section = self.values.get("reward", {})
        if "kind" in section and RobotKind(section["kind"]) is not kind:
            logger.warning("Ignoring reward weights for %s on a %s robot", section["kind"], kind)
            return RewardWeights.default(kind)
        if "theta" not in section:
            return RewardWeights.default(kind)
        return RewardWeights(kind, section["theta"])
