"""Point-to-point navigation v0 environment."""

from rlrrt.env.env import env, raw_env

__all__ = ["env", "raw_env"]
