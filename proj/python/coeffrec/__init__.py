"""Diffusion coefficient identification with P1 finite elements and a neural network coefficient."""

import os
from pathlib import Path

_configs = Path(__file__).resolve().parent / "configs"
if _configs.is_dir():
    os.environ.setdefault("COEFFREC_CONFIG_DIR", str(_configs))

from ._core import (  # noqa: E402
    ConfigError,
    Divergence,
    Example,
    SolverFailure,
    default_config_dir,
    example_ids,
    gradcheck,
    load_example,
    reconstruct,
    solve_forward,
    study,
)

__all__ = [
    "ConfigError",
    "Divergence",
    "Example",
    "SolverFailure",
    "default_config_dir",
    "example_ids",
    "gradcheck",
    "load_example",
    "reconstruct",
    "solve_forward",
    "study",
]
