"""Configurable multifidelity hyperparameter optimization."""
from __future__ import annotations

__version__ = "0.1.0"

from .archive import Archive, EvalRecord
from .baselines import preset
from .objectives import Objective, make_scenario
from .optimizer import OptimizerSpec, run
from .param_space import Config, ParamSpace

__all__ = ["Archive", "Config", "EvalRecord", "Objective", "OptimizerSpec", "ParamSpace",
           "make_scenario", "preset", "run", "__version__"]
