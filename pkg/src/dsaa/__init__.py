"""Discrete state-action abstraction: an SR-regularized discrete encoder,
options between abstract states, and the explore/abstract outer loop."""

from .abstraction import AbstractionLossConfig, Encoder, SrDecoder, abstraction_update
from .driver import RunConfig, run_dsaa
from .envs import Arm2dWorld, GridWorld, NoiseWrapper, make_env
from .graph import AbstractGraph
from .options import OptionBank, OptionConfig

__version__ = "0.1.0"

__all__ = [
    "AbstractGraph", "AbstractionLossConfig", "Arm2dWorld", "Encoder", "GridWorld", "NoiseWrapper",
    "OptionBank", "OptionConfig", "RunConfig", "SrDecoder", "abstraction_update", "make_env", "run_dsaa",
]
