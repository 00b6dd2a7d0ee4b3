"""Regime-switching COGARCH and BNS volatility: exact simulation and moment analytics."""

from .levy_drivers import JumpLaw, LevyDriverSpec
from .map_engine import BivariateLaw, SwitchJumpLaw
from .markov_env import GeneratorMatrix, stationary_distribution
from .mmgou import MomentConditionError, PathBundle
from .mscogarch import MscogarchSpec
from .msbns import MsbnsSpec

__all__ = [
    "BivariateLaw",
    "GeneratorMatrix",
    "JumpLaw",
    "LevyDriverSpec",
    "MomentConditionError",
    "MsbnsSpec",
    "MscogarchSpec",
    "PathBundle",
    "SwitchJumpLaw",
    "stationary_distribution",
]

__version__ = "0.1.0"
