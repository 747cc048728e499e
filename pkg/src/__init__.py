"""
Mean-field SDE laboratory.

Modules:
    - bihari.py      : Bihari-type bounds and the Osgood test
    - coefficients.py: regularity profiles and stability coefficients
    - models.py      : coefficient families and initial laws
    - engine.py      : particle Euler-Maruyama and estimators
    - picard.py      : Picard iteration on law flows
    - verify.py      : bound-vs-empirical reports
    - config.py      : experiment configuration (ExperimentConfig)
    - messages.py    : one-line verdict summaries
    - cli.py         : command-line entry point
"""

from .config import ExperimentConfig, parse_config
from .engine import simulate, simulate_coupled
from .messages import get_summary
from .picard import picard_solve

__all__ = ["ExperimentConfig", "get_summary", "parse_config", "picard_solve", "simulate", "simulate_coupled"]
