"""Occupancy-grid fusion benchmark: Bayesian log-odds vs belief functions."""

from .core import GridSpec, Pose2D, compose_pose
from .fusion import (
    BBA,
    VACUOUS,
    BeliefGrid,
    FusionParams,
    LogOddsCell,
    LogOddsGrid,
    bayes_update,
    betp,
    closed_form_consonant,
    dempster_combine,
    logistic,
    logodds_from_masses,
    masses_from_logodds_betp,
    masses_from_logodds_ppl,
    ppl,
    yager_combine,
)
from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = [
    "GridSpec",
    "Pose2D",
    "compose_pose",
    "BBA",
    "VACUOUS",
    "BeliefGrid",
    "FusionParams",
    "LogOddsCell",
    "LogOddsGrid",
    "bayes_update",
    "betp",
    "closed_form_consonant",
    "dempster_combine",
    "logistic",
    "logodds_from_masses",
    "masses_from_logodds_betp",
    "masses_from_logodds_ppl",
    "ppl",
    "yager_combine",
    "KERNEL_BACKEND",
]
