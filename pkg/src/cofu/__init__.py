"""Community-fusion penalized regression across ordered datasets."""

__version__ = "0.1.0"

from .core import CommunityPartition, MultiDataset, PenaltyConfig  # noqa: E402
from .evaluate import detect_commonality, grid_roc  # noqa: E402
from .selection import cv_select, fit_cofu, make_grid  # noqa: E402
from .simgen import SimScenario, simulate  # noqa: E402
from .solver_glm import solve_glm  # noqa: E402
from .solver_lr import solve  # noqa: E402

__all__ = [
    "CommunityPartition",
    "MultiDataset",
    "PenaltyConfig",
    "cv_select",
    "detect_commonality",
    "fit_cofu",
    "grid_roc",
    "make_grid",
    "simulate",
    "SimScenario",
    "solve",
    "solve_glm",
]
