"""Worst-case verification of a design over the convex hull of historical data."""

from .bilinear import BilinearProgram, BilinearResult, mccormick_rows, solve_bilinear_global
from .core import (
    ROBUST, VIOLATED, RegionGrid, VerifyConfig, VerifyReport, VerifyStep, blankenship_worst_case,
    hybrid_verify, sample_region,
)
from .mlp import MlpProgram, PatternSet, Uncertainty, build_mlp_dual_disc, lp_duals

__all__ = [
    "ROBUST", "VIOLATED", "BilinearProgram", "BilinearResult", "MlpProgram", "PatternSet", "RegionGrid",
    "Uncertainty", "VerifyConfig", "VerifyReport", "VerifyStep", "blankenship_worst_case",
    "build_mlp_dual_disc", "hybrid_verify", "lp_duals", "mccormick_rows", "sample_region",
    "solve_bilinear_global",
]
