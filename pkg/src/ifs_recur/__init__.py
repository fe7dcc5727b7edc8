"""Numerical toolkit for overlapping affine iterated function systems.

Builds finite-stage shrinking-target and quantitative-recurrence limsup
sets, estimates their Lebesgue measure on pixel grids, evaluates the
classical lower bounds (Kochen-Stone, Bonferroni), runs Monte Carlo
transversality checks over the translation parameter space, certifies
Garsia numbers exactly, and evaluates the closed-form dimension bound.
"""

from .errors import BudgetError, ConfigError, ConsistencyError
from .ifs_core import (
    AffineIFS,
    AffineMap,
    SymbolicSequence,
    affine_map,
    compose_word,
    constant_sequence,
    enumerate_words,
    ifs_from_rows,
    inverse_map,
    lambda_value,
    neumann_resolvent,
    periodic_fixed_point,
    project,
    shmerkin_sufficient,
)
from .measure_lab import (
    HFamily,
    PixelMask,
    PlacedBody,
    TargetMode,
    TargetSpec,
    rasterize,
    recurrence_ball_spec,
    shrinking_ball_spec,
    stage_recurrence_bodies,
    stage_target_bodies,
    window,
)

__version__ = "0.1.0"

__all__ = [
    "AffineIFS", "AffineMap", "SymbolicSequence", "affine_map",
    "compose_word", "constant_sequence", "enumerate_words", "ifs_from_rows",
    "inverse_map", "lambda_value", "neumann_resolvent",
    "periodic_fixed_point", "project", "shmerkin_sufficient",
    "HFamily", "PixelMask", "PlacedBody", "TargetMode", "TargetSpec",
    "rasterize", "recurrence_ball_spec", "shrinking_ball_spec",
    "stage_recurrence_bodies", "stage_target_bodies", "window",
    "BudgetError", "ConfigError", "ConsistencyError",
]
