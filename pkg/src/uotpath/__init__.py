"""Exact unbalanced optimal transport as non-negative penalized regression.

Multiplicative MM solvers, regularization paths for the squared-l2 penalty
(full and semi-relaxed), and slow reference solvers for verification.
"""

from .core import (DesignOperator, FlatIndex, apply_design, apply_design_adjoint, check_problem,
                   gram_apply)
from .divergence import (DivergenceKind, PenaltyWeights, bregman, objective, objective_gradient,
                         objective_regularized)
from .errors import (DegenerateError, DimensionError, DomainError, FormatError, PathError,
                     PreconditionError, UOTError)
from .ioformat import (ProblemFile, cost_from_points, export_path, import_path, load_plan,
                       load_problem, read_problem, save_plan, save_problem)
from .mm import (MmConfig, SolveReport, ipot_solve, mm_kl_step, mm_l2_alt_step, mm_l2_step,
                 mm_ruot_step, solve_mm)
from .regpath import (ActiveSet, Breakpoint, GramInverseCache, PathOptions, PathSegment,
                      RegularizationPath, compute_path, eval_path_at, initial_breakpoint,
                      next_addition_lambda, next_removal_lambda, schur_add, schur_remove)
from .srpath import compute_sr_path, eval_sr_path_at, sr_multipliers_at
from .synthetic import make_gaussian_problem

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
