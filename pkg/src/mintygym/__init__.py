"""Weighted optimistic gradient descent for variational inequalities over
products of simplices, with exact planners for tabular Markov games."""

from .blocks import BlockSpace, diameters, hadamard, project_blockwise, project_simplex
from .errors import (
    GameFileError, InsufficientRecordsError, InvalidInputError, MintyGymError, NumericalFailureError,
    OperatorFailureError, UnsupportedStructureError,
)
from .markov import (
    MarkovGame, PlanningResult, acce_gap, best_response, build_operator, gradient_dominance_bound,
    greedy_map, marginalize, ne_gap, plan, policy_gradient, single_controller_of, smoothness_probe,
    theorem_constants, value_difference_audit,
)
from .vi import (
    SolveReport, SolverConfig, WeightedVIProblem, gap_bound, iteration_budget, noisy_wrap, ogd_iterate,
    path_length_audit, rvu_audit, slack_budget, solve, theorem_step_size, vi_gap,
)

__version__ = "0.1.0"
