"""Layered group sparse beamforming and benchmark schemes."""

from .algorithms import ALGORITHMS, AlgoResult, run_algorithm, run_all
from .model import DEFAULT_TAU, SupportSpace
from .oracle import oracle
from .search import (bs_priorities, da_priorities, feas_f1, feas_f2, iterative_search,
                     stage3_final)
from .stage1 import (SolverSettings, build_generalized_problem, stage1_init,
                     stage1_sparsify)

__all__ = ["ALGORITHMS", "AlgoResult", "run_algorithm", "run_all", "DEFAULT_TAU",
           "SupportSpace", "oracle", "bs_priorities", "da_priorities", "feas_f1", "feas_f2",
           "iterative_search", "stage3_final", "SolverSettings", "build_generalized_problem",
           "stage1_init", "stage1_sparsify"]
