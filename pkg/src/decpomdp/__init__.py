"""Finite-horizon Dec-POMDP planning: exact policy evaluation, Bayesian-game
stage decomposition, Q-value bounds and Generalized MAA* search."""

from .bgames import BayesianGame, BgPolicy, build_bg, solve_altmax, solve_exhaustive
from .delayed_comm import KDelayQ, qk, verify_monotone
from .evaluator import CapExceeded, brute_force_solve, evaluate, simulate
from .gmaa import GmaaResult, SearchStats, expand_kbest, expand_maa, gmaa
from .heuristics import QTable, qbg, qmdp, qpomdp, solve_underlying_mdp
from .histories import HistorySpace, joint_belief, propagate
from .model import DecPomdp, ModelError
from .policy import PartialJointPolicy, PureJointPolicy, dump_policy
from .problem_file import ParseError, export_problem, load_problem
from .problems import (
    make_broadcast_channel,
    make_builtin,
    make_dectiger,
    make_firefighting,
    make_grid_small,
    make_skewed_dectiger,
)
from .qstar import (
    SeqRationalQ,
    extract_policy,
    qstar_normative,
    qstar_sequential,
    replan_after_deviation,
)

__all__ = [
    "BayesianGame", "BgPolicy", "build_bg", "solve_altmax", "solve_exhaustive",
    "KDelayQ", "qk", "verify_monotone",
    "CapExceeded", "brute_force_solve", "evaluate", "simulate",
    "GmaaResult", "SearchStats", "expand_kbest", "expand_maa", "gmaa",
    "QTable", "qbg", "qmdp", "qpomdp", "solve_underlying_mdp",
    "HistorySpace", "joint_belief", "propagate",
    "DecPomdp", "ModelError",
    "PartialJointPolicy", "PureJointPolicy", "dump_policy",
    "ParseError", "export_problem", "load_problem",
    "make_broadcast_channel", "make_builtin", "make_dectiger", "make_firefighting",
    "make_grid_small", "make_skewed_dectiger",
    "SeqRationalQ", "extract_policy", "qstar_normative", "qstar_sequential",
    "replan_after_deviation",
]
