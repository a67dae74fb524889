"""Semiparametric Bayesian networks with data-driven KDE bandwidth selection."""

from .bn import CkdeCpd, LinearGaussianCpd, NodeType, Spbn, fit_ckde, fit_lg
from .data import Dataset
from .graph import Dag
from .kde import KdeModel, gaussian_kernel_logpdf
from .optimize import NmConfig, NmResult, nelder_mead
from .selectors import (
    SelectorKind,
    SelectorResult,
    nr_bandwidth,
    pi_objective,
    pilot_bandwidth,
    scv_objective,
    select_bandwidth,
    ucv_objective,
)
from .spd import SpdMatrix, cholesky, decode_spd, encode_spd, principal_submatrix
from .stats import bergmann_hommel_adjust, permutation_median_test
from .structure import HcConfig, best_of_two_starts, cpdag_of, cv_score, hill_climb, shd
from .synthetic import (
    GroundTruthNet,
    builtin_net,
    load_net,
    loglik_abs_error,
    truth_logpdf,
    truth_sample,
)

__version__ = "0.1.0"

__all__ = [
    "CkdeCpd",
    "Dag",
    "Dataset",
    "GroundTruthNet",
    "HcConfig",
    "KdeModel",
    "LinearGaussianCpd",
    "NmConfig",
    "NmResult",
    "NodeType",
    "SelectorKind",
    "SelectorResult",
    "Spbn",
    "SpdMatrix",
    "bergmann_hommel_adjust",
    "best_of_two_starts",
    "builtin_net",
    "cholesky",
    "cpdag_of",
    "cv_score",
    "decode_spd",
    "encode_spd",
    "fit_ckde",
    "fit_lg",
    "gaussian_kernel_logpdf",
    "hill_climb",
    "load_net",
    "loglik_abs_error",
    "nelder_mead",
    "nr_bandwidth",
    "permutation_median_test",
    "pi_objective",
    "pilot_bandwidth",
    "principal_submatrix",
    "scv_objective",
    "select_bandwidth",
    "shd",
    "truth_logpdf",
    "truth_sample",
    "ucv_objective",
]
