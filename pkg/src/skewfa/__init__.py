"""Mixtures of canonical fundamental skew-t factor analyzers."""

from skewfa._backend import BACKEND
from skewfa.criteria import bic, entropy, icl
from skewfa.distributions import (
    CFUSTParams,
    TruncTMoments,
    cfusn_logpdf,
    cfust_logpdf,
    cfust_moments,
    mvn_logpdf,
    mvt_cdf,
    mvt_logpdf,
    sample_cfust,
    trunc_mvt_moments,
)
from skewfa.ecm import FitConfig, FitReport, SuffStats, cm_steps, e_step, fit, q_function
from skewfa.exceptions import (
    DegenerateComponentError,
    DomainError,
    FactorizationError,
    FitAbortedError,
    InitializationError,
    SkewFAError,
    UnderflowError,
)
from skewfa.initialization import InitStrategy, best_of_restarts, initialize
from skewfa.io import load_model, read_csv, save_model, write_csv
from skewfa.metrics import ami, ari, ccr
from skewfa.model import (
    ComponentParams,
    Dataset,
    Family,
    MixtureModel,
    component_logpdfs,
    count_params,
    model_logpdf,
    sample_mixture,
)
from skewfa.selection import SelectionGrid, grid_search

__version__ = "0.1.0"
