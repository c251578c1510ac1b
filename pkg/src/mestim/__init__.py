"""M-estimation for distributional regression under triangular-array designs.

Densities and samplers for GEV, generalized Pareto, Frechet and Normal
families; covariate designs and links; log and energy scoring rules; a
box-constrained multistart maximizer for sample-average criteria; and
heteroscedastic block-maxima tools with a Frechet regression fitter.
"""
from .blockmax import (
    BlockMaxRow,
    FrechetFit,
    TailModel,
    check_doa_uniform,
    check_min_maxima_divergence,
    fit_frechet,
    frechet_loglik,
    hetero_cdf,
    median_scaling,
    pareto_baseline,
    sample_block_maxima,
)
from .designs import (
    LINKS,
    UNIFORM,
    CovariateDesign,
    DesignRow,
    LinkError,
    LinkSpec,
    check_identifiability,
    generate_row,
    uniform_design,
)
from .distributions import FRECHET, GEV, GP, NORMAL, POINT_MASS, Discrete, DomainError, Family, get_family, point_mass
from .estimator import BoxDomain, Criterion, FitResult, MaximizeConfig, fit_mle, fit_optimum_score, maximize
from .scoring import EnergyScore, LogScore, energy_score, make_rule, propriety_gap, propriety_sweep
from .streams import make_stream

__version__ = "0.1.0"
