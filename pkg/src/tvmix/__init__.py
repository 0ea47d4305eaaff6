"""Time-varying two-component Gaussian-Cauchy mixture models.

Four model variants of increasing structure on the per-interval Gaussian
weight: independent per-interval mixtures, shared components with free
weights, weights tied to exogenous predictors through a logistic link, and
latent AR(1)-correlated logit-weights estimated by Monte Carlo EM. Each comes
with a functional fit (``fit_independent``, ``fit_shared``, ``fit_logistic``,
``fit_mcem``) and a scikit-learn style estimator class.
"""

from .distributions import (
    CauchyParams,
    GaussianParams,
    MixtureParams,
    cauchy_logpdf,
    cauchy_pdf,
    gaussian_logpdf,
    gaussian_pdf,
    mixture_cdf,
    mixture_logpdf,
    mixture_pdf,
    responsibilities,
    sample_mixture,
)
from .em import (
    EmConfig,
    FitResult,
    SharedMixtureParams,
    em_step,
    fit_independent,
    fit_shared,
    fit_single_mixture,
    fit_weighted_cauchy,
    init_estimates,
    observed_loglik,
)
from .estimators import (
    AutocorrelatedWeightMixture,
    IndependentIntervalMixture,
    LogisticWeightMixture,
    SharedParameterMixture,
)
from .exceptions import (
    DataError,
    DegenerateDataError,
    NumericalError,
    TooFewObservationsError,
)
from .io import (
    MacroPanel,
    PriceSeries,
    align_macro,
    group_by_interval,
    log_returns,
    read_macro_csv,
    read_price_csv,
)
from .logistic import (
    LogisticMixtureParams,
    fisher_std_errors,
    fit_fractional_logit,
    fit_logistic,
    logistic_weights,
    predict_weights,
)
from .mcem import (
    Ar1Params,
    ArLogisticMixtureParams,
    McemConfig,
    McmcChain,
    ar1_covariance,
    fit_mcem,
    gibbs_conditional_logdensity,
    log_weight_prior,
    logistic_refit_check,
    metropolis_within_gibbs,
)
from .risk import EXPECTED_SHORTFALL_REFUSAL, mixture_quantile, var_report
from .series import ExogenousMatrix, IntervalSeries, WeightSeries
from .simulate import (
    SimDesign,
    SimSummary,
    default_weight_schedule,
    design_from_dict,
    generate,
    run_replications,
    train_test_weight_eval,
)

__version__ = "0.1.0"
