"""Bayesian GLM toolkit for auditing grader behaviour in LLM evaluations.

Fits cumulative-logit score models and binary-choice preference models with a
built-in gradient MCMC sampler, compares them by predictive fit, and reports
bias, agreement, and scale-calibration analyses.
"""

from .analysis import (
    AgreementReport,
    AlphaMetric,
    CalibrationReport,
    ContrastSpec,
    RopeVerdict,
    alpha_posterior,
    contrast,
    cutpoint_report,
    krippendorff_alpha,
    posterior_predict,
    rope_check,
    summarize,
    transitivity_check,
)
from .compare import compare_models, evaluate_model, pointwise_loglik, psis_loo, waic
from .data import (
    Dataset,
    FactorTable,
    GradeRecord,
    GraderType,
    PairwiseRecord,
    load_pairwise,
    load_scores,
    standardize_length_diff,
)
from .design import (
    CodingScheme,
    Likelihood,
    ModelSpec,
    ParameterVector,
    Term,
    effect_code,
    index_code,
    linear_predictor,
    preset,
)
from .inference import PosteriorDraws, SamplerConfig, ess, rhat, sample
from .likelihoods import (
    bernoulli_logit_logpmf,
    compile_model,
    cutpoints_from_unconstrained,
    joint_log_density,
    ordered_logistic_logpmf,
    prior_logpdf,
)
from .simulate import ScenarioConfig, default_scenario, simulate

__version__ = "0.1.0"
