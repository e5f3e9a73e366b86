"""Bayes-optimal classification of overlapping Gaussian mixtures.

Numerical library and experiment harness: structured covariance models,
deterministic GMM sampling, closed-form quadratic decision rules and
their generalized chi-squared laws, a trainable quadratic two-layer
network with KKT diagnostics, and eigenstructure flip-test sweeps.
"""

from .covmodel import (
    Basis,
    CovarianceModel,
    Spectrum,
    compose_flip,
    eigendecompose,
    haar_orthogonal,
    ipr,
    orthogonality_error,
    powerlaw_model,
    powerlaw_spectrum,
)
from .sampler import GmmDataset, make_gmm_dataset, recolor, sample_gaussian
from .boc import (
    ClassExpectations,
    QuadraticRule,
    beta,
    boc_accuracy,
    build_rule,
    class_expectations,
    classify,
    diagonal_expectations,
    empirical_deviation,
    empirical_rule,
    rotated_expectation,
)
from .gchi2 import GChi2Params, analytic_accuracy, cdf, error_rates, gchi2_from_rule, pdf
from .quadnet import (
    KktReport,
    QuadNetParams,
    TrainConfig,
    forward,
    from_rule,
    kkt_fixed_point,
    kkt_report,
    loss_and_grad,
    train,
)
from .fliplab import AlphaGridResult, FlipSweepResult, alpha_grid, find_flip_point, flip_sweep

__version__ = "0.1.0"
