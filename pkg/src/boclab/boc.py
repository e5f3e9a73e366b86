"""Bayes-optimal quadratic decision rules for two-class Gaussian data.

The rule separating N(mu_a, Sigma_a) from N(mu_b, Sigma_b) is quadratic:

    discriminant(x) = 1/2 (x^T quad x - 2 lin^T x + const),

with ``quad = inv(Sigma_b) - inv(Sigma_a)``, ``lin = inv(Sigma_b) mu_b -
inv(Sigma_a) mu_a``, and ``const`` collecting the mean terms and the
log-determinant ratio.  Positive discriminant picks class A.

A global 1/2 prefactor is used consistently everywhere, including the
class expectations: the expectation formulas without it would contradict
the discriminant they are derived from (see README).

All determinants are log-eigenvalue sums (a raw determinant of a d=100
power-law covariance underflows), and inverses of model covariances go
through their factors so the algebra stays exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import gammaln

from . import matio
from .covmodel import CovarianceModel, Spectrum
from .errors import DimensionError, InputError, SingularMatrixError
from .sampler import sample_gaussian
from .seeds import class_b_seed

# Relative eigenvalue threshold below which an empirical covariance is
# treated as singular (rank-deficient at N <= d).
EMPIRICAL_EIG_RTOL = 1e-10


@dataclass(frozen=True)
class QuadraticRule:
    """Parameters of the quadratic discriminant; immutable."""

    quad: np.ndarray
    lin: np.ndarray
    const: float
    dim: int = field(init=False)

    def __post_init__(self):
        quad = np.asarray(self.quad, dtype=np.float64)
        lin = np.asarray(self.lin, dtype=np.float64).ravel()
        if quad.ndim != 2 or quad.shape[0] != quad.shape[1]:
            raise DimensionError(f"quadratic term must be square, got {quad.shape}")
        if lin.size != quad.shape[0]:
            raise DimensionError("linear term size must match the quadratic term")
        scale = float(np.max(np.abs(quad))) or 1.0
        if float(np.max(np.abs(quad - quad.T))) > 1e-10 * scale:
            raise InputError("quadratic term must be symmetric")
        object.__setattr__(self, "quad", 0.5 * (quad + quad.T))
        object.__setattr__(self, "lin", lin)
        object.__setattr__(self, "const", float(self.const))
        object.__setattr__(self, "dim", int(quad.shape[0]))

    def negate(self) -> "QuadraticRule":
        """Rule with classes swapped; flips the discriminant's sign."""
        return QuadraticRule(-self.quad, -self.lin, -self.const)

    def is_zero_mean(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.lin) <= tol))


@dataclass(frozen=True)
class ClassExpectations:
    """Population means of the discriminant under class A and class B."""

    beta_a: float
    beta_b: float


def build_rule(ca: CovarianceModel, cb: CovarianceModel) -> QuadraticRule:
    """Bayes rule for class A = ca versus class B = cb.

    Inverses and log-determinants come from the model factors, so the
    result is exact up to the eigenbasis products.
    """
    if ca.dim != cb.dim:
        raise DimensionError(f"dimension mismatch: {ca.dim} vs {cb.dim}")
    inv_a = ca.inverse_matrix()
    inv_b = cb.inverse_matrix()
    quad = inv_b - inv_a
    lin = inv_b @ cb.mean - inv_a @ ca.mean
    const = (
        float(cb.mean @ inv_b @ cb.mean)
        - float(ca.mean @ inv_a @ ca.mean)
        + cb.logdet()
        - ca.logdet()
    )
    return QuadraticRule(quad, lin, const)


def beta(rule: QuadraticRule, x: np.ndarray) -> float | np.ndarray:
    """Evaluate the discriminant; class A iff the value is positive.

    Accepts a single d-vector (returns a float) or an N x d batch
    (returns an N-vector).
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = np.atleast_2d(x)
    if xb.shape[1] != rule.dim:
        raise DimensionError(f"samples have dim {xb.shape[1]}, rule has {rule.dim}")
    vals = 0.5 * (
        np.einsum("ni,ni->n", xb @ rule.quad, xb)
        - 2.0 * (xb @ rule.lin)
        + rule.const
    )
    return float(vals[0]) if single else vals


def classify(rule: QuadraticRule, x: np.ndarray) -> np.ndarray:
    """Predicted labels on rows of x: +1 (class A) iff discriminant > 0."""
    vals = beta(rule, np.atleast_2d(np.asarray(x, dtype=np.float64)))
    return np.where(vals > 0.0, 1, -1).astype(np.int64)


def _require_zero_means(*models: CovarianceModel) -> None:
    for m in models:
        if np.any(m.mean != 0.0):
            raise InputError("closed-form expectations require zero-mean models")


def trace_inv_product(cb: CovarianceModel, ca: CovarianceModel) -> float:
    """Exact ``Tr(inv(Sigma_b) Sigma_a)`` through the model factors."""
    if ca.dim != cb.dim:
        raise DimensionError(f"dimension mismatch: {ca.dim} vs {cb.dim}")
    m = cb.basis.matrix @ ca.basis.matrix.T
    weights = (m**2) * ca.spectrum.values[None, :] / cb.spectrum.values[:, None]
    return float(np.sum(weights))


def class_expectations(ca: CovarianceModel, cb: CovarianceModel) -> ClassExpectations:
    """Population discriminant means under each class (zero-mean case).

    beta_a = 1/2 (Tr(inv(Sigma_b) Sigma_a) - d + const) and
    beta_b = 1/2 (d - Tr(inv(Sigma_a) Sigma_b) + const), with
    const the log-determinant ratio.
    """
    _require_zero_means(ca, cb)
    if ca.dim != cb.dim:
        raise DimensionError(f"dimension mismatch: {ca.dim} vs {cb.dim}")
    d = ca.dim
    const = cb.logdet() - ca.logdet()
    beta_a = 0.5 * (trace_inv_product(cb, ca) - d + const)
    beta_b = 0.5 * (d - trace_inv_product(ca, cb) + const)
    return ClassExpectations(beta_a, beta_b)


def harmonic_number(d: int, s: float) -> float:
    """Generalized harmonic number: sum of i^(-s) for i = 1..d."""
    d = int(d)
    if d < 1:
        raise DimensionError(f"d must be >= 1, got {d}")
    return float(np.sum(np.arange(1, d + 1, dtype=np.float64) ** (-s)))


def diagonal_expectations(d: int, alpha_a: float, delta_alpha: float) -> ClassExpectations:
    """Closed-form expectations for shared-basis power-law spectra.

    Depends only on the exponent gap; ``alpha_a`` is accepted for
    interface symmetry with the model constructors and cancels out.
    """
    del alpha_a
    d = int(d)
    log_gamma = float(gammaln(d + 1))
    beta_a = 0.5 * (harmonic_number(d, -delta_alpha) - d - delta_alpha * log_gamma)
    beta_b = 0.5 * (d - harmonic_number(d, delta_alpha) - delta_alpha * log_gamma)
    return ClassExpectations(beta_a, beta_b)


def rotated_expectation(spectrum: Spectrum) -> float:
    """Haar-averaged class-A expectation for a shared spectrum.

    Equals ``1/2 (Tr(inv(lam)) Tr(lam) / d - d)``; the class-B value is its
    negation.  For a power-law spectrum this is the product of the two
    generalized harmonic numbers over d, minus d, halved.
    """
    d = spectrum.dim
    return 0.5 * (spectrum.inv_trace() * spectrum.trace() / d - d)


def empirical_rule(xa: np.ndarray, xb: np.ndarray, ridge: float = 0.0) -> QuadraticRule:
    """Quadratic rule built from empirical second moments.

    Covariances are ``X^T X / N`` (zero-mean convention) plus an optional
    ridge; the rule is computed exactly from their symmetric
    eigendecompositions rather than by perturbative expansion.
    """
    xa = np.atleast_2d(np.asarray(xa, dtype=np.float64))
    xb = np.atleast_2d(np.asarray(xb, dtype=np.float64))
    if xa.shape[1] != xb.shape[1]:
        raise DimensionError("class sample matrices must share their dimension")
    if ridge < 0.0:
        raise InputError("ridge must be nonnegative")

    def moments(x: np.ndarray) -> tuple[np.ndarray, float]:
        sigma = x.T @ x / x.shape[0]
        if ridge > 0.0:
            sigma = sigma + ridge * np.eye(x.shape[1])
        vals, vecs = np.linalg.eigh(sigma)
        if vals[0] <= 0.0 or vals[0] <= EMPIRICAL_EIG_RTOL * vals[-1]:
            raise SingularMatrixError(
                "empirical covariance is singular; need N > d or ridge > 0"
            )
        inv = (vecs / vals[None, :]) @ vecs.T
        return inv, float(np.sum(np.log(vals)))

    inv_a, logdet_a = moments(xa)
    inv_b, logdet_b = moments(xb)
    return QuadraticRule(inv_b - inv_a, np.zeros(xa.shape[1]), logdet_b - logdet_a)


def empirical_deviation(pop: QuadraticRule, emp: QuadraticRule, x: np.ndarray) -> float:
    """Mean absolute gap between empirical and population discriminants."""
    if pop.dim != emp.dim:
        raise DimensionError("rules have mismatched dimensions")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return float(np.mean(np.abs(beta(emp, x) - beta(pop, x))))


def boc_accuracy(
    ca: CovarianceModel, cb: CovarianceModel, n_mc: int = 100_000, seed: int = 0
) -> float:
    """Monte-Carlo accuracy of the Bayes rule on fresh samples.

    Draws ``n_mc`` samples per class with the standard seed split, so the
    evaluation set is disjoint from any training set derived from a
    different seed.
    """
    rule = build_rule(ca, cb)
    n = int(n_mc)
    xa = sample_gaussian(ca, n, seed)
    xb = sample_gaussian(cb, n, class_b_seed(seed))
    hits_a = int(np.count_nonzero(beta(rule, xa) > 0.0))
    hits_b = int(np.count_nonzero(beta(rule, xb) <= 0.0))
    return (hits_a + hits_b) / (2.0 * n)


def save_rule(prefix: str | Path, rule: QuadraticRule, provenance: dict | None = None) -> None:
    """Serialize a rule as BOCM blocks plus a JSON metadata sidecar."""
    prefix = Path(prefix)
    matio.write_bocm(prefix.with_suffix(".quad.bocm"), rule.quad)
    matio.write_bocm(prefix.with_suffix(".lin.bocm"), rule.lin.reshape(-1, 1))
    meta = {
        "dim": rule.dim,
        "const": rule.const,
        "provenance": provenance or {},
    }
    prefix.with_suffix(".meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2))


def load_rule(prefix: str | Path) -> QuadraticRule:
    """Load a rule saved by :func:`save_rule`."""
    prefix = Path(prefix)
    quad = matio.read_bocm(prefix.with_suffix(".quad.bocm"))
    lin = matio.read_bocm(prefix.with_suffix(".lin.bocm")).ravel()
    meta = json.loads(prefix.with_suffix(".meta.json").read_text())
    return QuadraticRule(quad, lin, float(meta["const"]))
