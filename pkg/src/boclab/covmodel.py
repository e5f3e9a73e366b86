"""Structured covariance models.

A class covariance is kept in factored form ``Sigma = B^T diag(lam) B``
with the rows of ``B`` the eigenvectors and ``lam`` the eigenvalues.  The
factored form is what every downstream computation wants: exact inverses,
symmetric square roots, and log-determinants all reduce to operations on
the spectrum, and flip-test composition is index-wise surgery on the
factors.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, InputError, SingularMatrixError

# Exactly-orthogonal bases (Haar draws, identity, eigh output) sit far below
# this; flip-composed bases are admitted with an explicitly relaxed bound.
STRICT_ORTHO_TOL = 1e-10

# Relative eigenvalue gap below which eigenvector identity is basis-dependent.
DEGENERACY_RTOL = 1e-12


def orthogonality_error(v: np.ndarray) -> float:
    """Per-dimension Frobenius deviation of V from orthogonality.

    Returns ``||V^T V - I||_F / d``.  The max over flip thresholds quoted
    for composed bases is taken by the caller sweeping thresholds.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] != v.shape[1]:
        raise DimensionError(f"orthogonality_error needs a square matrix, got {v.shape}")
    d = v.shape[0]
    return float(np.linalg.norm(v.T @ v - np.eye(d), ord="fro") / d)


def ipr(v: np.ndarray) -> float:
    """Inverse participation ratio of a vector, after unit normalization.

    ``(sum_n |v_n|^4)^{-1}``: 1 for a one-hot vector, d for a uniform one.
    """
    v = np.asarray(v, dtype=np.float64).ravel()
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise InputError("ipr of the zero vector is undefined")
    u = v / norm
    return float(1.0 / np.sum(u**4))


@dataclass(frozen=True)
class Spectrum:
    """Positive eigenvalues, descending unless explicitly relaxed."""

    values: np.ndarray
    dim: int = field(init=False)

    def __init__(self, values, *, require_sorted: bool = True):
        vals = np.asarray(values, dtype=np.float64).ravel().copy()
        if vals.size == 0:
            raise DimensionError("spectrum must have at least one eigenvalue")
        if not np.all(vals > 0.0):
            raise InputError("spectrum eigenvalues must be strictly positive")
        if require_sorted and np.any(np.diff(vals) > 0.0):
            raise InputError("spectrum must be sorted in descending order")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "dim", int(vals.size))

    def trace(self) -> float:
        return float(np.sum(self.values))

    def inv_trace(self) -> float:
        return float(np.sum(1.0 / self.values))

    def logdet(self) -> float:
        return float(np.sum(np.log(self.values)))


@dataclass(frozen=True)
class Basis:
    """Square matrix whose rows are eigenvectors.

    Exactly-orthogonal bases must pass the strict tolerance; flip-composed
    bases are constructed with the relaxed per-sweep bound instead.
    """

    matrix: np.ndarray
    dim: int = field(init=False)

    def __init__(self, matrix, *, tol: float = STRICT_ORTHO_TOL):
        m = np.asarray(matrix, dtype=np.float64).copy()
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"basis must be square, got shape {m.shape}")
        err = orthogonality_error(m)
        if err > tol:
            raise InputError(
                f"basis orthogonality error {err:.3e} exceeds tolerance {tol:.3e}"
            )
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "dim", int(m.shape[0]))

    @classmethod
    def identity(cls, d: int) -> "Basis":
        return cls(np.eye(int(d)))


@dataclass(frozen=True)
class CovarianceModel:
    """Covariance in factored form plus a mean vector (zero by default)."""

    spectrum: Spectrum
    basis: Basis
    mean: np.ndarray = None

    def __post_init__(self):
        if self.spectrum.dim != self.basis.dim:
            raise DimensionError(
                f"spectrum dim {self.spectrum.dim} != basis dim {self.basis.dim}"
            )
        mean = self.mean
        if mean is None:
            mean = np.zeros(self.dim)
        mean = np.asarray(mean, dtype=np.float64).ravel().copy()
        if mean.size != self.dim:
            raise DimensionError(f"mean has size {mean.size}, expected {self.dim}")
        mean.flags.writeable = False
        object.__setattr__(self, "mean", mean)

    @property
    def dim(self) -> int:
        return self.spectrum.dim

    def matrix(self) -> np.ndarray:
        """Reconstruct ``Sigma = B^T diag(lam) B``."""
        b = self.basis.matrix
        return b.T @ (self.spectrum.values[:, None] * b)

    def inverse_matrix(self, *, floor: float = 0.0) -> np.ndarray:
        """Exact inverse through the factors: ``B^T diag(1/lam) B``.

        ``floor`` is a relative eigenvalue floor; with the default 0 the
        inverse reproduces the exact algebra of the factored model.
        """
        lam = self._floored(floor)
        b = self.basis.matrix
        return b.T @ (b / lam[:, None])

    def sqrt_matrix(self) -> np.ndarray:
        """Symmetric square root ``B^T diag(sqrt(lam)) B``."""
        b = self.basis.matrix
        return b.T @ (np.sqrt(self.spectrum.values)[:, None] * b)

    def logdet(self) -> float:
        return self.spectrum.logdet()

    def _floored(self, floor: float) -> np.ndarray:
        lam = self.spectrum.values
        if floor < 0.0:
            raise InputError("eigenvalue floor must be nonnegative")
        if floor == 0.0:
            return lam
        cutoff = floor * float(np.max(lam))
        if np.all(lam >= cutoff):
            return lam
        return np.maximum(lam, cutoff)

    def with_zero_mean(self) -> "CovarianceModel":
        return CovarianceModel(self.spectrum, self.basis)


def powerlaw_spectrum(d: int, alpha: float) -> Spectrum:
    """Power-law spectrum ``lam_i = i^(-1-alpha)`` for 1-based index i.

    alpha = -1 gives a flat spectrum; alpha < -1 would produce ascending
    eigenvalues and is rejected.
    """
    d = int(d)
    if d < 1:
        raise DimensionError(f"dimension must be >= 1, got {d}")
    if alpha < -1.0:
        raise InputError(f"alpha must be >= -1 for a descending spectrum, got {alpha}")
    idx = np.arange(1, d + 1, dtype=np.float64)
    return Spectrum(idx ** (-1.0 - alpha))


def haar_orthogonal(d: int, seed: int) -> Basis:
    """Haar-distributed random orthogonal matrix, deterministic per seed.

    QR decomposition of an i.i.d. standard-Gaussian matrix with each Q
    column rescaled by sign(R_ii); without the sign fix QR output is not
    Haar distributed (Mezzadri's construction).
    """
    d = int(d)
    if d < 1:
        raise DimensionError(f"dimension must be >= 1, got {d}")
    rng = np.random.default_rng(int(seed) & (2**64 - 1))
    g = rng.standard_normal((d, d))
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diag(r))
    signs[signs == 0.0] = 1.0
    return Basis(q * signs[None, :])


def powerlaw_model(
    d: int, alpha: float, *, basis: Basis | None = None, seed: int | None = None
) -> CovarianceModel:
    """Convenience constructor: power-law spectrum with a given or Haar basis."""
    spec = powerlaw_spectrum(d, alpha)
    if basis is None:
        basis = Basis.identity(d) if seed is None else haar_orthogonal(d, seed)
    return CovarianceModel(spec, basis)


def compose_flip(
    c1: CovarianceModel,
    c2: CovarianceModel,
    tau_lambda: int,
    tau_v: int,
    *,
    reorthogonalize: bool = False,
) -> CovarianceModel:
    """Hybrid covariance: leading components from c1, the rest from c2.

    The first ``tau_v`` eigenvectors and first ``tau_lambda`` eigenvalues
    (descending order) come from c1, the remainder from c2; the result has
    zero mean.  The composed basis is NOT re-orthogonalized by default
    (its deviation is what ``orthogonality_error`` measures); pass
    ``reorthogonalize=True`` for the polar-projection variant.
    """
    if c1.dim != c2.dim:
        raise DimensionError(f"dimension mismatch: {c1.dim} vs {c2.dim}")
    d = c1.dim
    for name, tau in (("tau_lambda", tau_lambda), ("tau_v", tau_v)):
        if not 0 <= int(tau) <= d:
            raise InputError(f"{name}={tau} outside [0, {d}]")
    tau_lambda = int(tau_lambda)
    tau_v = int(tau_v)

    for label, model in (("c1", c1), ("c2", c2)):
        gaps = -np.diff(model.spectrum.values)
        if gaps.size and np.min(gaps) <= DEGENERACY_RTOL * model.spectrum.values[0]:
            warnings.warn(
                f"{label} has near-degenerate eigenvalues; index-wise eigenvector "
                "identity is basis-dependent",
                stacklevel=2,
            )

    lam = np.concatenate(
        [c1.spectrum.values[:tau_lambda], c2.spectrum.values[tau_lambda:]]
    )
    vmat = np.vstack([c1.basis.matrix[:tau_v], c2.basis.matrix[tau_v:]])
    if reorthogonalize:
        u, _, vt = np.linalg.svd(vmat)
        vmat = u @ vt
    # Index-wise mixing of two descending spectra need not stay monotone,
    # so the composed spectrum is built with sortedness relaxed.
    spec = Spectrum(lam, require_sorted=False)
    basis = Basis(vmat, tol=np.inf if not reorthogonalize else STRICT_ORTHO_TOL)
    return CovarianceModel(spec, basis)


def eigendecompose(sigma: np.ndarray, *, min_eig_rtol: float = 0.0) -> CovarianceModel:
    """Factor a symmetric positive-definite matrix into a CovarianceModel.

    Eigenvalues are sorted descending with a stable sort so degenerate
    ties keep LAPACK's order.  Raises SingularMatrixError when the
    smallest eigenvalue falls at or below ``min_eig_rtol * max``.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise DimensionError(f"expected a square matrix, got {sigma.shape}")
    sym = 0.5 * (sigma + sigma.T)
    vals, vecs = np.linalg.eigh(sym)
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    vecs = vecs[:, order]
    if vals[-1] <= min_eig_rtol * max(vals[0], 0.0) or vals[-1] <= 0.0:
        raise SingularMatrixError(
            f"matrix is not positive definite: min eigenvalue {vals[-1]:.3e}"
        )
    return CovarianceModel(Spectrum(vals), Basis(vecs.T))
