"""Deterministic Gaussian and GMM sampling, plus whitening/recoloring.

Samples are generated through the model factors, ``x = mu + B^T sqrt(lam) z``
with ``z`` standard normal, so the same eigendecomposition serves sampling,
recoloring, and the symmetric square roots used elsewhere.  Every function
is pure given its seed: identical inputs give bit-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .covmodel import CovarianceModel
from .errors import DimensionError, InputError, SingularMatrixError
from .seeds import class_b_seed, derive_seed

# Recorded in run metadata: numpy's Generator draws normals with the
# ziggurat algorithm on top of PCG64.
NORMAL_METHOD = "numpy-pcg64-ziggurat"

# Sub-stream index for the label interleaving of make_gmm_dataset.
_SHUFFLE_STREAM = 2


@dataclass(frozen=True)
class GmmDataset:
    """Labeled samples from a two-class GMM; +1 is class A, -1 class B."""

    samples: np.ndarray
    labels: np.ndarray
    dim: int = field(init=False)
    count: int = field(init=False)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64).ravel()
        if samples.ndim != 2:
            raise DimensionError("samples must be an N x d matrix")
        if labels.size != samples.shape[0]:
            raise DimensionError("labels length must match the number of samples")
        if not np.all(np.isin(labels, (-1, 1))):
            raise InputError("labels must be +1 or -1")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "dim", int(samples.shape[1]))
        object.__setattr__(self, "count", int(samples.shape[0]))

    def class_a(self) -> np.ndarray:
        return self.samples[self.labels == 1]

    def class_b(self) -> np.ndarray:
        return self.samples[self.labels == -1]


def sample_gaussian(c: CovarianceModel, n: int, seed: int) -> np.ndarray:
    """Draw n i.i.d. rows from N(mean, Sigma), deterministic per seed."""
    n = int(n)
    if n < 1:
        raise InputError(f"sample count must be >= 1, got {n}")
    rng = np.random.default_rng(int(seed) & (2**64 - 1))
    z = rng.standard_normal((n, c.dim))
    # Row form of x = mu + B^T sqrt(lam) z.
    transform = np.sqrt(c.spectrum.values)[:, None] * c.basis.matrix
    return c.mean[None, :] + z @ transform


def make_gmm_dataset(
    ca: CovarianceModel, cb: CovarianceModel, n_per_class: int, seed: int
) -> GmmDataset:
    """Balanced two-class dataset with a deterministic label interleaving.

    Class A draws with ``seed`` itself, class B with the documented XOR
    seed; rows of each class keep their sampling order, and only which
    positions hold A-rows is randomized.  The A submatrix of the result is
    therefore exactly ``sample_gaussian(ca, n_per_class, seed)``.
    """
    if ca.dim != cb.dim:
        raise DimensionError(f"dimension mismatch: {ca.dim} vs {cb.dim}")
    n = int(n_per_class)
    if n < 1:
        raise InputError(f"n_per_class must be >= 1, got {n}")
    xa = sample_gaussian(ca, n, seed)
    xb = sample_gaussian(cb, n, class_b_seed(seed))

    shuffle_rng = np.random.default_rng(derive_seed(seed, _SHUFFLE_STREAM))
    perm = shuffle_rng.permutation(2 * n)
    a_positions = np.sort(perm[:n])

    samples = np.empty((2 * n, ca.dim))
    labels = np.full(2 * n, -1, dtype=np.int64)
    labels[a_positions] = 1
    samples[labels == 1] = xa
    samples[labels == -1] = xb
    return GmmDataset(samples, labels)


def recolor_transform(c_src: CovarianceModel, c_tgt: CovarianceModel, *, floor: float = 0.0) -> np.ndarray:
    """Whiten-then-color map ``T = B_tgt^T sqrt(lam_tgt) lam_src^(-1/2) B_src``.

    For exact source-covariance data, ``T Sigma_src T^T = Sigma_tgt``.
    """
    if c_src.dim != c_tgt.dim:
        raise DimensionError(f"dimension mismatch: {c_src.dim} vs {c_tgt.dim}")
    lam_src = c_src.spectrum.values
    if floor > 0.0:
        cutoff = floor * float(np.max(lam_src))
        if np.any(lam_src < cutoff):
            raise SingularMatrixError(
                "source covariance has eigenvalues below the configured floor"
            )
    white = c_src.basis.matrix / np.sqrt(lam_src)[:, None]
    color = np.sqrt(c_tgt.spectrum.values)[:, None] * c_tgt.basis.matrix
    return color.T @ white


def recolor(
    x: np.ndarray,
    c_src: CovarianceModel,
    c_tgt: CovarianceModel,
    *,
    center: str = "model",
    floor: float = 0.0,
) -> np.ndarray:
    """Map rows of x from the source covariance model to the target one.

    Rows are centered with the source model mean (``center="model"``, the
    default, matching the zero-mean convention) or the empirical column
    mean (``center="empirical"``, for real data), pushed through the
    whiten/color transform, and shifted to the target mean.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != c_src.dim:
        raise DimensionError(f"samples have dim {x.shape[1]}, model has {c_src.dim}")
    if center == "model":
        mu = c_src.mean
    elif center == "empirical":
        mu = x.mean(axis=0)
    else:
        raise InputError(f"center must be 'model' or 'empirical', got {center!r}")
    t = recolor_transform(c_src, c_tgt, floor=floor)
    return (x - mu[None, :]) @ t.T + c_tgt.mean[None, :]
