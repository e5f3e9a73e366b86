"""Eigenstructure flip tests and spectral-gap classification grids.

A flip sweep composes hybrid covariances whose leading eigenvectors (or
eigenvalues) come from class 1 and the rest from class 2, sweeps the
threshold, and records the fraction of fresh samples a classifier calls
class A.  The flip point is where that fraction crosses the 0.5 majority
line.  Classifiers are pluggable: a Bayes rule, a trained quadratic
network, or verdicts produced by an external model on exported samples.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import matio
from .boc import QuadraticRule, build_rule, classify
from .covmodel import Basis, CovarianceModel, Spectrum, compose_flip, haar_orthogonal, powerlaw_spectrum
from .errors import DimensionError, InputError
from .quadnet import QuadNetParams, TrainConfig, forward, train
from .sampler import make_gmm_dataset, sample_gaussian
from .seeds import derive_seed

logger = logging.getLogger(__name__)

AXES = ("eigenvector", "eigenvalue")

# Grids are exhaustive up to this dimension, then thinned logarithmically.
DENSE_GRID_MAX_DIM = 128
SPARSE_GRID_POINTS = 64

# Relative eigenvalue floor applied to composed covariances before sampling.
PD_FLOOR_RTOL = 1e-12


@dataclass(frozen=True)
class FlipSweepResult:
    """Per-threshold class-A fractions and the detected flip point."""

    axis: str
    thresholds: np.ndarray
    fraction_class_a: np.ndarray
    n_valid: np.ndarray
    flip_point: int | None
    classifier_id: str
    seed: int

    def __post_init__(self):
        thresholds = np.asarray(self.thresholds, dtype=np.int64)
        if np.any(np.diff(thresholds) <= 0):
            raise InputError("thresholds must be strictly increasing")
        object.__setattr__(self, "thresholds", thresholds)
        object.__setattr__(
            self, "fraction_class_a", np.asarray(self.fraction_class_a, dtype=np.float64)
        )
        object.__setattr__(self, "n_valid", np.asarray(self.n_valid, dtype=np.int64))


@dataclass(frozen=True)
class AlphaGridResult:
    """Accuracy of trained networks across a spectral-exponent gap grid."""

    alpha: float
    delta_alpha_values: np.ndarray
    mean_accuracy: np.ndarray
    std_accuracy: np.ndarray
    runs: int
    boc_accuracy: np.ndarray = field(default=None)


def threshold_grid(d: int) -> np.ndarray:
    """All integers in [0, d] at desk scale, else log-spaced with endpoints."""
    d = int(d)
    if d <= DENSE_GRID_MAX_DIM:
        return np.arange(0, d + 1, dtype=np.int64)
    interior = np.unique(
        np.round(np.geomspace(1, d, SPARSE_GRID_POINTS - 1)).astype(np.int64)
    )
    return np.unique(np.concatenate([[0], interior, [d]]))


def boc_classifier(rule: QuadraticRule):
    """Verdict function of a Bayes rule: +1 where the discriminant is positive."""
    return lambda x: classify(rule, x)


def quadnet_classifier(params: QuadNetParams):
    """Verdict function of a quadratic network: +1 where the output is positive."""
    return lambda x: np.where(np.atleast_1d(forward(params, x)) > 0.0, 1, -1).astype(np.int64)


def _composed_sampler(model: CovarianceModel):
    """Sampling factors for a composed covariance, or None if unusable.

    The composed matrix is symmetrized, eigendecomposed, and floored at
    PD_FLOOR_RTOL of the top eigenvalue; the adjustment is logged.  A
    significantly negative spectrum marks the threshold invalid rather
    than fabricating data.
    """
    sigma = model.matrix()
    sym = 0.5 * (sigma + sigma.T)
    vals, vecs = np.linalg.eigh(sym)
    top = float(vals[-1])
    if top <= 0.0 or vals[0] < -1e-10 * top:
        return None
    floor = PD_FLOOR_RTOL * top
    n_floored = int(np.count_nonzero(vals < floor))
    if n_floored:
        logger.debug(
            "composed covariance floored %d eigenvalue(s); largest adjustment %.3e",
            n_floored,
            float(floor - vals[0]),
        )
        vals = np.maximum(vals, floor)
    return CovarianceModel(
        Spectrum(vals[::-1].copy()), Basis(vecs.T[::-1].copy(), tol=1e-8)
    )


def flip_sweep(
    c1: CovarianceModel,
    c2: CovarianceModel,
    axis: str,
    classifier,
    n_eval: int,
    seed: int,
    *,
    classifier_id: str = "custom",
    thresholds: np.ndarray | None = None,
    threads: int = 1,
) -> FlipSweepResult:
    """Sweep the flip threshold along one axis and record class-A fractions.

    The swept axis takes its first tau components from c1 and the rest
    from c2; the other axis is held fully at c1.  Each threshold samples
    ``n_eval`` points with a seed derived from (seed, tau), so serial and
    parallel execution agree bit-exactly.
    """
    if axis not in AXES:
        raise InputError(f"axis must be one of {AXES}, got {axis!r}")
    if c1.dim != c2.dim:
        raise DimensionError(f"dimension mismatch: {c1.dim} vs {c2.dim}")
    d = c1.dim
    taus = threshold_grid(d) if thresholds is None else np.asarray(thresholds, dtype=np.int64)

    def evaluate(tau: int) -> tuple[float, int]:
        if axis == "eigenvector":
            model = compose_flip(c1, c2, tau_lambda=d, tau_v=int(tau))
        else:
            model = compose_flip(c1, c2, tau_lambda=int(tau), tau_v=d)
        sampler_model = _composed_sampler(model)
        if sampler_model is None:
            return float("nan"), 0
        x = sample_gaussian(sampler_model, int(n_eval), derive_seed(seed, int(tau)))
        verdicts = np.asarray(classifier(x)).ravel()
        return float(np.mean(verdicts == 1)), int(verdicts.size)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            rows = list(pool.map(evaluate, taus))
    else:
        rows = [evaluate(t) for t in taus]
    fractions = np.array([r[0] for r in rows])
    n_valid = np.array([r[1] for r in rows], dtype=np.int64)

    result = FlipSweepResult(
        axis=axis,
        thresholds=taus,
        fraction_class_a=fractions,
        n_valid=n_valid,
        flip_point=None,
        classifier_id=classifier_id,
        seed=int(seed),
    )
    return replace(result, flip_point=find_flip_point(result))


def find_flip_point(result: FlipSweepResult) -> int | None:
    """Smallest threshold whose class-A fraction reaches the 0.5 majority.

    Invalid thresholds (NaN fraction) cannot cross; None when the sweep
    never reaches the line.
    """
    for tau, frac in zip(result.thresholds, result.fraction_class_a):
        if np.isfinite(frac) and frac >= 0.5:
            return int(tau)
    return None


def export_flip_samples(
    c1: CovarianceModel,
    c2: CovarianceModel,
    axis: str,
    n_eval: int,
    seed: int,
    outdir: str | Path,
    *,
    thresholds: np.ndarray | None = None,
) -> Path:
    """Write per-threshold sample matrices for an external classifier.

    Produces ``tau_<k>.samples.bocm`` per threshold plus an ``index.json``
    describing the sweep; an external model fills in matching
    ``tau_<k>.verdicts.csv`` files (rows ``index,label`` with labels +1/-1)
    which :func:`flip_sweep_from_verdicts` assembles into a result.
    """
    if axis not in AXES:
        raise InputError(f"axis must be one of {AXES}, got {axis!r}")
    d = c1.dim
    taus = threshold_grid(d) if thresholds is None else np.asarray(thresholds, dtype=np.int64)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    entries = []
    for tau in taus:
        if axis == "eigenvector":
            model = compose_flip(c1, c2, tau_lambda=d, tau_v=int(tau))
        else:
            model = compose_flip(c1, c2, tau_lambda=int(tau), tau_v=d)
        sampler_model = _composed_sampler(model)
        valid = sampler_model is not None
        if valid:
            x = sample_gaussian(sampler_model, int(n_eval), derive_seed(seed, int(tau)))
            matio.write_bocm(outdir / f"tau_{int(tau)}.samples.bocm", x)
        entries.append({"tau": int(tau), "valid": valid})
    index = {"axis": axis, "seed": int(seed), "n_eval": int(n_eval), "thresholds": entries}
    (outdir / "index.json").write_text(json.dumps(index, sort_keys=True, indent=2))
    return outdir


def flip_sweep_from_verdicts(sweep_dir: str | Path, *, classifier_id: str) -> FlipSweepResult:
    """Assemble a sweep result from externally produced verdict files."""
    sweep_dir = Path(sweep_dir)
    index = json.loads((sweep_dir / "index.json").read_text())
    taus, fractions, n_valid = [], [], []
    for entry in index["thresholds"]:
        tau = int(entry["tau"])
        taus.append(tau)
        path = sweep_dir / f"tau_{tau}.verdicts.csv"
        if not entry["valid"] or not path.exists():
            fractions.append(float("nan"))
            n_valid.append(0)
            continue
        labels = []
        for line in path.read_text().strip().splitlines():
            _, label = line.split(",")
            labels.append(int(label))
        if not all(lab in (-1, 1) for lab in labels):
            raise InputError(f"{path}: verdict labels must be +1 or -1")
        fractions.append(float(np.mean(np.array(labels) == 1)))
        n_valid.append(len(labels))
    result = FlipSweepResult(
        axis=index["axis"],
        thresholds=np.array(taus, dtype=np.int64),
        fraction_class_a=np.array(fractions),
        n_valid=np.array(n_valid, dtype=np.int64),
        flip_point=None,
        classifier_id=classifier_id,
        seed=int(index["seed"]),
    )
    return replace(result, flip_point=find_flip_point(result))


def alpha_grid(
    alpha: float,
    delta_grid,
    d: int,
    n_per_class: int,
    d_h: int,
    cfg: TrainConfig,
    runs: int,
    seed: int,
    *,
    n_test_per_class: int = 2000,
    threads: int = 1,
) -> AlphaGridResult:
    """Train networks across an exponent-gap grid of shared-basis pairs.

    For each gap value and run, both classes share one Haar basis and
    differ only in spectral exponent; the network trains on a fresh GMM
    dataset and is scored on held-out samples, with the Bayes rule scored
    on the same held-out set as the analytic ceiling.
    """
    if runs < 1:
        raise InputError("runs must be >= 1")
    deltas = np.asarray(list(delta_grid), dtype=np.float64)

    def one_run(i: int, r: int) -> tuple[float, float]:
        basis = haar_orthogonal(d, derive_seed(seed, i, r, 0))
        ca = CovarianceModel(powerlaw_spectrum(d, alpha), basis)
        cb = CovarianceModel(powerlaw_spectrum(d, alpha + deltas[i]), basis)
        dataset = make_gmm_dataset(ca, cb, n_per_class, derive_seed(seed, i, r, 1))
        run_cfg = TrainConfig(
            learning_rate=cfg.learning_rate,
            steps=cfg.steps,
            init_scale=cfg.init_scale,
            seed=derive_seed(seed, i, r, 2),
            use_bias=cfg.use_bias,
            optimizer=cfg.optimizer,
            log_every=cfg.log_every,
        )
        params, _ = train(dataset, d_h, run_cfg)
        test = make_gmm_dataset(ca, cb, n_test_per_class, derive_seed(seed, i, r, 3))
        out = forward(params, test.samples)
        net_acc = float(np.mean(np.sign(out) * test.labels > 0))
        rule = build_rule(ca, cb)
        verdicts = classify(rule, test.samples)
        rule_acc = float(np.mean(verdicts == test.labels))
        return net_acc, rule_acc

    tasks = [(i, r) for i in range(deltas.size) for r in range(runs)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            flat = list(pool.map(lambda t: one_run(*t), tasks))
    else:
        flat = [one_run(*t) for t in tasks]

    net = np.array([v[0] for v in flat]).reshape(deltas.size, runs)
    rule = np.array([v[1] for v in flat]).reshape(deltas.size, runs)
    std = net.std(axis=1, ddof=1) if runs >= 2 else np.zeros(deltas.size)
    return AlphaGridResult(
        alpha=float(alpha),
        delta_alpha_values=deltas,
        mean_accuracy=net.mean(axis=1),
        std_accuracy=std,
        runs=int(runs),
        boc_accuracy=rule.mean(axis=1),
    )
