"""Two-layer quadratic-activation network and its KKT diagnostics.

The network computes ``out(x) = v . (W x)^2 + bias`` with elementwise
square.  Without the bias it is homogeneous of degree 3 in the parameters
(W and v each carry one power, the square a second power of W), which is
what makes margin normalization and the KKT fixed-point analysis
scale-free.  A network of width >= rank(quad) reproduces any zero-mean
quadratic rule exactly, so the Bayes discriminant is in its function
class.

Training is full-batch logistic-loss descent with exact analytic
gradients; either plain gradient steps or the adaptive-moment update.
Everything is deterministic per seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import matio
from .boc import QuadraticRule
from .errors import DimensionError, InputError, NonConvergenceError, WidthError
from .sampler import GmmDataset

OPTIMIZERS = ("plain-gradient", "adaptive-moment")

# Eigenvalues of quad/2 below this relative size do not get a hidden unit.
RANK_RTOL = 1e-12


@dataclass(frozen=True)
class QuadNetParams:
    """Network weights; immutable. ``w`` is hidden x input, ``v`` hidden."""

    w: np.ndarray
    v: np.ndarray
    bias: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64).ravel()
        if w.ndim != 2:
            raise DimensionError("w must be a d_h x d matrix")
        if v.size != w.shape[0]:
            raise DimensionError("v length must equal the hidden width")
        if w.shape[0] < 1:
            raise DimensionError("hidden width must be >= 1")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(v)) and np.isfinite(self.bias)):
            raise InputError("network parameters must be finite")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def width(self) -> int:
        return int(self.w.shape[0])

    @property
    def dim(self) -> int:
        return int(self.w.shape[1])

    def scaled(self, factor: float) -> "QuadNetParams":
        """Degree-3 parameter rescaling: bias scales with the cube."""
        return QuadNetParams(factor * self.w, factor * self.v, factor**3 * self.bias)

    def flat(self, *, include_bias: bool = True) -> np.ndarray:
        parts = [self.w.ravel(), self.v]
        if include_bias:
            parts.append(np.array([self.bias]))
        return np.concatenate(parts)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for full-batch training."""

    learning_rate: float = 1e-3
    steps: int = 1000
    init_scale: float = 1.0
    seed: int = 0
    use_bias: bool = True
    optimizer: str = "adaptive-moment"
    log_every: int = 50

    def __post_init__(self):
        if self.learning_rate <= 0.0:
            raise InputError("learning_rate must be positive")
        if self.steps < 1:
            raise InputError("steps must be >= 1")
        if self.init_scale <= 0.0:
            raise InputError("init_scale must be positive")
        if self.optimizer not in OPTIMIZERS:
            raise InputError(f"optimizer must be one of {OPTIMIZERS}")


@dataclass(frozen=True)
class KktReport:
    """Stationarity diagnostics of a margin-normalized network."""

    lambda_scale: float
    stationarity_residual: float
    margin_min: float
    margin_violations: int
    feasible: bool


def forward(p: QuadNetParams, x: np.ndarray) -> float | np.ndarray:
    """Network output for one d-vector or an N x d batch."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = np.atleast_2d(x)
    if xb.shape[1] != p.dim:
        raise DimensionError(f"input dim {xb.shape[1]} != network dim {p.dim}")
    h = xb @ p.w.T
    out = (h**2) @ p.v + p.bias
    return float(out[0]) if single else out


def from_rule(rule: QuadraticRule, d_h: int) -> QuadNetParams:
    """Construct a network that reproduces a zero-mean quadratic rule.

    Eigen-factor the quadratic term halved: each eigenpair above the rank
    threshold gets one hidden unit with ``w`` row sqrt(|eig|) times the
    eigenvector and ``v`` entry its sign; leftover rows are zero and the
    bias is half the rule constant.
    """
    if not rule.is_zero_mean():
        raise InputError("from_rule supports zero-mean rules only")
    d_h = int(d_h)
    vals, vecs = np.linalg.eigh(rule.quad / 2.0)
    vmax = float(np.max(np.abs(vals))) if vals.size else 0.0
    keep = np.abs(vals) > RANK_RTOL * vmax if vmax > 0.0 else np.zeros(vals.size, bool)
    rank = int(np.count_nonzero(keep))
    if d_h < rank:
        raise WidthError(f"need width >= rank {rank}, got {d_h}")
    w = np.zeros((d_h, rule.dim))
    v = np.zeros(d_h)
    idx = np.flatnonzero(keep)
    w[: idx.size] = np.sqrt(np.abs(vals[idx]))[:, None] * vecs[:, idx].T
    v[: idx.size] = np.sign(vals[idx])
    return QuadNetParams(w, v, rule.const / 2.0)


def loss_and_grad(p: QuadNetParams, dataset: GmmDataset, *, use_bias: bool = True):
    """Summed logistic loss and exact gradients on the full dataset.

    Uses the softplus form log(1 + exp(-m)) via logaddexp so large
    margins neither overflow nor lose the gradient signal.
    """
    x, y = dataset.samples, dataset.labels.astype(np.float64)
    if x.shape[1] != p.dim:
        raise DimensionError(f"dataset dim {x.shape[1]} != network dim {p.dim}")
    h = x @ p.w.T
    hsq = h**2
    out = hsq @ p.v + p.bias
    margins = y * out
    loss = float(np.sum(np.logaddexp(0.0, -margins)))
    # d/d_out of softplus(-y*out) = -y * sigmoid(-y*out); exp overflow on
    # well-classified points harmlessly saturates the factor to zero
    with np.errstate(over="ignore"):
        dout = -y / (1.0 + np.exp(margins))
    gv = hsq.T @ dout
    gw = 2.0 * p.v[:, None] * ((dout[:, None] * h).T @ x)
    gb = float(np.sum(dout)) if use_bias else 0.0
    return loss, QuadNetParams(gw, gv, gb)


def output_grad(p: QuadNetParams, x: np.ndarray, *, include_bias: bool = False):
    """Per-sample parameter gradient of the raw network output.

    Returns (gw, gv, gb) with leading sample axis; used by the KKT
    stationarity checks, where the gradient of the output (not the loss)
    appears.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    h = x @ p.w.T
    gv = h**2
    gw = 2.0 * p.v[None, :, None] * h[:, :, None] * x[:, None, :]
    if include_bias:
        return gw, gv, np.ones(x.shape[0])
    return gw, gv, None


def init_params(d: int, d_h: int, cfg: TrainConfig) -> QuadNetParams:
    """Gaussian init: w entries std init_scale/sqrt(d), v std init_scale/sqrt(d_h)."""
    rng = np.random.default_rng(int(cfg.seed) & (2**64 - 1))
    w = rng.standard_normal((d_h, d)) * (cfg.init_scale / np.sqrt(d))
    v = rng.standard_normal(d_h) * (cfg.init_scale / np.sqrt(d_h))
    return QuadNetParams(w, v, 0.0)


def train(dataset: GmmDataset, d_h: int, cfg: TrainConfig):
    """Full-batch descent for cfg.steps; returns (params, history).

    History records step, loss, training accuracy, and parameter norm at
    every ``log_every`` steps (and the final step).  Divergence (NaN or
    infinite loss) aborts, returning the last finite state with the
    history flagged.
    """
    p = init_params(dataset.dim, int(d_h), cfg)
    lr = cfg.learning_rate
    adam = cfg.optimizer == "adaptive-moment"
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    mom = QuadNetParams(np.zeros_like(p.w), np.zeros_like(p.v), 0.0)
    sec = QuadNetParams(np.zeros_like(p.w), np.zeros_like(p.v), 0.0)

    history = {"step": [], "loss": [], "accuracy": [], "param_norm": [], "diverged": False}

    def log(step: int, loss: float):
        out = forward(p, dataset.samples)
        acc = float(np.mean(np.sign(out) * dataset.labels > 0))
        history["step"].append(step)
        history["loss"].append(loss)
        history["accuracy"].append(acc)
        history["param_norm"].append(float(np.linalg.norm(p.flat(include_bias=cfg.use_bias))))

    last_good = p
    for step in range(1, cfg.steps + 1):
        loss, g = loss_and_grad(p, dataset, use_bias=cfg.use_bias)
        if not np.isfinite(loss):
            history["diverged"] = True
            p = last_good
            break
        last_good = p
        if step == 1 or step % cfg.log_every == 0:
            log(step - 1, loss)
        if adam:
            mom = QuadNetParams(
                beta1 * mom.w + (1 - beta1) * g.w,
                beta1 * mom.v + (1 - beta1) * g.v,
                beta1 * mom.bias + (1 - beta1) * g.bias,
            )
            sec = QuadNetParams(
                beta2 * sec.w + (1 - beta2) * g.w**2,
                beta2 * sec.v + (1 - beta2) * g.v**2,
                beta2 * sec.bias + (1 - beta2) * g.bias**2,
            )
            corr1 = 1 - beta1**step
            corr2 = 1 - beta2**step
            step_w = lr * (mom.w / corr1) / (np.sqrt(sec.w / corr2) + eps)
            step_v = lr * (mom.v / corr1) / (np.sqrt(sec.v / corr2) + eps)
            step_b = lr * (mom.bias / corr1) / (np.sqrt(sec.bias / corr2) + eps)
        else:
            step_w, step_v, step_b = lr * g.w, lr * g.v, lr * g.bias
        p = QuadNetParams(
            p.w - step_w,
            p.v - step_v,
            p.bias - step_b if cfg.use_bias else 0.0,
        )

    final_loss, _ = loss_and_grad(p, dataset, use_bias=cfg.use_bias)
    log(cfg.steps, float(final_loss))
    return p, history


def margin_normalize(p: QuadNetParams, dataset: GmmDataset) -> tuple[QuadNetParams, float]:
    """Rescale parameters so the minimum margin is exactly 1.

    Valid for separating parameters only; uses the degree-3 homogeneity
    (divide by the cube root of the minimum margin).
    """
    margins = dataset.labels * forward(p, dataset.samples)
    m_min = float(np.min(margins))
    if m_min <= 0.0:
        raise InputError("cannot margin-normalize non-separating parameters")
    return p.scaled(m_min ** (-1.0 / 3.0)), m_min


def _stationarity_direction(p: QuadNetParams, dataset: GmmDataset, *, include_bias: bool):
    """Mean label-weighted output gradient, flattened like params."""
    gw, gv, gb = output_grad(p, dataset.samples, include_bias=include_bias)
    y = dataset.labels.astype(np.float64)
    n = dataset.count
    parts = [
        np.tensordot(y, gw, axes=(0, 0)).ravel() / n,
        (gv.T @ y) / n,
    ]
    if include_bias:
        parts.append(np.array([float(y @ gb) / n]))
    return np.concatenate(parts)


def fit_lambda_scale(p: QuadNetParams, dataset: GmmDataset, *, include_bias: bool = False) -> float:
    """Least-squares scalar s so that params ~= (s/N) sum of y grad-out."""
    theta = p.flat(include_bias=include_bias)
    direction = _stationarity_direction(p, dataset, include_bias=include_bias)
    denom = float(direction @ direction)
    if denom == 0.0:
        raise InputError("zero stationarity direction; cannot fit lambda scale")
    return float(theta @ direction) / denom


def kkt_report(
    p: QuadNetParams,
    dataset: GmmDataset,
    lambda_scale: float | None = None,
    *,
    include_bias: bool = False,
) -> KktReport:
    """Margin-normalize, then measure the uniform-multiplier stationarity gap.

    With multipliers ``s/N`` for every sample, the residual is the
    relative norm of ``theta - (s/N) sum_a y_a grad out(x_a)``.  When
    ``lambda_scale`` is None the least-squares s is fitted first.
    Non-separating parameters yield an infeasible report with no
    normalization applied.
    """
    margins = dataset.labels * forward(p, dataset.samples)
    m_min = float(np.min(margins))
    if m_min <= 0.0:
        return KktReport(
            lambda_scale=float("nan"),
            stationarity_residual=float("inf"),
            margin_min=m_min,
            margin_violations=int(np.count_nonzero(margins < 1.0 - 1e-9)),
            feasible=False,
        )
    pn, _ = margin_normalize(p, dataset)
    margins_n = dataset.labels * forward(pn, dataset.samples)
    if lambda_scale is None:
        lambda_scale = fit_lambda_scale(pn, dataset, include_bias=include_bias)
    theta = pn.flat(include_bias=include_bias)
    direction = _stationarity_direction(pn, dataset, include_bias=include_bias)
    residual = float(
        np.linalg.norm(theta - lambda_scale * direction) / np.linalg.norm(theta)
    )
    return KktReport(
        lambda_scale=float(lambda_scale),
        stationarity_residual=residual,
        margin_min=float(np.min(margins_n)),
        margin_violations=int(np.count_nonzero(margins_n < 1.0 - 1e-9)),
        feasible=True,
    )


def kkt_map(p: QuadNetParams, dataset: GmmDataset, lambda_scale: float) -> QuadNetParams:
    """One application of the coupled stationarity equations (bias-free).

    v <- (s/N) sum_a y_a (W x_a)^2 and
    W <- (s/N) sum_a y_a 2 diag(v) (W x_a) x_a^T,
    i.e. each block replaced by its multiplier-weighted output gradient.
    """
    x, y = dataset.samples, dataset.labels.astype(np.float64)
    lam = lambda_scale / dataset.count
    h = x @ p.w.T
    v_new = lam * ((h**2).T @ y)
    w_new = lam * 2.0 * p.v[:, None] * ((y[:, None] * h).T @ x)
    return QuadNetParams(w_new, v_new, 0.0)


def kkt_fixed_point(
    dataset: GmmDataset,
    d_h: int,
    lambda_scale: float,
    seed: int,
    *,
    damping: float = 0.5,
    max_iter: int = 20_000,
    tol: float = 1e-8,
):
    """Solve the bias-free KKT equations by damped fixed-point iteration.

    The map is degree 2 in the parameters, so zero is always a (trivial)
    fixed point and naive iteration collapses or blows up by scale alone.
    The iteration therefore tracks the unit direction: damp toward the
    normalized map image, and recover the unique self-consistent scale at
    the end from the map's homogeneity (theta = F(theta) forces
    ||F(u)|| = 1/c on the unit direction u).

    Returns (params, converged, iterations).  Non-convergence returns the
    last iterate with converged=False.
    """
    d_h = int(d_h)
    rng = np.random.default_rng(int(seed) & (2**64 - 1))
    w = rng.standard_normal((d_h, dataset.dim)) / np.sqrt(dataset.dim)
    v = rng.standard_normal(d_h) / np.sqrt(d_h)
    u = QuadNetParams(w, v, 0.0)
    norm = np.linalg.norm(u.flat(include_bias=False))
    u = u.scaled(1.0 / norm)

    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        image = kkt_map(u, dataset, lambda_scale)
        img_norm = float(np.linalg.norm(image.flat(include_bias=False)))
        if img_norm == 0.0:
            raise NonConvergenceError("KKT map collapsed to the zero fixed point")
        blended = QuadNetParams(
            (1.0 - damping) * u.w + damping * image.w / img_norm,
            (1.0 - damping) * u.v + damping * image.v / img_norm,
            0.0,
        )
        new_norm = float(np.linalg.norm(blended.flat(include_bias=False)))
        u_next = blended.scaled(1.0 / new_norm)
        delta = float(
            np.linalg.norm(u_next.flat(include_bias=False) - u.flat(include_bias=False))
        )
        u = u_next
        if delta < tol:
            converged = True
            break

    image = kkt_map(u, dataset, lambda_scale)
    img_norm = float(np.linalg.norm(image.flat(include_bias=False)))
    theta = u.scaled(1.0 / img_norm)
    return theta, converged, iterations


def kkt_residual(p: QuadNetParams, dataset: GmmDataset, lambda_scale: float) -> float:
    """Relative self-consistency error of the coupled KKT equations."""
    image = kkt_map(p, dataset, lambda_scale)
    theta = p.flat(include_bias=False)
    return float(
        np.linalg.norm(image.flat(include_bias=False) - theta) / np.linalg.norm(theta)
    )


def save_checkpoint(prefix: str | Path, p: QuadNetParams, meta: dict | None = None) -> None:
    """Checkpoint the weights as BOCM blocks with a JSON sidecar."""
    prefix = Path(prefix)
    matio.write_bocm(prefix.with_suffix(".w.bocm"), p.w)
    matio.write_bocm(prefix.with_suffix(".v.bocm"), p.v.reshape(-1, 1))
    record = {"bias": p.bias, "width": p.width, "dim": p.dim}
    record.update(meta or {})
    prefix.with_suffix(".meta.json").write_text(json.dumps(record, sort_keys=True, indent=2))


def load_checkpoint(prefix: str | Path) -> QuadNetParams:
    prefix = Path(prefix)
    w = matio.read_bocm(prefix.with_suffix(".w.bocm"))
    v = matio.read_bocm(prefix.with_suffix(".v.bocm")).ravel()
    meta = json.loads(prefix.with_suffix(".meta.json").read_text())
    return QuadNetParams(w, v, float(meta["bias"]))
