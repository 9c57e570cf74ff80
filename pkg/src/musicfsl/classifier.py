"""Linear head over l2-normalized features, its losses, and a full-batch
SGD trainer.

The head computes `W @ l2_normalize(x) (+ b)` and turns scores into a
probability vector with a masked softmax: excluded classes carry probability
exactly zero and the softmax is taken over admissible classes only.

Three losses are supported, all differentiated analytically w.r.t. the
logits of the admissible classes (gradients are zero on excluded entries):

    cross-entropy        -log p[y]
    negative CE          -log(1 - p[ybar]),   "not class ybar"
    entropy penalty      -sum_k p_k log p_k,  sharpens the distribution

A probability floor EPS guards the logs against p[y] = 0 and p[ybar] = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Floor inside log terms; prevents the -log(1-p) singularity at p=1 and
# -log(p) at p=0.
EPS = 1e-12

# Norms below this are left unnormalized rather than divided to infinity.
_NORM_FLOOR = 1e-12

__all__ = [
    "EPS",
    "TrainingError",
    "ClassifierParams",
    "ProbVector",
    "TrainSpec",
    "LossTerm",
    "l2_normalize",
    "l2_normalize_rows",
    "init_params",
    "logits",
    "logits_rows",
    "masked_softmax",
    "masked_softmax_rows",
    "ce_loss_grad",
    "negce_loss_grad",
    "entropy_loss_grad",
    "sgd_train",
]


class TrainingError(RuntimeError):
    """Objective became non-finite; carries the offending step index."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


@dataclass
class ClassifierParams:
    """Weights (and optional bias) of the c-way linear head."""

    weights: np.ndarray  # (c, d)
    bias: np.ndarray | None = None  # (c,) or None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ValueError(f"weights must be 2-D, got shape {self.weights.shape}")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights contain non-finite values")
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=np.float64)
            if self.bias.shape != (self.weights.shape[0],):
                raise ValueError(
                    f"bias shape {self.bias.shape} does not match "
                    f"{self.weights.shape[0]} classes"
                )
            if not np.all(np.isfinite(self.bias)):
                raise ValueError("bias contains non-finite values")

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "ClassifierParams":
        return ClassifierParams(
            self.weights.copy(), None if self.bias is None else self.bias.copy()
        )


@dataclass
class ProbVector:
    """Probabilities on the simplex with an admissibility mask.

    Entries where `mask` is False are exactly zero; admissible entries sum
    to one.
    """

    probs: np.ndarray  # (c,)
    mask: np.ndarray  # (c,) bool

    def validate(self, tol: float = 1e-9) -> None:
        if self.probs.shape != self.mask.shape:
            raise ValueError("probs and mask shapes differ")
        if np.any(self.probs[~self.mask] != 0.0):
            raise ValueError("excluded classes must carry probability exactly 0")
        if np.any(self.probs < 0):
            raise ValueError("negative probability")
        if abs(self.probs.sum() - 1.0) > tol:
            raise ValueError(f"probabilities sum to {self.probs.sum()}, not 1")

    @property
    def num_admissible(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True)
class TrainSpec:
    """Full-batch SGD-with-momentum schedule for one training stage.

    The default learning rate is deliberately large for a full-batch
    regime: stages must drive the softmax confident enough that late
    exclusion rounds (two or three admissible classes left) can still
    clear the reject threshold.
    """

    steps: int = 100
    learning_rate: float = 0.1
    momentum: float = 0.9

    def validate(self) -> None:
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """Scale `v` to unit Euclidean norm; near-zero vectors pass unchanged."""
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot normalize non-finite vector")
    norm = np.linalg.norm(v)
    if norm < _NORM_FLOOR:
        return v.copy()
    return v / norm


def l2_normalize_rows(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot normalize non-finite rows")
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    safe = np.where(norms < _NORM_FLOOR, 1.0, norms)
    return np.where(norms < _NORM_FLOOR, x, x / safe)


def init_params(
    num_classes: int,
    dim: int,
    seed: int = 0,
    std: float = 0.01,
    with_bias: bool = False,
) -> ClassifierParams:
    """Seeded Gaussian weight init (std 0.01 by default), zero bias."""
    rng = np.random.default_rng(seed & 0xFFFF_FFFF_FFFF_FFFF)
    weights = rng.standard_normal((num_classes, dim)) * std
    bias = np.zeros(num_classes) if with_bias else None
    return ClassifierParams(weights, bias)


def logits(params: ClassifierParams, x: np.ndarray) -> np.ndarray:
    """Scores `W @ l2_normalize(x) (+ b)` for one feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.dim,):
        raise ValueError(f"expected feature of shape ({params.dim},), got {x.shape}")
    z = params.weights @ l2_normalize(x)
    if params.bias is not None:
        z = z + params.bias
    return z


def logits_rows(params: ClassifierParams, x: np.ndarray) -> np.ndarray:
    """Batched scores; rows of `x` are feature vectors."""
    if x.shape[1] != params.dim:
        raise ValueError(f"expected features of dim {params.dim}, got {x.shape[1]}")
    z = l2_normalize_rows(x) @ params.weights.T
    if params.bias is not None:
        z = z + params.bias
    return z


def _normalized_logits_rows(params: ClassifierParams, xn: np.ndarray) -> np.ndarray:
    # xn already row-normalized; used by the trainer to skip renormalizing
    # the fixed sample sets every step.
    z = xn @ params.weights.T
    if params.bias is not None:
        z = z + params.bias
    return z


def masked_softmax(z: np.ndarray, mask: np.ndarray) -> ProbVector:
    """Softmax over admissible entries only, exact zeros elsewhere."""
    z = np.asarray(z, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if z.shape != mask.shape or z.ndim != 1:
        raise ValueError(f"logits {z.shape} and mask {mask.shape} must be equal 1-D")
    if not mask.any():
        raise ValueError("mask admits no classes")
    shifted = np.where(mask, z, -np.inf)
    e = np.exp(shifted - shifted.max())  # max-subtraction for stability
    return ProbVector(probs=e / e.sum(), mask=mask)


def masked_softmax_rows(z: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Row-wise masked softmax; returns the (n, c) probability array."""
    if not mask.any(axis=1).all():
        raise ValueError("every row needs at least one admissible class")
    shifted = np.where(mask, z, -np.inf)
    e = np.exp(shifted - shifted.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def ce_loss_grad(p: ProbVector, y: int) -> tuple[float, np.ndarray]:
    """Cross-entropy -log p[y] and its gradient w.r.t. the logits.

    Gradient over admissible entries is `p - onehot(y)`; excluded entries
    are zero.
    """
    if not p.mask[y]:
        raise ValueError(f"target class {y} is excluded")
    loss = -np.log(max(p.probs[y], EPS))
    grad = p.probs.copy()
    grad[y] -= 1.0
    grad[~p.mask] = 0.0
    return float(loss), grad


def negce_loss_grad(p: ProbVector, ybar: int) -> tuple[float, np.ndarray]:
    """Negative-label loss -log(1 - p[ybar]) and its logit gradient.

    Gradient over admissible entries is
    `(p[ybar] / (1 - p[ybar])) * (onehot(ybar) - p)`.
    """
    if not p.mask[ybar]:
        raise ValueError(f"complementary class {ybar} is excluded")
    q = p.probs[ybar]
    loss = -np.log(max(1.0 - q, EPS))
    coef = q / max(1.0 - q, EPS)
    grad = -coef * p.probs
    grad[ybar] += coef
    grad[~p.mask] = 0.0
    return float(loss), grad


def entropy_loss_grad(p: ProbVector) -> tuple[float, np.ndarray]:
    """Shannon entropy of `p` (0 log 0 := 0) and its logit gradient.

    For the softmax composition the gradient is `-p_k (log p_k + H(p))`,
    which vanishes at the uniform distribution.
    """
    probs = p.probs
    plogp = np.where(probs > 0, probs * np.log(np.maximum(probs, EPS)), 0.0)
    entropy = -plogp.sum()
    grad = np.where(
        probs > 0, -probs * (np.log(np.maximum(probs, EPS)) + entropy), 0.0
    )
    grad[~p.mask] = 0.0
    return float(entropy), grad


@dataclass
class LossTerm:
    """One averaged loss over a fixed sample set, part of a stage objective.

    kind     "ce" (labels are targets), "negce" (labels are complementary
             classes), or "minent" (labels unused)
    features raw, unnormalized feature rows
    mask     (n, c) admissibility per sample
    weight   multiplier on the averaged term
    """

    kind: str
    features: np.ndarray
    mask: np.ndarray
    labels: np.ndarray | None = None
    weight: float = 1.0
    _normalized: np.ndarray = field(init=False, repr=False, default=None)

    def __post_init__(self):
        if self.kind not in ("ce", "negce", "minent"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind in ("ce", "negce") and self.labels is None:
            raise ValueError(f"{self.kind} term needs labels")
        if len(self.features) != len(self.mask):
            raise ValueError("features and mask row counts differ")
        self._normalized = l2_normalize_rows(self.features)

    def __len__(self) -> int:
        return len(self.features)


def _term_loss_grad(
    params: ClassifierParams, term: LossTerm
) -> tuple[float, np.ndarray, np.ndarray, int]:
    """Mean loss, dL/dW, dL/db and clamp count for one term."""
    n = len(term)
    z = _normalized_logits_rows(params, term._normalized)
    p = masked_softmax_rows(z, term.mask)
    rows = np.arange(n)
    clamps = 0

    if term.kind == "ce":
        py = p[rows, term.labels]
        clamps = int((py < EPS).sum())
        loss = -np.log(np.maximum(py, EPS)).mean()
        g = p.copy()
        g[rows, term.labels] -= 1.0
    elif term.kind == "negce":
        q = p[rows, term.labels]
        one_minus = 1.0 - q
        clamps = int((one_minus < EPS).sum())
        loss = -np.log(np.maximum(one_minus, EPS)).mean()
        coef = q / np.maximum(one_minus, EPS)
        g = -coef[:, None] * p
        g[rows, term.labels] += coef
    else:  # minent
        plogp = np.where(p > 0, p * np.log(np.maximum(p, EPS)), 0.0)
        h = -plogp.sum(axis=1)
        loss = h.mean()
        g = np.where(p > 0, -p * (np.log(np.maximum(p, EPS)) + h[:, None]), 0.0)

    g = np.where(term.mask, g, 0.0) / n
    grad_w = g.T @ term._normalized
    grad_b = g.sum(axis=0) if params.bias is not None else None
    return float(loss), grad_w, grad_b, clamps


def sgd_train(
    params: ClassifierParams,
    terms: list[LossTerm],
    spec: TrainSpec,
    stats: dict | None = None,
) -> ClassifierParams:
    """Run `spec.steps` full-batch SGD-with-momentum updates on the summed
    objective and return the updated parameters.

    Each term is averaged over its own sample set and scaled by its weight.
    Deterministic given its inputs. Raises TrainingError if the objective
    goes non-finite. Terms with empty sample sets are ignored. When given,
    `stats` accumulates "final_loss" and "clamp_events".
    """
    spec.validate()
    terms = [t for t in terms if len(t)]
    out = params.copy()
    if not terms:
        return out

    vel_w = np.zeros_like(out.weights)
    vel_b = np.zeros_like(out.bias) if out.bias is not None else None
    total_clamps = 0
    loss = 0.0
    for step in range(spec.steps):
        loss = 0.0
        grad_w = np.zeros_like(out.weights)
        grad_b = np.zeros_like(out.bias) if out.bias is not None else None
        for term in terms:
            t_loss, t_gw, t_gb, t_clamps = _term_loss_grad(out, term)
            loss += term.weight * t_loss
            grad_w += term.weight * t_gw
            if grad_b is not None:
                grad_b += term.weight * t_gb
            total_clamps += t_clamps
        if not np.isfinite(loss):
            raise TrainingError(f"objective became non-finite at step {step}", step)

        vel_w = spec.momentum * vel_w - spec.learning_rate * grad_w
        out.weights = out.weights + vel_w
        if vel_b is not None:
            vel_b = spec.momentum * vel_b - spec.learning_rate * grad_b
            out.bias = out.bias + vel_b

    if not np.all(np.isfinite(out.weights)):
        raise TrainingError(
            f"weights became non-finite at step {spec.steps - 1}", spec.steps - 1
        )
    if stats is not None:
        stats["final_loss"] = stats.get("final_loss", 0.0) + float(loss)
        stats["clamp_events"] = stats.get("clamp_events", 0) + total_clamps
    return out


def objective_value(params: ClassifierParams, terms: list[LossTerm]) -> float:
    """Current value of a stage objective, for monitoring and tests."""
    total = 0.0
    for term in terms:
        if len(term):
            t_loss, _, _, _ = _term_loss_grad(params, term)
            total += term.weight * t_loss
    return total
