"""Successive exclusion of negative pseudo-labels over an episode.

Starting from a support-trained linear head, the engine repeatedly assigns
each unlabeled sample its least-probable admissible class as a *negative*
label (subject to a reject threshold), trains on those complementary labels
plus an entropy penalty, and excludes the assigned class from the sample's
candidate set. After at most c-1 rounds a sample with a fully excluded
candidate set has exactly one class left, which becomes its positive
pseudo-label; a final stage trains on those positives before queries are
scored.

Ablation modes:

    full                   the whole pipeline
    only_neg               skip the final positive stage
    only_pos               keep the exclusion loop only to harvest positives;
                           retrain from the support-only checkpoint
    no_delta               disable the reject threshold (always assign)
    no_minent              drop the entropy penalty
    alternating_neg_first  interleave negative rounds with threshold-based
                           positive pseudo-labeling, negatives first
    alternating_pos_first  same, positives first
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .classifier import (
    ClassifierParams,
    LossTerm,
    ProbVector,
    TrainSpec,
    init_params,
    logits_rows,
    masked_softmax_rows,
    sgd_train,
)
from .episodes import Episode

MODES = (
    "full",
    "only_neg",
    "only_pos",
    "no_delta",
    "no_minent",
    "alternating_neg_first",
    "alternating_pos_first",
)

__all__ = [
    "MODES",
    "MusicConfig",
    "NegAssignment",
    "PosAssignment",
    "PseudoState",
    "MusicResult",
    "select_negative",
    "run_negative_iteration",
    "positive_threshold_assignments",
    "extract_positives",
    "run_music",
    "predict",
]


@dataclass(frozen=True)
class MusicConfig:
    """Engine configuration for one episode run.

    `delta` is the reject threshold; None means the default 1/c, held fixed
    across iterations even as candidate sets shrink. `adaptive_delta`
    switches the default to 1/|admissible| per sample (study flag).
    `anchor_support` keeps the support cross-entropy term in every update
    stage, anchoring the classifier to the only certain labels.
    """

    delta: float | None = None
    minent_weight: float = 1.0
    mode: str = "full"
    pos_threshold: float = 0.7
    train_spec: TrainSpec = TrainSpec()
    anchor_support: bool = True
    adaptive_delta: bool = False
    init_seed: int = 0
    init_std: float = 0.01
    with_bias: bool = False

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.delta is not None and not 0 < self.delta <= 1:
            raise ValueError(f"delta must be in (0, 1], got {self.delta}")
        if self.minent_weight < 0:
            raise ValueError("minent_weight must be non-negative")
        if not 0 < self.pos_threshold <= 1:
            raise ValueError(f"pos_threshold must be in (0, 1], got {self.pos_threshold}")
        self.train_spec.validate()


class NegAssignment(NamedTuple):
    iteration: int  # 1-based negative-loop round
    sample: int  # pool row
    class_index: int
    prob: float  # admissible probability at assignment time


class PosAssignment(NamedTuple):
    cycle: int  # 1-based alternating cycle
    sample: int
    class_index: int
    prob: float


@dataclass
class PseudoState:
    """Per-sample exclusion sets plus the assignment history."""

    num_classes: int
    excluded: np.ndarray  # (M, c) bool, True = assigned as negative
    log: list[NegAssignment] = field(default_factory=list)
    positive_pass_log: list[PosAssignment] = field(default_factory=list)
    iterations_run: int = 0

    @classmethod
    def fresh(cls, pool_size: int, num_classes: int) -> "PseudoState":
        return cls(num_classes, np.zeros((pool_size, num_classes), dtype=bool))

    @property
    def pool_size(self) -> int:
        return len(self.excluded)

    def exclusions(self, sample: int) -> set[int]:
        return set(np.flatnonzero(self.excluded[sample]).tolist())

    def exclusion_counts(self) -> np.ndarray:
        return self.excluded.sum(axis=1)

    def positive(self, sample: int) -> int | None:
        """The forced positive label once c-1 classes are excluded."""
        row = self.excluded[sample]
        if int(row.sum()) != self.num_classes - 1:
            return None
        return int(np.flatnonzero(~row)[0])


@dataclass
class MusicResult:
    params: ClassifierParams
    pseudo: PseudoState
    per_iteration_accuracy: list[float]  # query accuracy after each stage
    stage_names: list[str]
    query_predictions: np.ndarray
    clamp_events: int = 0

    @property
    def neg_iterations(self) -> int:
        return self.pseudo.iterations_run


def select_negative(
    p: ProbVector, exclusions, delta: float, reject_active: bool = True
) -> int | None:
    """Pick the least-probable admissible class as a negative label.

    Returns the argmin class (ties to the lowest index) when its probability
    is <= delta, otherwise None (rejected). With `reject_active` False the
    argmin is always returned. `exclusions` is a set of class indices or a
    boolean array; it must be exactly the complement of `p.mask`.
    """
    excl = np.zeros(len(p.mask), dtype=bool)
    if isinstance(exclusions, np.ndarray) and exclusions.dtype == bool:
        excl = exclusions
    else:
        excl[list(exclusions)] = True
    if not np.array_equal(p.mask, ~excl):
        raise ValueError("mask of p must be the complement of the exclusion set")
    if p.num_admissible < 2:
        raise ValueError(
            "need >= 2 admissible classes; a single admissible class is "
            "already a positive label"
        )
    candidate = int(np.argmin(np.where(p.mask, p.probs, np.inf)))
    if reject_active and not p.probs[candidate] <= delta:
        return None
    return candidate


def _resolve_delta(cfg: MusicConfig, num_classes: int, admissible_count: int) -> float:
    if cfg.delta is not None:
        return cfg.delta
    if cfg.adaptive_delta:
        return 1.0 / admissible_count
    return 1.0 / num_classes


def _full_mask(n: int, c: int) -> np.ndarray:
    return np.ones((n, c), dtype=bool)


def _support_term(episode: Episode, c: int) -> LossTerm:
    return LossTerm(
        "ce",
        episode.support_x,
        _full_mask(len(episode.support_x), c),
        episode.support_y,
    )


def run_negative_iteration(
    episode: Episode,
    params: ClassifierParams,
    state: PseudoState,
    cfg: MusicConfig,
    stats: dict | None = None,
) -> tuple[ClassifierParams, PseudoState, int]:
    """One synchronous round: select negatives for the whole pool against the
    current classifier, record them, then apply one training stage.

    Returns (updated params, updated state, number of new assignments).
    With zero assignments the classifier is left untouched and the loop
    should stop.
    """
    c = state.num_classes
    reject_active = cfg.mode != "no_delta"
    admissible = ~state.excluded
    eligible = np.flatnonzero(admissible.sum(axis=1) >= 2)
    if len(eligible) == 0:
        return params, state, 0

    probs = masked_softmax_rows(logits_rows(params, episode.pool_x), admissible)
    sel_samples, sel_classes, sel_probs = [], [], []
    for u in eligible:
        row_mask = admissible[u]
        pv = ProbVector(probs=probs[u], mask=row_mask)
        delta = _resolve_delta(cfg, c, int(row_mask.sum()))
        k = select_negative(pv, state.excluded[u], delta, reject_active)
        if k is not None:
            sel_samples.append(int(u))
            sel_classes.append(k)
            sel_probs.append(float(probs[u, k]))
    if not sel_samples:
        return params, state, 0

    iteration = state.iterations_run + 1
    idx = np.asarray(sel_samples)
    cls = np.asarray(sel_classes)
    selection_mask = admissible[idx].copy()  # masks as seen at selection time
    for u, k, pk in zip(sel_samples, sel_classes, sel_probs):
        state.log.append(NegAssignment(iteration, u, k, pk))
    state.excluded[idx, cls] = True
    state.iterations_run = iteration

    lam = 0.0 if cfg.mode == "no_minent" else cfg.minent_weight
    terms = [LossTerm("negce", episode.pool_x[idx], selection_mask, cls)]
    if lam > 0:
        terms.append(
            LossTerm("minent", episode.pool_x[idx], selection_mask, weight=lam)
        )
    if cfg.anchor_support:
        terms.append(_support_term(episode, c))
    params = sgd_train(params, terms, cfg.train_spec, stats)
    return params, state, len(sel_samples)


def positive_threshold_assignments(
    params: ClassifierParams,
    pool_x: np.ndarray,
    admissible: np.ndarray,
    threshold: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Baseline positive pseudo-labeling: the argmax admissible class, kept
    only when its probability clears `threshold`.

    Returns (pool rows, classes, probabilities) of the accepted samples.
    """
    if len(pool_x) == 0:
        empty = np.array([], dtype=np.int64)
        return empty, empty.copy(), np.array([], dtype=np.float64)
    probs = masked_softmax_rows(logits_rows(params, pool_x), admissible)
    best = probs.argmax(axis=1)
    pbest = probs[np.arange(len(probs)), best]
    take = np.flatnonzero(pbest >= threshold)
    return take, best[take], pbest[take]


def extract_positives(state: PseudoState) -> list[tuple[int, int]]:
    """Samples whose exclusion set reached c-1 classes, each with its unique
    remaining class. Incomplete samples are omitted."""
    out = []
    full = state.num_classes - 1
    counts = state.exclusion_counts()
    for u in np.flatnonzero(counts == full):
        out.append((int(u), int(np.flatnonzero(~state.excluded[u])[0])))
    return out


def predict(params: ClassifierParams, queries: np.ndarray) -> np.ndarray:
    """Argmax class per query over unmasked scores, lowest index on ties."""
    if len(queries) == 0:
        return np.array([], dtype=np.int64)
    return np.argmax(logits_rows(params, queries), axis=1).astype(np.int64)


def _query_accuracy(params: ClassifierParams, episode: Episode) -> float:
    return float(np.mean(predict(params, episode.query_x) == episode.query_y))


def run_music(episode: Episode, cfg: MusicConfig) -> MusicResult:
    """Run the configured pipeline on one episode.

    Pure function of (episode, cfg): classifier init is seeded from the
    config and every stage is deterministic.
    """
    cfg.validate()
    c = episode.n_ways
    state = PseudoState.fresh(episode.pool_size, c)
    params = init_params(
        c, episode.dim, seed=cfg.init_seed, std=cfg.init_std, with_bias=cfg.with_bias
    )
    stats: dict = {}
    lam = 0.0 if cfg.mode == "no_minent" else cfg.minent_weight

    accuracies: list[float] = []
    stage_names: list[str] = []

    def snapshot(name: str) -> None:
        accuracies.append(_query_accuracy(params, episode))
        stage_names.append(name)

    params = sgd_train(params, [_support_term(episode, c)], cfg.train_spec, stats)
    snapshot("support")
    checkpoint = params.copy() if cfg.mode == "only_pos" else None

    if cfg.mode in ("alternating_neg_first", "alternating_pos_first"):
        params = _run_alternating(episode, params, state, cfg, lam, stats, snapshot)
    else:
        for _ in range(c - 1):
            params, state, assigned = run_negative_iteration(
                episode, params, state, cfg, stats
            )
            if assigned == 0:
                break
            snapshot(f"neg_{state.iterations_run}")

        if cfg.mode != "only_neg":
            positives = extract_positives(state)
            if cfg.mode == "only_pos":
                params = checkpoint
            if positives:
                pos_idx = np.array([u for u, _ in positives])
                pos_cls = np.array([k for _, k in positives])
                mask = _full_mask(len(pos_idx), c)
                terms = [LossTerm("ce", episode.pool_x[pos_idx], mask, pos_cls)]
                if lam > 0:
                    terms.append(
                        LossTerm("minent", episode.pool_x[pos_idx], mask, weight=lam)
                    )
                if cfg.anchor_support:
                    terms.append(_support_term(episode, c))
                params = sgd_train(params, terms, cfg.train_spec, stats)
                snapshot("positive")

    return MusicResult(
        params=params,
        pseudo=state,
        per_iteration_accuracy=accuracies,
        stage_names=stage_names,
        query_predictions=predict(params, episode.query_x),
        clamp_events=stats.get("clamp_events", 0),
    )


def _run_alternating(episode, params, state, cfg, lam, stats, snapshot):
    """Interleave negative rounds with threshold-based positive passes until
    the negative loop terminates. The completed-exclusion positive stage is
    not used in these modes; positive signal comes from the passes."""
    c = state.num_classes
    neg_first = cfg.mode == "alternating_neg_first"
    for cycle in range(1, c):
        if not neg_first:
            params = _positive_pass(episode, params, state, cfg, lam, cycle, stats, snapshot)
        params, state, assigned = run_negative_iteration(episode, params, state, cfg, stats)
        if assigned == 0:
            break
        snapshot(f"neg_{state.iterations_run}")
        if neg_first:
            params = _positive_pass(episode, params, state, cfg, lam, cycle, stats, snapshot)
    return params


def _positive_pass(episode, params, state, cfg, lam, cycle, stats, snapshot):
    idx, cls, pvals = positive_threshold_assignments(
        params, episode.pool_x, ~state.excluded, cfg.pos_threshold
    )
    for u, k, pk in zip(idx, cls, pvals):
        state.positive_pass_log.append(PosAssignment(cycle, int(u), int(k), float(pk)))
    if len(idx) == 0:
        return params
    mask = _full_mask(len(idx), state.num_classes)
    terms = [LossTerm("ce", episode.pool_x[idx], mask, cls)]
    if lam > 0:
        terms.append(LossTerm("minent", episode.pool_x[idx], mask, weight=lam))
    if cfg.anchor_support:
        terms.append(_support_term(episode, state.num_classes))
    params = sgd_train(params, terms, cfg.train_spec, stats)
    snapshot(f"pos_pass_{cycle}")
    return params
