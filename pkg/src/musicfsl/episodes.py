"""N-way-K-shot episode sampling with unlabeled pools.

An episode draws, from a feature store, a labeled support set, an unlabeled
pool, and a query set. Three settings are supported:

    inductive    queries are held out of the pool entirely
    transductive queries additionally join the pool (presented unlabeled)
    distractive  the pool contains samples from classes outside the task

Per-episode randomness is derived by hashing (base_seed, episode_index)
into an independent generator stream, so episodes can be sampled and run
in any order, or in parallel, with identical results.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .store import FeatureStore

# Hidden ground-truth marker for pool samples whose class is outside the task.
DISTRACTOR = -1

SETTINGS = ("inductive", "transductive", "distractive")

__all__ = ["DISTRACTOR", "SETTINGS", "SamplingError", "EpisodeConfig", "Episode", "sample_episode"]


class SamplingError(ValueError):
    """Store cannot satisfy the episode configuration."""


@dataclass(frozen=True)
class EpisodeConfig:
    ways: int
    shots: int
    unlabeled_per_class: int
    queries_per_class: int = 15
    setting: str = "inductive"
    distractor_classes: int = 0
    distractor_unlabeled_per_class: int = 0
    episodes: int = 600
    base_seed: int = 0

    def validate(self) -> None:
        if self.ways <= 0 or self.shots <= 0 or self.queries_per_class <= 0:
            raise ValueError("ways, shots and queries_per_class must be positive")
        if self.unlabeled_per_class < 0:
            raise ValueError("unlabeled_per_class must be non-negative")
        if self.episodes <= 0:
            raise ValueError("episodes must be positive")
        if self.setting not in SETTINGS:
            raise ValueError(f"setting must be one of {SETTINGS}, got {self.setting!r}")
        if self.setting == "distractive":
            if self.distractor_classes < 1:
                raise ValueError("distractive setting needs distractor_classes >= 1")
            if self.distractor_unlabeled_per_class < 0:
                raise ValueError("distractor_unlabeled_per_class must be non-negative")

    @property
    def records_per_episode_class(self) -> int:
        return self.shots + self.unlabeled_per_class + self.queries_per_class


@dataclass
class Episode:
    """One sampled task. Features are float64; labels are episode-local
    (0..N-1), with DISTRACTOR marking out-of-task pool samples."""

    support_x: np.ndarray  # (N*K, d)
    support_y: np.ndarray  # (N*K,) int
    pool_x: np.ndarray  # (M, d) presented unlabeled
    pool_truth: np.ndarray  # (M,) hidden ground truth, DISTRACTOR outside task
    query_x: np.ndarray  # (N*Q, d)
    query_y: np.ndarray  # (N*Q,) int
    class_map: dict[int, int]  # episode label -> store class id
    support_idx: np.ndarray = field(repr=False, default=None)
    pool_idx: np.ndarray = field(repr=False, default=None)  # store-record indices
    query_idx: np.ndarray = field(repr=False, default=None)
    setting: str = "inductive"

    @property
    def n_ways(self) -> int:
        return len(self.class_map)

    @property
    def dim(self) -> int:
        return self.support_x.shape[1]

    @property
    def pool_size(self) -> int:
        return len(self.pool_x)


def _episode_rng(base_seed: int, episode_index: int) -> np.random.Generator:
    # SeedSequence hashing keeps streams independent across episode indices
    # and identical across platforms and call orders.
    seq = np.random.SeedSequence(
        entropy=base_seed & 0xFFFF_FFFF_FFFF_FFFF, spawn_key=(episode_index,)
    )
    return np.random.default_rng(seq)


def sample_episode(store: FeatureStore, cfg: EpisodeConfig, episode_index: int) -> Episode:
    """Draw episode `episode_index` as a pure function of (store, cfg, index)."""
    cfg.validate()
    if episode_index < 0:
        raise ValueError(f"episode_index must be non-negative, got {episode_index}")
    rng = _episode_rng(cfg.base_seed, episode_index)
    counts = store.class_counts()

    need = cfg.records_per_episode_class
    eligible = np.flatnonzero(counts >= need)
    if len(eligible) < cfg.ways:
        raise SamplingError(
            f"need {cfg.ways} classes with >= {need} records, "
            f"store has only {len(eligible)}"
        )
    chosen = rng.choice(eligible, size=cfg.ways, replace=False)

    distractors = np.array([], dtype=np.int64)
    if cfg.setting == "distractive":
        d_need = cfg.distractor_unlabeled_per_class
        d_eligible = np.setdiff1d(np.flatnonzero(counts >= d_need), chosen)
        if len(d_eligible) < cfg.distractor_classes:
            raise SamplingError(
                f"need {cfg.distractor_classes} distractor classes with "
                f">= {d_need} records, store has only {len(d_eligible)} left"
            )
        distractors = rng.choice(d_eligible, size=cfg.distractor_classes, replace=False)

    support_idx, pool_idx, query_idx = [], [], []
    support_y, pool_truth, query_y = [], [], []
    for label, cid in enumerate(chosen):
        perm = rng.permutation(store.indices_of_class(int(cid)))
        k, u, q = cfg.shots, cfg.unlabeled_per_class, cfg.queries_per_class
        support_idx.append(perm[:k])
        pool_idx.append(perm[k : k + u])
        query_idx.append(perm[k + u : k + u + q])
        support_y.append(np.full(k, label))
        pool_truth.append(np.full(u, label))
        query_y.append(np.full(q, label))

    for cid in distractors:
        perm = rng.permutation(store.indices_of_class(int(cid)))
        take = perm[: cfg.distractor_unlabeled_per_class]
        pool_idx.append(take)
        pool_truth.append(np.full(len(take), DISTRACTOR))

    support_idx = np.concatenate(support_idx)
    support_y = np.concatenate(support_y).astype(np.int64)
    query_idx = np.concatenate(query_idx)
    query_y = np.concatenate(query_y).astype(np.int64)
    pool_idx = np.concatenate(pool_idx) if pool_idx else np.array([], dtype=np.int64)
    pool_truth = (
        np.concatenate(pool_truth).astype(np.int64)
        if pool_truth
        else np.array([], dtype=np.int64)
    )

    if cfg.setting == "transductive":
        pool_idx = np.concatenate([pool_idx, query_idx])
        pool_truth = np.concatenate([pool_truth, query_y])

    # One shuffle fixes the pool order; everything downstream iterates it as-is.
    order = rng.permutation(len(pool_idx))
    pool_idx = pool_idx[order]
    pool_truth = pool_truth[order]

    feats = store.vectors.astype(np.float64)
    return Episode(
        support_x=feats[support_idx],
        support_y=support_y,
        pool_x=feats[pool_idx],
        pool_truth=pool_truth,
        query_x=feats[query_idx],
        query_y=query_y,
        class_map={label: int(cid) for label, cid in enumerate(chosen)},
        support_idx=support_idx.astype(np.int64),
        pool_idx=pool_idx.astype(np.int64),
        query_idx=query_idx.astype(np.int64),
        setting=cfg.setting,
    )
