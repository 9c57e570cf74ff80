"""Episode execution harness.

Episodes are pure functions of (store, configs, episode_index), so they can
run on any number of workers; reports are merged by episode index and the
resulting run report is identical for every parallelism degree.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

from .engine import MusicConfig, run_music
from .episodes import EpisodeConfig, sample_episode
from .evaluation import EpisodeReport, RunReport, aggregate, score_episode
from .store import FeatureStore

__all__ = ["run_episode", "run_episodes", "run_benchmark"]


def run_episode(
    store: FeatureStore, ecfg: EpisodeConfig, mcfg: MusicConfig, index: int
) -> EpisodeReport:
    """Sample episode `index`, run the engine on it, and score it."""
    episode = sample_episode(store, ecfg, index)
    result = run_music(episode, mcfg)
    return score_episode(result, episode, episode_index=index)


_WORKER: dict = {}


def _worker_init(store: FeatureStore, ecfg: EpisodeConfig, mcfg: MusicConfig) -> None:
    _WORKER["args"] = (store, ecfg, mcfg)


def _worker_run(index: int) -> EpisodeReport:
    store, ecfg, mcfg = _WORKER["args"]
    return run_episode(store, ecfg, mcfg, index)


def run_episodes(
    store: FeatureStore,
    ecfg: EpisodeConfig,
    mcfg: MusicConfig,
    parallel: int = 1,
) -> list[EpisodeReport]:
    """Run `ecfg.episodes` episodes, optionally on a process pool."""
    indices = range(ecfg.episodes)
    if parallel <= 1:
        return [run_episode(store, ecfg, mcfg, i) for i in indices]
    chunk = max(1, ecfg.episodes // (parallel * 4))
    with ProcessPoolExecutor(
        max_workers=parallel,
        initializer=_worker_init,
        initargs=(store, ecfg, mcfg),
    ) as pool:
        return list(pool.map(_worker_run, indices, chunksize=chunk))


def run_benchmark(
    store: FeatureStore,
    ecfg: EpisodeConfig,
    mcfg: MusicConfig,
    parallel: int = 1,
    config_echo: dict | None = None,
) -> RunReport:
    reports = run_episodes(store, ecfg, mcfg, parallel)
    return aggregate(reports, config_echo)
