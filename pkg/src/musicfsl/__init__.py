"""Semi-supervised few-shot classification by successive exclusion of
negative pseudo-labels over frozen feature embeddings.

The library is organized around five pieces: feature stores (`store`),
episode sampling (`episodes`), the linear head and its losses
(`classifier`), the exclusion engine (`engine`), and the evaluation
harness (`evaluation`, `harness`). The `musicfsl` command ties them
together.
"""

from .classifier import (
    ClassifierParams,
    LossTerm,
    ProbVector,
    TrainSpec,
    TrainingError,
    ce_loss_grad,
    entropy_loss_grad,
    init_params,
    l2_normalize,
    logits,
    masked_softmax,
    negce_loss_grad,
    sgd_train,
)
from .engine import (
    MODES,
    MusicConfig,
    MusicResult,
    PseudoState,
    extract_positives,
    predict,
    run_music,
    run_negative_iteration,
    select_negative,
)
from .episodes import DISTRACTOR, Episode, EpisodeConfig, SamplingError, sample_episode
from .evaluation import (
    EpisodeReport,
    RunReport,
    aggregate,
    parse_report,
    score_episode,
    serialize_report,
)
from .harness import run_benchmark, run_episode, run_episodes
from .store import (
    ClassInfo,
    ConfigError,
    FeatureRecord,
    FeatureStore,
    StoreDataError,
    StoreError,
    StoreFormatError,
    StoreTruncationError,
    StoreWriteError,
    SyntheticConfig,
    generate_synthetic,
    read_store,
    write_store,
)

__version__ = "0.1.0"
