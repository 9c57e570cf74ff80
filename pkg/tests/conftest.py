import numpy as np
import pytest

from musicfsl.store import FeatureStore, SyntheticConfig, generate_synthetic


@pytest.fixture(scope="session")
def small_store() -> FeatureStore:
    """8 well-separated classes in 16 dims, 60 samples each; enough for
    5-way episodes with unlabeled pools and distractors."""
    return generate_synthetic(
        SyntheticConfig(
            num_classes=8,
            dim=16,
            samples_per_class=60,
            separation=4.0,
            noise_sigma=1.0,
            seed=7,
        )
    )


def random_store(rng: np.random.Generator) -> FeatureStore:
    """A random store with arbitrary shape, for round-trip checks."""
    dim = int(rng.integers(1, 17))
    num_classes = int(rng.integers(1, 9))
    n = int(rng.integers(0, 41))
    class_ids = rng.integers(0, num_classes, size=n).astype(np.uint32)
    vectors = rng.standard_normal((n, dim)).astype(np.float32)
    return FeatureStore(dim, num_classes, class_ids, vectors)
