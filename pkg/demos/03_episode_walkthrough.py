"""One episode, stage by stage.

A 5-way-1-shot task: five labeled samples total, a pool of 50 unlabeled
samples, 75 queries. Watch the engine exclude one negative label per
sample per round, then harvest positive labels from fully excluded
candidate sets.
"""

import numpy as np

from musicfsl import (
    EpisodeConfig,
    MusicConfig,
    SyntheticConfig,
    extract_positives,
    generate_synthetic,
    run_music,
    sample_episode,
    score_episode,
)

store = generate_synthetic(
    SyntheticConfig(num_classes=10, dim=32, samples_per_class=60,
                    separation=4.0, noise_sigma=1.0, seed=7)
)
ecfg = EpisodeConfig(ways=5, shots=1, unlabeled_per_class=10,
                     queries_per_class=15, base_seed=1)
episode = sample_episode(store, ecfg, 0)
print(f"support {len(episode.support_x)}, pool {episode.pool_size}, "
      f"queries {len(episode.query_x)}")

result = run_music(episode, MusicConfig())
report = score_episode(result, episode)

# Query accuracy after every classifier update. The first entry is the
# support-only baseline; everything after it is bought with unlabeled data.
print("\nstage            accuracy")
for name, acc in zip(result.stage_names, result.per_iteration_accuracy):
    print(f"  {name:12s}   {100 * acc:6.2f}%")

# Negative assignments per round. Error = the assigned 'not this class'
# actually was the hidden truth. Rounds shrink as the reject option holds
# back samples whose remaining candidates all look plausible.
print("\nround  assigned  wrong  error")
for t, stat in enumerate(report.neg_error_per_iteration, start=1):
    print(f"  {t}      {stat.assigned:4d}    {stat.wrong:3d}   {100 * stat.error_rate:5.2f}%")

positives = extract_positives(result.pseudo)
print(f"\npositives harvested: {len(positives)}/{episode.pool_size} "
      f"({100 * report.pos_proportion:.0f}% of the pool), "
      f"error {100 * report.pos_error.error_rate:.2f}%")

# A sample that never completed its exclusion set was held back by the
# reject option; its candidate set still has more than one class.
counts = result.pseudo.exclusion_counts()
held = np.flatnonzero(counts < 4)
if len(held):
    u = int(held[0])
    print(f"held-back sample {u}: excluded {sorted(result.pseudo.exclusions(u))}, "
          f"candidates left {4 + 1 - counts[u]}")
