"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with -s to see them on success).

The benchmark criteria run on the frozen synthetic setup: 20 classes
(5 per episode plus distractor-capable spares) in 64 dims, separation 4.0,
noise 1.0, 600 samples per class, generator seed 7; 100 episodes of
5-way-1-shot with 30 unlabeled and 15 queries per class, episode seed 7.
Accuracy orderings are checked against the implementation's own baseline
runs, not against externally asserted values.
"""

import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from musicfsl.classifier import (
    TrainSpec,
    ce_loss_grad,
    entropy_loss_grad,
    init_params,
    logits,
    masked_softmax,
    negce_loss_grad,
)
from musicfsl.cli import main as cli_main
from musicfsl.engine import MusicConfig, extract_positives, run_music, select_negative
from musicfsl.episodes import EpisodeConfig, sample_episode
from musicfsl.evaluation import aggregate
from musicfsl.harness import run_episodes
from musicfsl.store import SyntheticConfig, generate_synthetic, read_store, store_to_bytes

from conftest import random_store
from test_classifier import fd_gradient, rel_err
from test_engine import blob_episode


@contextmanager
def criterion(name):
    try:
        yield
    except Exception:
        print(f"ACCEPTANCE {name}: FAIL")
        raise
    print(f"ACCEPTANCE {name}: PASS")


def ci95(values):
    values = np.asarray(values, dtype=np.float64)
    half = 1.96 * values.std(ddof=1) / math.sqrt(len(values)) if len(values) > 1 else 0.0
    return float(values.mean()), float(half)


BENCH_STORE = SyntheticConfig(
    num_classes=20, dim=64, samples_per_class=600,
    separation=4.0, noise_sigma=1.0, seed=7,
)
BENCH_EPISODES = EpisodeConfig(
    ways=5, shots=1, unlabeled_per_class=30, queries_per_class=15,
    episodes=100, base_seed=7,
)


@pytest.fixture(scope="module")
def benchmark_runs():
    """All four benchmark modes over the same 100 episodes, timed."""
    store = generate_synthetic(BENCH_STORE)
    t0 = time.perf_counter()
    runs = {}
    for mode in ["full", "only_neg", "only_pos", "no_delta"]:
        reports = run_episodes(store, BENCH_EPISODES, MusicConfig(mode=mode), parallel=1)
        runs[mode] = aggregate(reports)
    elapsed = time.perf_counter() - t0
    return runs, elapsed


@pytest.fixture(scope="module")
def asymmetry_runs():
    """Separation lowered to 2.0: per-episode iteration-1 negative
    assignments (mode=full) and cycle-1 threshold positives
    (alternating_pos_first), both decided at the same post-support
    classifier state."""
    cfg = SyntheticConfig(
        num_classes=20, dim=64, samples_per_class=600,
        separation=2.0, noise_sigma=1.0, seed=7,
    )
    store = generate_synthetic(cfg)
    neg_wrong = neg_assigned = pos_wrong = pos_assigned = 0
    for i in range(BENCH_EPISODES.episodes):
        ep = sample_episode(store, BENCH_EPISODES, i)
        full = run_music(ep, MusicConfig(mode="full"))
        for a in full.pseudo.log:
            if a.iteration == 1:
                neg_assigned += 1
                neg_wrong += int(ep.pool_truth[a.sample] == a.class_index)
        alt = run_music(ep, MusicConfig(mode="alternating_pos_first"))
        for a in alt.pseudo.positive_pass_log:
            if a.cycle == 1:
                pos_assigned += 1
                pos_wrong += int(ep.pool_truth[a.sample] != a.class_index)
    return neg_wrong, neg_assigned, pos_wrong, pos_assigned


class TestGradientSuite:
    def test_analytic_gradients_match_finite_differences(self):
        with criterion("gradient-suite"):
            rng = np.random.default_rng(2024)
            t0 = time.perf_counter()
            for _ in range(100):
                c = int(rng.integers(2, 11))
                d = int(rng.integers(2, 65))
                params = init_params(c, d, seed=int(rng.integers(1 << 31)), std=1.0)
                x = rng.normal(size=d)
                z = logits(params, x)
                mask = rng.random(c) < 0.7
                if mask.sum() < 2:
                    mask[:2] = True
                y = int(rng.choice(np.flatnonzero(mask)))

                checks = [
                    (lambda zz: ce_loss_grad(masked_softmax(zz, mask), y),
                     ce_loss_grad(masked_softmax(z, mask), y)[1]),
                    (lambda zz: negce_loss_grad(masked_softmax(zz, mask), y),
                     negce_loss_grad(masked_softmax(z, mask), y)[1]),
                    (lambda zz: entropy_loss_grad(masked_softmax(zz, mask)),
                     entropy_loss_grad(masked_softmax(z, mask))[1]),
                ]
                for loss_fn, analytic in checks:
                    fd = fd_gradient(lambda zz: loss_fn(zz)[0], z, h=1e-6)
                    assert rel_err(analytic, fd) < 1e-6
            assert time.perf_counter() - t0 < 5.0


class TestSimplexMasking:
    def test_thousand_random_masked_softmax_calls(self):
        with criterion("simplex-masking"):
            rng = np.random.default_rng(77)
            for _ in range(1000):
                c = int(rng.integers(2, 16))
                z = rng.normal(0, 3, size=c)
                mask = rng.random(c) < 0.6
                if not mask.any():
                    mask[int(rng.integers(c))] = True
                p = masked_softmax(z, mask)
                assert abs(p.probs.sum() - 1.0) < 1e-9
                assert np.all(p.probs[~mask] == 0.0)
                shifted = masked_softmax(z + float(rng.normal(0, 100)), mask)
                assert np.abs(p.probs - shifted.probs).max() < 1e-12


class TestExclusionLogic:
    def test_termination_monotonicity_and_complement(self):
        with criterion("exclusion-logic"):
            rng = np.random.default_rng(31)
            for trial in range(30):
                c = int(rng.integers(2, 7))
                ep = blob_episode(
                    c=c, d=max(c, 6), unlabeled=5, queries=3,
                    separation=float(rng.uniform(1.0, 6.0)), seed=trial,
                )
                delta = None if trial % 3 else float(rng.uniform(0.05, 1.0))
                res = run_music(
                    ep, MusicConfig(delta=delta, train_spec=TrainSpec(steps=10))
                )
                # termination within c-1 rounds
                assert res.neg_iterations <= c - 1
                # monotone growth, no repeated (sample, class) pairs
                pairs = [(a.sample, a.class_index) for a in res.pseudo.log]
                assert len(pairs) == len(set(pairs))
                assert int(res.pseudo.excluded.sum()) == len(pairs)
                assert res.pseudo.exclusion_counts().max(initial=0) <= c - 1
                # every positive is the complement of a full exclusion set
                for u, k in extract_positives(res.pseudo):
                    assert res.pseudo.excluded[u].sum() == c - 1
                    assert not res.pseudo.excluded[u, k]

    def test_delta_boundary(self):
        with criterion("delta-boundary"):
            for c in [2, 3, 5, 7, 10]:
                uniform = masked_softmax(np.zeros(c), np.ones(c, dtype=bool))
                assert select_negative(uniform, set(), 1.0 / c) == 0
                assert select_negative(uniform, set(), 1.0 / c - 1e-9) is None


class TestSyntheticBenchmark:
    def test_mode_orderings(self, benchmark_runs):
        with criterion("synthetic-benchmark"):
            runs, elapsed = benchmark_runs
            full = runs["full"]

            # support-only baseline: accuracy after the support-only stage
            base_mean, base_half = ci95(
                [r.per_iteration_accuracy[0] for r in full.episodes]
            )
            assert full.mean_accuracy - full.ci95_halfwidth > base_mean + base_half

            assert full.mean_accuracy >= runs["only_neg"].mean_accuracy
            assert full.mean_accuracy >= runs["only_pos"].mean_accuracy - 0.01

            # reject option keeps positive pseudo-labels cleaner than no_delta,
            # with non-overlapping CIs over per-episode error rates
            full_err_mean, full_err_half = ci95(
                [r.pos_error.error_rate for r in full.episodes]
            )
            nd_err_mean, nd_err_half = ci95(
                [r.pos_error.error_rate for r in runs["no_delta"].episodes]
            )
            assert full_err_mean + full_err_half < nd_err_mean - nd_err_half

            assert elapsed < 120.0

            print(
                f"\n  full {100 * full.mean_accuracy:.2f} ± {100 * full.ci95_halfwidth:.2f} | "
                f"baseline {100 * base_mean:.2f} ± {100 * base_half:.2f} | "
                f"only_neg {100 * runs['only_neg'].mean_accuracy:.2f} | "
                f"only_pos {100 * runs['only_pos'].mean_accuracy:.2f} | "
                f"pos_err full {100 * full_err_mean:.2f} vs no_delta {100 * nd_err_mean:.2f} | "
                f"{elapsed:.0f}s"
            )

    def test_iteration_trend(self, benchmark_runs):
        with criterion("iteration-trend"):
            runs, _ = benchmark_runs
            stages = runs["full"].diagnostics.accuracy_by_stage
            assert stages[-1] >= stages[0]

    def test_balance_diagnostic(self, benchmark_runs):
        with criterion("balance-diagnostic"):
            runs, _ = benchmark_runs
            counts = runs["full"].diagnostics.neg_count_by_class_mean
            assert max(counts) / min(counts) < 1.2


class TestNegativeVsPositiveAsymmetry:
    def test_iteration1_negative_error_below_positive_argmax_error(self, asymmetry_runs):
        with criterion("neg-vs-pos-asymmetry"):
            neg_wrong, neg_assigned, pos_wrong, pos_assigned = asymmetry_runs
            assert neg_assigned > 0
            assert pos_assigned > 0  # threshold 0.7 labeled something
            neg_rate = neg_wrong / neg_assigned
            pos_rate = pos_wrong / pos_assigned
            assert neg_rate < pos_rate
            print(
                f"\n  neg iter-1 {100 * neg_rate:.2f}% ({neg_wrong}/{neg_assigned}) "
                f"vs pos-argmax(0.7) {100 * pos_rate:.2f}% ({pos_wrong}/{pos_assigned})"
            )


class TestParallelDeterminism:
    def test_parallel_1_and_8_reports_bitwise_identical(self, tmp_path):
        with criterion("parallel-determinism"):
            store_path = tmp_path / "bench.fsfeat"
            assert cli_main([
                "gen-synth", "--classes", "10", "--dim", "32", "--per-class", "60",
                "--separation", "4", "--sigma", "1", "--seed", "7",
                "--out", str(store_path),
            ]) == 0
            outs = {}
            for degree in [1, 8]:
                report = tmp_path / f"p{degree}.report"
                csv = tmp_path / f"p{degree}.csv"
                assert cli_main([
                    "run", "--store", str(store_path), "--ways", "5", "--shots", "1",
                    "--unlabeled", "10", "--queries", "10", "--episodes", "16",
                    "--seed", "5", "--parallel", str(degree),
                    "--out", str(report), "--csv", str(csv),
                ]) == 0
                outs[degree] = (report.read_bytes(), csv.read_bytes())
            assert outs[1] == outs[8]


class TestFormatRoundTrip:
    def test_thousand_random_stores_survive_bitwise(self):
        with criterion("format-round-trip"):
            rng = np.random.default_rng(990)
            for _ in range(1000):
                store = random_store(rng)
                back = read_store(store_to_bytes(store))
                assert back == store
                assert back.vectors.tobytes() == store.vectors.tobytes()
                assert back.class_ids.tobytes() == store.class_ids.tobytes()
