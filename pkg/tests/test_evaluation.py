import math

import numpy as np
import pytest

from musicfsl.engine import MusicConfig, PseudoState, NegAssignment, MusicResult, run_music
from musicfsl.classifier import ClassifierParams, TrainSpec
from musicfsl.episodes import DISTRACTOR, Episode, EpisodeConfig, sample_episode
from musicfsl.evaluation import (
    DELIMITED_TABLE,
    STRUCTURED_TEXT,
    EpisodeReport,
    IterStat,
    aggregate,
    parse_episode_table,
    parse_report,
    score_episode,
    serialize_episode_table,
    serialize_report,
)


def tiny_episode():
    d = 4
    return Episode(
        support_x=np.eye(3, d) * 2,
        support_y=np.arange(3),
        pool_x=np.eye(3, d)[[0, 1, 2, 0]] * 2,
        pool_truth=np.array([0, 1, 2, DISTRACTOR]),
        query_x=np.eye(3, d) * 3,
        query_y=np.arange(3),
        class_map={0: 0, 1: 1, 2: 2},
        support_idx=np.arange(3),
        pool_idx=np.arange(4),
        query_idx=np.arange(3),
    )


def handmade_result(predictions, log, excluded, c=3):
    state = PseudoState(c, excluded, log=list(log))
    state.iterations_run = max((a.iteration for a in log), default=0)
    return MusicResult(
        params=ClassifierParams(np.zeros((c, 4))),
        pseudo=state,
        per_iteration_accuracy=[0.5, 0.75],
        stage_names=["support", "neg_1"],
        query_predictions=np.asarray(predictions),
    )


class TestScoreEpisode:
    def test_all_correct_scores_one(self):
        ep = tiny_episode()
        res = handmade_result([0, 1, 2], [], np.zeros((4, 3), bool))
        rep = score_episode(res, ep, episode_index=5)
        assert rep.query_accuracy == 1.0
        assert rep.episode_index == 5
        assert rep.pos_error == IterStat(0.0, 0, 0)
        assert rep.pos_proportion == 0.0

    def test_negative_hit_on_truth_counts_wrong(self):
        ep = tiny_episode()
        log = [NegAssignment(1, 0, 2, 0.1), NegAssignment(1, 1, 1, 0.1)]
        excluded = np.zeros((4, 3), bool)
        excluded[0, 2] = excluded[1, 1] = True
        rep = score_episode(handmade_result([0, 1, 2], log, excluded), ep)
        # sample 1 has ground truth 1 and was assigned negative class 1
        assert rep.neg_error_per_iteration == [IterStat(0.5, 1, 2)]
        assert rep.neg_class_counts == [0, 1, 1]

    def test_distractor_never_a_negative_error_always_a_positive_error(self):
        ep = tiny_episode()
        log = [NegAssignment(1, 3, 1, 0.05)]
        excluded = np.zeros((4, 3), bool)
        excluded[3] = [True, True, False]  # distractor fully excluded -> pos 2
        rep = score_episode(handmade_result([0, 1, 2], log, excluded), ep)
        assert rep.neg_error_per_iteration[0].wrong == 0
        assert rep.pos_error == IterStat(1.0, 1, 1)
        assert rep.pos_proportion == 0.25

    def test_wrong_positive_counts(self):
        ep = tiny_episode()
        excluded = np.zeros((4, 3), bool)
        excluded[0] = [False, True, True]  # positive 0, truth 0: correct
        excluded[1] = [True, False, True]  # positive 1, truth 1: correct
        excluded[2] = [True, False, True]  # positive 1, truth 2: wrong
        rep = score_episode(handmade_result([0, 1, 2], [], excluded), ep)
        assert rep.pos_error == IterStat(1 / 3, 1, 3)
        assert rep.pos_class_counts == [1, 2, 0]

    def test_mismatched_prediction_count_rejected(self):
        ep = tiny_episode()
        res = handmade_result([0, 1], [], np.zeros((4, 3), bool))
        with pytest.raises(ValueError, match="predictions"):
            score_episode(res, ep)


def fake_report(i, acc, stages=(0.5, 0.8)):
    return EpisodeReport(
        episode_index=i,
        query_accuracy=acc,
        per_iteration_accuracy=list(stages),
        stage_names=["support", "positive"][: len(stages)],
        neg_error_per_iteration=[IterStat(0.1, 1, 10)],
        pos_error=IterStat(0.2, 2, 10),
        pos_proportion=0.5,
        neg_class_counts=[3, 3, 4],
        pos_class_counts=[4, 3, 3],
    )


class TestAggregate:
    def test_zero_variance(self):
        rep = aggregate([fake_report(i, 0.8) for i in range(5)])
        assert rep.mean_accuracy == pytest.approx(0.8)
        assert rep.ci95_halfwidth == pytest.approx(0.0)

    def test_two_episode_closed_form(self):
        rep = aggregate([fake_report(0, 0.0), fake_report(1, 1.0)])
        assert rep.mean_accuracy == pytest.approx(0.5)
        # 1.96 * std(ddof=1) / sqrt(2) = 1.96 * 0.7071 / 1.4142
        assert rep.ci95_halfwidth == pytest.approx(1.96 * math.sqrt(0.5) / math.sqrt(2), rel=1e-12)
        assert rep.ci95_halfwidth == pytest.approx(0.98, rel=1e-12)

    def test_single_episode_has_zero_halfwidth(self):
        rep = aggregate([fake_report(0, 0.6)])
        assert rep.ci95_halfwidth == 0.0

    def test_order_independence_is_bitwise(self):
        reports = [fake_report(i, 0.1 * (i % 7)) for i in range(20)]
        a = aggregate(list(reports), config={"x": 1})
        b = aggregate(list(reversed(reports)), config={"x": 1})
        assert serialize_report(a) == serialize_report(b)

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="at least one"):
            aggregate([])

    def test_diagnostics_pool_counts(self):
        rep = aggregate([fake_report(0, 0.5), fake_report(1, 0.7)])
        d = rep.diagnostics
        assert d.neg_error_per_iteration[0].error_rate == pytest.approx(0.1)
        assert d.neg_error_per_iteration[0].mean_assigned == pytest.approx(10.0)
        assert d.pos_error.error_rate == pytest.approx(0.2)
        assert d.pos_proportion_mean == pytest.approx(0.5)
        assert d.neg_count_by_class_mean == [3.0, 3.0, 4.0]

    def test_ci_shrinks_like_inverse_sqrt_e(self):
        # i.i.d. synthetic accuracies: doubling E should shrink the
        # halfwidth by about sqrt(2)
        rng = np.random.default_rng(0)
        accs = rng.uniform(0.6, 0.9, size=800)
        small = aggregate([fake_report(i, float(a)) for i, a in enumerate(accs[:400])])
        full = aggregate([fake_report(i, float(a)) for i, a in enumerate(accs)])
        ratio = full.ci95_halfwidth / small.ci95_halfwidth
        assert ratio == pytest.approx(1 / math.sqrt(2), abs=0.1)


class TestSerialization:
    def run_report(self):
        return aggregate(
            [fake_report(i, 0.5 + 0.01 * i) for i in range(4)],
            config={"mode": "full", "ways": 3},
        )

    def test_structured_text_has_required_keys(self):
        import json

        doc = json.loads(serialize_report(self.run_report()).decode())
        assert "mean_accuracy" in doc
        assert "ci95_halfwidth" in doc
        assert doc["config"]["mode"] == "full"
        assert doc["num_episodes"] == 4

    def test_roundtrip_equality(self):
        rep = self.run_report()
        back = parse_report(serialize_report(rep))
        assert back == rep

    def test_canonical_bytes(self):
        rep = self.run_report()
        assert serialize_report(rep) == serialize_report(self.run_report())

    def test_unknown_format_rejected(self):
        with pytest.raises(ValueError, match="format"):
            serialize_report(self.run_report(), "yaml")

    def test_table_roundtrip(self):
        reports = [fake_report(i, 0.25 * i, stages=(0.1, 0.2, 0.3)[: 1 + i % 3]) for i in range(4)]
        back = parse_episode_table(serialize_episode_table(reports))
        assert back == sorted(reports, key=lambda r: r.episode_index)

    def test_table_roundtrip_preserves_float64(self):
        acc = 0.123456789012345678
        back = parse_episode_table(serialize_episode_table([fake_report(0, acc)]))
        assert back[0].query_accuracy == acc

    def test_table_header_documented_columns(self):
        table = serialize_report(self.run_report(), DELIMITED_TABLE).decode()
        header = table.splitlines()[0].split(",")
        assert header[0] == "episode_index"
        assert header[1] == "accuracy"
        assert "neg1_error_rate" in header
        assert "acc_stage0" in header


class TestEndToEndScoring:
    def test_real_episode_consistency(self, small_store):
        cfg = EpisodeConfig(
            ways=5, shots=1, unlabeled_per_class=8, queries_per_class=5, base_seed=21
        )
        ep = sample_episode(small_store, cfg, 0)
        res = run_music(ep, MusicConfig(train_spec=TrainSpec(steps=40)))
        rep = score_episode(res, ep, episode_index=0)
        rep.validate()
        assert 0 <= rep.query_accuracy <= 1
        assert sum(rep.neg_class_counts) == len(res.pseudo.log)
        assert sum(s.assigned for s in rep.neg_error_per_iteration) == len(res.pseudo.log)
        assert rep.pos_error.assigned == round(rep.pos_proportion * ep.pool_size)
