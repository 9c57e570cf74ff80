"""Per-episode and aggregate metrics, plus report (de)serialization.

Error-rate conventions: the denominator is always the number of
assignments actually made, not the pool size. A negative assignment is
wrong when it names the sample's hidden ground truth; a positive pseudo-
label is wrong when it differs from it. Distractor samples can never be
negative-label errors (their truth lies outside the task classes) and are
always positive-label errors.

Reports serialize to a canonical structured-text (JSON) document or a
delimited per-episode table; both round-trip at full float64 precision.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .engine import MusicResult, extract_positives
from .episodes import Episode

STRUCTURED_TEXT = "structured-text"
DELIMITED_TABLE = "delimited-table"

__all__ = [
    "IterStat",
    "AggregateStat",
    "EpisodeReport",
    "RunDiagnostics",
    "RunReport",
    "score_episode",
    "aggregate",
    "serialize_report",
    "parse_report",
    "serialize_episode_table",
    "parse_episode_table",
]


class IterStat(NamedTuple):
    """Error bookkeeping for one assignment batch: rate = wrong/assigned."""

    error_rate: float
    wrong: int
    assigned: int


class AggregateStat(NamedTuple):
    """Cross-episode pooling of IterStats (rate pooled over all counts)."""

    error_rate: float
    mean_wrong: float
    mean_assigned: float
    episodes: int


@dataclass
class EpisodeReport:
    episode_index: int
    query_accuracy: float
    per_iteration_accuracy: list[float]
    stage_names: list[str]
    neg_error_per_iteration: list[IterStat]
    pos_error: IterStat
    pos_proportion: float
    neg_class_counts: list[int]
    pos_class_counts: list[int]

    def validate(self) -> None:
        if not 0 <= self.pos_proportion <= 1:
            raise ValueError(f"pos_proportion out of [0,1]: {self.pos_proportion}")
        for stat in [*self.neg_error_per_iteration, self.pos_error]:
            if stat.wrong > stat.assigned:
                raise ValueError(f"wrong > assigned in {stat}")


@dataclass
class RunDiagnostics:
    accuracy_by_stage: list[float]
    episodes_by_stage: list[int]
    neg_error_per_iteration: list[AggregateStat]
    pos_error: AggregateStat
    pos_proportion_mean: float
    neg_count_by_class_mean: list[float]
    pos_count_by_class_mean: list[float]


@dataclass
class RunReport:
    mean_accuracy: float
    ci95_halfwidth: float
    config: dict
    diagnostics: RunDiagnostics
    episodes: list[EpisodeReport] = field(repr=False, default_factory=list)

    @property
    def num_episodes(self) -> int:
        return len(self.episodes)

    def summary_line(self) -> str:
        return (
            f"{100 * self.mean_accuracy:.2f} ± "
            f"{100 * self.ci95_halfwidth:.2f}"
        )


def _rate(wrong: int, assigned: int) -> float:
    return wrong / assigned if assigned else 0.0


def score_episode(
    result: MusicResult, episode: Episode, episode_index: int = 0
) -> EpisodeReport:
    """Score one engine run against the episode's hidden ground truth."""
    if len(result.query_predictions) != len(episode.query_y):
        raise ValueError(
            f"{len(result.query_predictions)} predictions for "
            f"{len(episode.query_y)} queries"
        )
    c = result.pseudo.num_classes
    truth = episode.pool_truth
    accuracy = float(np.mean(result.query_predictions == episode.query_y))

    neg_stats: list[IterStat] = []
    neg_counts = [0] * c
    for t in range(1, result.pseudo.iterations_run + 1):
        batch = [a for a in result.pseudo.log if a.iteration == t]
        wrong = sum(1 for a in batch if truth[a.sample] == a.class_index)
        neg_stats.append(IterStat(_rate(wrong, len(batch)), wrong, len(batch)))
        for a in batch:
            neg_counts[a.class_index] += 1

    positives = extract_positives(result.pseudo)
    pos_wrong = sum(1 for u, k in positives if truth[u] != k)
    pos_counts = [0] * c
    for _, k in positives:
        pos_counts[k] += 1
    pool = episode.pool_size

    report = EpisodeReport(
        episode_index=episode_index,
        query_accuracy=accuracy,
        per_iteration_accuracy=list(result.per_iteration_accuracy),
        stage_names=list(result.stage_names),
        neg_error_per_iteration=neg_stats,
        pos_error=IterStat(_rate(pos_wrong, len(positives)), pos_wrong, len(positives)),
        pos_proportion=len(positives) / pool if pool else 0.0,
        neg_class_counts=neg_counts,
        pos_class_counts=pos_counts,
    )
    report.validate()
    return report


def aggregate(reports: list[EpisodeReport], config: dict | None = None) -> RunReport:
    """Reduce episode reports to a run report with a normal-approximation
    95% confidence interval (1.96 * sample std / sqrt(E)).

    Episodes are reduced in episode_index order, so the result is
    independent of the order reports arrive in.
    """
    if not reports:
        raise ValueError("aggregate needs at least one episode report")
    reports = sorted(reports, key=lambda r: r.episode_index)

    acc = np.array([r.query_accuracy for r in reports])
    mean = float(acc.mean())
    halfwidth = (
        float(1.96 * acc.std(ddof=1) / math.sqrt(len(acc))) if len(acc) > 1 else 0.0
    )

    max_stages = max(len(r.per_iteration_accuracy) for r in reports)
    acc_by_stage, n_by_stage = [], []
    for s in range(max_stages):
        vals = [r.per_iteration_accuracy[s] for r in reports if len(r.per_iteration_accuracy) > s]
        acc_by_stage.append(float(np.mean(vals)))
        n_by_stage.append(len(vals))

    max_iters = max((len(r.neg_error_per_iteration) for r in reports), default=0)
    neg_agg = []
    for t in range(max_iters):
        stats = [r.neg_error_per_iteration[t] for r in reports if len(r.neg_error_per_iteration) > t]
        wrong = sum(s.wrong for s in stats)
        assigned = sum(s.assigned for s in stats)
        neg_agg.append(
            AggregateStat(
                _rate(wrong, assigned),
                wrong / len(stats),
                assigned / len(stats),
                len(stats),
            )
        )

    pos_wrong = sum(r.pos_error.wrong for r in reports)
    pos_assigned = sum(r.pos_error.assigned for r in reports)
    pos_agg = AggregateStat(
        _rate(pos_wrong, pos_assigned),
        pos_wrong / len(reports),
        pos_assigned / len(reports),
        len(reports),
    )

    c = len(reports[0].neg_class_counts)
    neg_mean = [float(np.mean([r.neg_class_counts[k] for r in reports])) for k in range(c)]
    pos_mean = [float(np.mean([r.pos_class_counts[k] for r in reports])) for k in range(c)]

    return RunReport(
        mean_accuracy=mean,
        ci95_halfwidth=halfwidth,
        config=dict(config or {}),
        diagnostics=RunDiagnostics(
            accuracy_by_stage=acc_by_stage,
            episodes_by_stage=n_by_stage,
            neg_error_per_iteration=neg_agg,
            pos_error=pos_agg,
            pos_proportion_mean=float(np.mean([r.pos_proportion for r in reports])),
            neg_count_by_class_mean=neg_mean,
            pos_count_by_class_mean=pos_mean,
        ),
        episodes=reports,
    )


# --- serialization -------------------------------------------------------

_REPORT_FORMAT_TAG = "music-run-report-v1"


def _iterstat_dict(s: IterStat) -> dict:
    return {"error_rate": s.error_rate, "wrong": s.wrong, "assigned": s.assigned}


def _aggstat_dict(s: AggregateStat) -> dict:
    return {
        "error_rate": s.error_rate,
        "mean_wrong": s.mean_wrong,
        "mean_assigned": s.mean_assigned,
        "episodes": s.episodes,
    }


def _episode_dict(r: EpisodeReport) -> dict:
    return {
        "episode_index": r.episode_index,
        "query_accuracy": r.query_accuracy,
        "per_iteration_accuracy": r.per_iteration_accuracy,
        "stage_names": r.stage_names,
        "neg_error_per_iteration": [_iterstat_dict(s) for s in r.neg_error_per_iteration],
        "pos_error": _iterstat_dict(r.pos_error),
        "pos_proportion": r.pos_proportion,
        "neg_class_counts": r.neg_class_counts,
        "pos_class_counts": r.pos_class_counts,
    }


def _episode_from_dict(d: dict) -> EpisodeReport:
    return EpisodeReport(
        episode_index=d["episode_index"],
        query_accuracy=d["query_accuracy"],
        per_iteration_accuracy=list(d["per_iteration_accuracy"]),
        stage_names=list(d["stage_names"]),
        neg_error_per_iteration=[IterStat(**s) for s in d["neg_error_per_iteration"]],
        pos_error=IterStat(**d["pos_error"]),
        pos_proportion=d["pos_proportion"],
        neg_class_counts=list(d["neg_class_counts"]),
        pos_class_counts=list(d["pos_class_counts"]),
    )


def report_to_dict(report: RunReport) -> dict:
    d = report.diagnostics
    return {
        "format": _REPORT_FORMAT_TAG,
        "mean_accuracy": report.mean_accuracy,
        "ci95_halfwidth": report.ci95_halfwidth,
        "num_episodes": report.num_episodes,
        "config": report.config,
        "diagnostics": {
            "accuracy_by_stage": d.accuracy_by_stage,
            "episodes_by_stage": d.episodes_by_stage,
            "neg_error_per_iteration": [_aggstat_dict(s) for s in d.neg_error_per_iteration],
            "pos_error": _aggstat_dict(d.pos_error),
            "pos_proportion_mean": d.pos_proportion_mean,
            "neg_count_by_class_mean": d.neg_count_by_class_mean,
            "pos_count_by_class_mean": d.pos_count_by_class_mean,
        },
        "episodes": [_episode_dict(r) for r in report.episodes],
    }


def report_from_dict(doc: dict) -> RunReport:
    if doc.get("format") != _REPORT_FORMAT_TAG:
        raise ValueError(f"not a run report: format tag {doc.get('format')!r}")
    d = doc["diagnostics"]
    return RunReport(
        mean_accuracy=doc["mean_accuracy"],
        ci95_halfwidth=doc["ci95_halfwidth"],
        config=dict(doc["config"]),
        diagnostics=RunDiagnostics(
            accuracy_by_stage=list(d["accuracy_by_stage"]),
            episodes_by_stage=list(d["episodes_by_stage"]),
            neg_error_per_iteration=[AggregateStat(**s) for s in d["neg_error_per_iteration"]],
            pos_error=AggregateStat(**d["pos_error"]),
            pos_proportion_mean=d["pos_proportion_mean"],
            neg_count_by_class_mean=list(d["neg_count_by_class_mean"]),
            pos_count_by_class_mean=list(d["pos_count_by_class_mean"]),
        ),
        episodes=[_episode_from_dict(e) for e in doc["episodes"]],
    )


def serialize_report(report: RunReport, format: str = STRUCTURED_TEXT) -> bytes:
    """Canonical bytes for a run report.

    structured-text: JSON with sorted keys (bitwise stable for equal
    reports). delimited-table: the per-episode CSV table.
    """
    if format == STRUCTURED_TEXT:
        text = json.dumps(report_to_dict(report), sort_keys=True, indent=2)
        return (text + "\n").encode("utf-8")
    if format == DELIMITED_TABLE:
        return serialize_episode_table(report.episodes)
    raise ValueError(f"unknown report format {format!r}")


def parse_report(data: bytes) -> RunReport:
    return report_from_dict(json.loads(data.decode("utf-8")))


def serialize_episode_table(reports: list[EpisodeReport]) -> bytes:
    """Per-episode CSV. Columns (documented in the README):

    episode_index, accuracy, pos_proportion, pos_error_rate, pos_wrong,
    pos_assigned, neg{t}_error_rate/_wrong/_assigned for t = 1..T,
    acc_stage{s} for s = 0..S-1, stage_names (';'-joined),
    neg_count_c{k} and pos_count_c{k} for k = 0..C-1.

    Episodes that stopped early leave the unused iteration and stage cells
    empty. Floats are written with repr, so values survive round-trips
    bitwise.
    """
    if not reports:
        raise ValueError("cannot tabulate zero episode reports")
    reports = sorted(reports, key=lambda r: r.episode_index)
    max_iters = max(len(r.neg_error_per_iteration) for r in reports)
    max_stages = max(len(r.per_iteration_accuracy) for r in reports)
    c = len(reports[0].neg_class_counts)

    header = ["episode_index", "accuracy", "pos_proportion", "pos_error_rate",
              "pos_wrong", "pos_assigned"]
    for t in range(1, max_iters + 1):
        header += [f"neg{t}_error_rate", f"neg{t}_wrong", f"neg{t}_assigned"]
    header += [f"acc_stage{s}" for s in range(max_stages)]
    header.append("stage_names")
    header += [f"neg_count_c{k}" for k in range(c)]
    header += [f"pos_count_c{k}" for k in range(c)]

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for r in reports:
        row = [r.episode_index, repr(r.query_accuracy), repr(r.pos_proportion),
               repr(r.pos_error.error_rate), r.pos_error.wrong, r.pos_error.assigned]
        for t in range(max_iters):
            if t < len(r.neg_error_per_iteration):
                s = r.neg_error_per_iteration[t]
                row += [repr(s.error_rate), s.wrong, s.assigned]
            else:
                row += ["", "", ""]
        for s in range(max_stages):
            row.append(
                repr(r.per_iteration_accuracy[s])
                if s < len(r.per_iteration_accuracy)
                else ""
            )
        row.append(";".join(r.stage_names))
        row += list(r.neg_class_counts)
        row += list(r.pos_class_counts)
        writer.writerow(row)
    return buf.getvalue().encode("utf-8")


def parse_episode_table(data: bytes) -> list[EpisodeReport]:
    rows = list(csv.reader(io.StringIO(data.decode("utf-8"))))
    header, body = rows[0], rows[1:]
    col = {name: i for i, name in enumerate(header)}
    max_iters = sum(1 for name in header if name.endswith("_error_rate") and name.startswith("neg"))
    max_stages = sum(1 for name in header if name.startswith("acc_stage"))
    c = sum(1 for name in header if name.startswith("neg_count_c"))

    out = []
    for row in body:
        neg_stats = []
        for t in range(1, max_iters + 1):
            cell = row[col[f"neg{t}_error_rate"]]
            if cell == "":
                break
            neg_stats.append(
                IterStat(
                    float(cell),
                    int(row[col[f"neg{t}_wrong"]]),
                    int(row[col[f"neg{t}_assigned"]]),
                )
            )
        accs = []
        for s in range(max_stages):
            cell = row[col[f"acc_stage{s}"]]
            if cell == "":
                break
            accs.append(float(cell))
        names = row[col["stage_names"]]
        out.append(
            EpisodeReport(
                episode_index=int(row[col["episode_index"]]),
                query_accuracy=float(row[col["accuracy"]]),
                per_iteration_accuracy=accs,
                stage_names=names.split(";") if names else [],
                neg_error_per_iteration=neg_stats,
                pos_error=IterStat(
                    float(row[col["pos_error_rate"]]),
                    int(row[col["pos_wrong"]]),
                    int(row[col["pos_assigned"]]),
                ),
                pos_proportion=float(row[col["pos_proportion"]]),
                neg_class_counts=[int(row[col[f"neg_count_c{k}"]]) for k in range(c)],
                pos_class_counts=[int(row[col[f"pos_count_c{k}"]]) for k in range(c)],
            )
        )
    return out
