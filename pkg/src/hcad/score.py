"""Multi-round anomaly scoring, ranking, ROC-AUC and report files."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from scipy.stats import rankdata

from .graph import AttributedGraph
from .model import HCADModel, collate
from .sampler import NEGATIVE, POSITIVE, SCORE_STREAM, RwrConfig, make_pair, pair_rng

EVAL_CHUNK = 1024


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class ScoreConfig:
    rounds: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")


@dataclass
class AnomalyReport:
    scores: np.ndarray  # Q_i
    mean_negative: np.ndarray  # mean q^- per node
    mean_positive: np.ndarray  # mean q^+ per node
    ranking: np.ndarray
    rounds: int
    seed: int
    auc: float | None = None
    detail: np.ndarray | None = None  # (n, R, 2) as (q^-, q^+) when requested

    def margins(self) -> np.ndarray:
        return np.abs(self.mean_negative - self.mean_positive)


def rank_nodes(scores: np.ndarray) -> np.ndarray:
    """Node ids by descending score, ties by ascending id."""
    scores = np.asarray(scores, dtype=np.float64)
    return np.lexsort((np.arange(scores.size), -scores))


def _evaluate(model: HCADModel, g: AttributedGraph, pairs) -> np.ndarray:
    out = []
    with torch.no_grad():
        for start in range(0, len(pairs), EVAL_CHUNK):
            out.append(model(collate(pairs[start:start + EVAL_CHUNK], g)).numpy())
    return np.concatenate(out) if out else np.zeros(0)


def _round_pairs(g: AttributedGraph, nodes, round_index: int, rwr_cfg: RwrConfig, seed: int):
    pairs = []
    for v in nodes:
        v = int(v)
        for polarity in (NEGATIVE, POSITIVE):
            pairs.append(make_pair(g, v, polarity, rwr_cfg, pair_rng(seed, SCORE_STREAM, round_index, v, polarity)))
    return pairs


def round_score(model: HCADModel, g: AttributedGraph, v: int, round_index: int, cfg: ScoreConfig,
                rwr_cfg: RwrConfig) -> tuple[float, float]:
    """(q^-, q^+) for node v in one round, from the (seed, v, round) keyed streams."""
    q = _evaluate(model, g, _round_pairs(g, [v], round_index, rwr_cfg, cfg.seed))
    return float(q[0]), float(q[1])


def multi_round_score(model: HCADModel, g: AttributedGraph, cfg: ScoreConfig, rwr_cfg: RwrConfig,
                      keep_detail: bool = False, rounds_order=None) -> AnomalyReport:
    """Q_i = mean over rounds of (q^-_{i,r} - q^+_{i,r})."""
    model.eval()
    n = g.n
    order = range(cfg.rounds) if rounds_order is None else rounds_order
    detail = np.zeros((n, cfg.rounds, 2))
    for r in order:
        q = _evaluate(model, g, _round_pairs(g, range(n), r, rwr_cfg, cfg.seed))
        detail[:, r, 0] = q[0::2]
        detail[:, r, 1] = q[1::2]
    # summation in round order regardless of evaluation order
    diffs = detail[:, :, 0] - detail[:, :, 1]
    scores = diffs.sum(axis=1) / cfg.rounds
    report = AnomalyReport(
        scores=scores,
        mean_negative=detail[:, :, 0].mean(axis=1),
        mean_positive=detail[:, :, 1].mean(axis=1),
        ranking=rank_nodes(scores),
        rounds=cfg.rounds,
        seed=cfg.seed,
        detail=detail if keep_detail else None,
    )
    if g.labels is not None and 0 < g.labels.sum() < n:
        report.auc = roc_auc(scores, g.labels)
    return report


def roc_auc(scores, labels) -> float:
    """P(random anomaly scores above random normal node), ties counted one half."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise MetricError("scores and labels differ in length")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("ROC-AUC is undefined with a single class")
    ranks = rankdata(scores)  # average ranks for ties
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_curve_points(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    """(false positive rate, true positive rate) at every distinct threshold, starting at (0, 0)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    cut = np.r_[np.flatnonzero(np.diff(s)), y.size - 1]
    tp = np.cumsum(y == 1)[cut]
    fp = np.cumsum(y != 1)[cut]
    tpr = np.r_[0.0, tp / max(tp[-1], 1)]
    fpr = np.r_[0.0, fp / max(fp[-1], 1)]
    return fpr, tpr


def write_scores_csv(path, scores: np.ndarray) -> None:
    ranking = rank_nodes(scores)
    rank = np.empty_like(ranking)
    rank[ranking] = np.arange(1, ranking.size + 1)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_id", "score", "rank"])
        for i, s in enumerate(scores):
            w.writerow([i, repr(float(s)), int(rank[i])])


def read_scores_csv(path) -> np.ndarray:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(rows[0]) != {"node_id", "score", "rank"}:
        raise ValueError(f"{path}: expected header node_id,score,rank")
    ids = np.array([int(r["node_id"]) for r in rows])
    if not np.array_equal(np.sort(ids), np.arange(ids.size)):
        raise ValueError(f"{path}: node ids are not 0..n-1")
    scores = np.empty(ids.size)
    scores[ids] = [float(r["score"]) for r in rows]
    return scores


def emit_report(report: AnomalyReport, out_dir, checkpoint_id: str | None = None,
                margin_detail: bool = False, labels=None) -> dict[str, Path]:
    """Write scores.csv, summary.json and optionally margins.csv / roc.csv under out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"scores": out_dir / "scores.csv", "summary": out_dir / "summary.json"}
    write_scores_csv(paths["scores"], report.scores)
    summary = {
        "auc": report.auc,
        "rounds": report.rounds,
        "seed": report.seed,
        "checkpoint": checkpoint_id,
        "n": int(report.scores.size),
    }
    with open(paths["summary"], "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if margin_detail:
        paths["margins"] = out_dir / "margins.csv"
        with open(paths["margins"], "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["node_id", "negative", "positive", "margin"])
            for i, (neg, pos, m) in enumerate(zip(report.mean_negative, report.mean_positive, report.margins())):
                w.writerow([i, f"{neg:.4f}", f"{pos:.4f}", f"{m:.4f}"])
    if labels is not None and 0 < int(np.sum(labels)) < len(labels):
        paths["roc"] = out_dir / "roc.csv"
        fpr, tpr = roc_curve_points(report.scores, labels)
        with open(paths["roc"], "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["fpr", "tpr"])
            w.writerows(zip(fpr.tolist(), tpr.tolist()))
    return paths
