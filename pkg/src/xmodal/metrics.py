"""Retrieval evaluation over a fused index, in either query direction.

Covers paired-item accuracy@k and mean similarity@k, plus the
label-consistency suite: precision@k by binary label, F1 of the top-1
neighbor's label, ROC AUC of a similarity-weighted abnormal vote, and
mean average precision of label-match relevance. Entries without a
label never count as a label match.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, LabelError, ParameterError
from .index import FusedIndex, search
from .ingest import ABNORMAL, EmbeddingSet
from .model import ModelParams, apply_adapter

DEFAULT_KS = (1, 3, 5, 10)


@dataclass
class MetricsReport:
    direction: str  # "i2t" or "t2i"
    ks: tuple
    accuracy_at: dict = field(default_factory=dict)
    mean_similarity_at: dict = field(default_factory=dict)
    label_precision_at: dict = field(default_factory=dict)
    f1: float = 0.0
    roc_auc: float = 0.5
    mean_ap: float = 0.0
    exclude_self: bool = False
    n_queries: int = 0

    def to_dict(self) -> dict:
        return {
            "direction": self.direction,
            "ks": list(self.ks),
            "accuracy_at": {str(k): v for k, v in self.accuracy_at.items()},
            "mean_similarity_at": {str(k): v for k, v in self.mean_similarity_at.items()},
            "label_precision_at": {str(k): v for k, v in self.label_precision_at.items()},
            "f1": self.f1,
            "roc_auc": self.roc_auc,
            "mean_ap": self.mean_ap,
            "exclude_self": self.exclude_self,
            "n_queries": self.n_queries,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(
            direction=d["direction"],
            ks=tuple(d["ks"]),
            accuracy_at={int(k): v for k, v in d["accuracy_at"].items()},
            mean_similarity_at={int(k): v for k, v in d["mean_similarity_at"].items()},
            label_precision_at={int(k): v for k, v in d["label_precision_at"].items()},
            f1=d["f1"],
            roc_auc=d["roc_auc"],
            mean_ap=d["mean_ap"],
            exclude_self=d["exclude_self"],
            n_queries=d["n_queries"],
        )


def retrieval_accuracy(results_per_query, truth_ids, k: int) -> float:
    """Fraction of queries whose own study id appears in their top-k."""
    if len(results_per_query) != len(truth_ids):
        raise ParameterError("one truth id required per query")
    if not results_per_query:
        raise DataError("no queries")
    hits = sum(
        1 for res, truth in zip(results_per_query, truth_ids) if any(h.study_id == truth for h in res[:k])
    )
    return hits / len(results_per_query)


def mean_similarity_at_k(results_per_query, k: int) -> float:
    """Flat average of all scores across all queries' top-k entries."""
    scores = [h.score for res in results_per_query for h in res[:k]]
    if not scores:
        raise DataError("no retrieval results to average")
    return float(np.mean(scores))


def label_precision_at_k(results_per_query, query_labels, k: int) -> float:
    """Mean over queries of the top-k fraction sharing the query's label."""
    if len(results_per_query) != len(query_labels):
        raise ParameterError("one label required per query")
    if not results_per_query:
        raise DataError("no queries")
    fractions = []
    for res, label in zip(results_per_query, query_labels):
        top = res[:k]
        if not top:
            raise DataError("a query returned no results")
        fractions.append(sum(1 for h in top if h.label == label) / len(top))
    return float(np.mean(fractions))


def binary_f1(predictions, truths) -> float:
    """F1 with abnormal (1) as the positive class; empty denominators give 0."""
    pred = np.asarray(predictions)
    truth = np.asarray(truths)
    if pred.shape != truth.shape:
        raise ParameterError("predictions and truths must align")
    if not (np.all(np.isin(pred, (0, 1))) and np.all(np.isin(truth, (0, 1)))):
        raise LabelError("labels must be 0 or 1")
    tp = int(np.sum((pred == 1) & (truth == 1)))
    fp = int(np.sum((pred == 1) & (truth == 0)))
    fn = int(np.sum((pred == 0) & (truth == 1)))
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def roc_auc(scores, labels) -> float:
    """Mann-Whitney statistic of the scores against the binary labels.

    Ties count one half; degenerate label sets (all one class) return 0.5.
    Equals the trapezoidal area under the empirical ROC curve.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ParameterError("scores and labels must be aligned 1-D sequences")
    if not np.all(np.isin(y, (0, 1))):
        raise LabelError("labels must be 0 or 1")
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        return 0.5
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s), dtype=np.float64)
    sorted_s = s[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * ((i + 1) + (j + 1))  # midrank, 1-based
        i = j + 1
    rank_sum_pos = float(np.sum(ranks[y == 1]))
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def average_precision(relevance) -> float:
    """AP of a ranked binary relevance sequence; zero relevant gives 0."""
    rel = np.asarray(relevance, dtype=np.float64)
    n_rel = rel.sum()
    if n_rel == 0:
        return 0.0
    cumulative = np.cumsum(rel)
    precisions = cumulative / np.arange(1, len(rel) + 1)
    return float(np.sum(precisions * rel) / n_rel)


def mean_average_precision(results_per_query, query_labels, k: int) -> float:
    """Mean over queries of AP of label-match relevance within top-k."""
    if len(results_per_query) != len(query_labels):
        raise ParameterError("one label required per query")
    if not results_per_query:
        raise DataError("no queries")
    aps = [
        average_precision([1 if h.label == label else 0 for h in res[:k]])
        for res, label in zip(results_per_query, query_labels)
    ]
    return float(np.mean(aps))


def abnormality_score(hits) -> float:
    """Similarity-weighted abnormal vote over a hit list.

    Sum of scores on abnormal hits over the sum of all scores; falls back
    to a plain abnormal fraction when the score mass is (near) zero.
    """
    total = sum(h.score for h in hits)
    abnormal = sum(h.score for h in hits if h.label == ABNORMAL)
    if abs(total) < 1e-12:
        return sum(1 for h in hits if h.label == ABNORMAL) / len(hits)
    return abnormal / total


def full_report(
    index: FusedIndex,
    queries: EmbeddingSet,
    params: ModelParams | None,
    direction: str,
    ks=DEFAULT_KS,
    exclude_self: bool = False,
) -> MetricsReport:
    """Evaluate one retrieval direction of a query set against the index.

    ``direction`` selects the query modality (i2t = image queries,
    t2i = text queries); ``params=None`` evaluates the raw backbone
    embeddings. Self-matches stay in the candidate pool unless
    ``exclude_self`` is set.
    """
    if direction not in ("i2t", "t2i"):
        raise ParameterError(f"direction must be 'i2t' or 't2i', got {direction!r}")
    if len(queries) == 0:
        raise DataError("empty query set")
    ks = tuple(sorted(set(int(k) for k in ks)))
    if ks[0] < 1:
        raise ParameterError("every k must be >= 1")
    kmax = ks[-1]

    modality = "image" if direction == "i2t" else "text"
    raw = queries.images if modality == "image" else queries.texts
    adapted = apply_adapter(params, raw, modality) if params is not None else raw

    results = []
    for row in range(len(queries)):
        exclude = queries.study_ids[row] if exclude_self else None
        hits = search(index, adapted[row], kmax, exclude_id=exclude)
        if not hits:
            raise DataError(f"query {queries.study_ids[row]!r} has no candidates after self-exclusion")
        results.append(hits)

    labels = [int(l) for l in queries.labels]
    report = MetricsReport(direction=direction, ks=ks, exclude_self=exclude_self, n_queries=len(queries))
    for k in ks:
        report.accuracy_at[k] = retrieval_accuracy(results, queries.study_ids, k)
        report.mean_similarity_at[k] = mean_similarity_at_k(results, k)
        report.label_precision_at[k] = label_precision_at_k(results, labels, k)
    report.f1 = binary_f1([res[0].label if res[0].label in (0, 1) else 0 for res in results], labels)
    report.roc_auc = roc_auc([abnormality_score(res) for res in results], labels)
    report.mean_ap = mean_average_precision(results, labels, kmax)
    return report


_DIRECTION_TITLES = {"i2t": "image-to-text retrieval", "t2i": "text-to-image retrieval"}


def _similarity_row_name(k: int) -> str:
    return f"Similarity score@{k}" if k == 1 else f"Mean similarity score@{k}"


def render_report(report: MetricsReport) -> str:
    """Aligned plain-text table mirroring the retrieval result tables."""
    width = 28
    lines = [
        f"{_DIRECTION_TITLES[report.direction]}  "
        f"(n={report.n_queries}, self-matches {'excluded' if report.exclude_self else 'included'})"
    ]
    lines.append("  -- retrieval accuracy --")
    for k in report.ks:
        lines.append(f"  {f'Accuracy@{k}':<{width}}{report.accuracy_at[k]:>8.3f}")
        lines.append(f"  {_similarity_row_name(k):<{width}}{report.mean_similarity_at[k]:>8.3f}")
    lines.append("  -- retrieval precision by binary labels --")
    first_k = report.ks[0]
    lines.append(f"  {f'Precision@{first_k}':<{width}}{report.label_precision_at[first_k]:>8.3f}")
    lines.append(f"  {_similarity_row_name(first_k):<{width}}{report.mean_similarity_at[first_k]:>8.3f}")
    lines.append(f"  {'F1 score':<{width}}{report.f1:>8.3f}")
    lines.append(f"  {'ROC AUC':<{width}}{report.roc_auc:>8.3f}")
    lines.append(f"  {'mAP':<{width}}{report.mean_ap:>8.3f}")
    for k in report.ks[1:]:
        lines.append(f"  {f'Precision@{k}':<{width}}{report.label_precision_at[k]:>8.3f}")
        lines.append(f"  {_similarity_row_name(k):<{width}}{report.mean_similarity_at[k]:>8.3f}")
    return "\n".join(lines)
