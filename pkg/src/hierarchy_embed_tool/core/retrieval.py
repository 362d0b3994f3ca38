"""Dot-product retrieval and hierarchy-aware / classical evaluation metrics.

Labels are 0-based indices into the class order of the similarity matrix.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from hierarchy_embed_tool.core.errors import EvaluationError
from hierarchy_embed_tool.core.taxonomy import SimilarityMatrix

logger = logging.getLogger(__name__)

DEFAULT_CUTOFF = 250
DEFAULT_P_AT = (1, 10, 100)


@dataclass(frozen=True)
class RankedItem:
    item_id: object
    label: int
    score: float


@dataclass(frozen=True)
class RankedList:
    """Retrieved database items for one query, best first."""

    query_label: int
    ids: np.ndarray
    labels: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.ids)
        labels = np.asarray(self.labels, dtype=np.int64)
        scores = np.asarray(self.scores, dtype=np.float64)
        if not (ids.shape == labels.shape == scores.shape) or labels.ndim != 1:
            raise EvaluationError("ranked list needs one id, label and score per entry")
        if np.any(np.diff(scores) > 0):
            raise EvaluationError("ranked list scores must be non-increasing")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "scores", scores)

    @classmethod
    def from_entries(cls, query_label: int, entries: Iterable[Tuple[object, int, float]]) -> "RankedList":
        entries = list(entries)
        return cls(
            query_label=query_label,
            ids=np.array([e[0] for e in entries]),
            labels=np.array([e[1] for e in entries], dtype=np.int64),
            scores=np.array([e[2] for e in entries], dtype=np.float64),
        )

    @classmethod
    def from_labels(cls, query_label: int, labels: Sequence[int]) -> "RankedList":
        """Ranking given only by its label sequence; ids are positions, scores decrease."""
        m = len(labels)
        return cls(query_label, np.arange(m), np.asarray(labels), -np.arange(m, dtype=np.float64))

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def entries(self) -> Tuple[RankedItem, ...]:
        return tuple(
            RankedItem(item_id, int(label), float(score))
            for item_id, label, score in zip(self.ids.tolist(), self.labels, self.scores)
        )


@dataclass(frozen=True)
class Database:
    """Labeled feature vectors searched by exhaustive dot-product scan."""

    ids: np.ndarray
    labels: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        ids = np.asarray(self.ids)
        if vectors.ndim != 2 or labels.shape != (vectors.shape[0],) or ids.shape != labels.shape:
            raise EvaluationError("database needs one id and one label per feature vector")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "vectors", vectors)

    @classmethod
    def from_items(cls, items: Iterable[Tuple[object, int, Sequence[float]]]) -> "Database":
        items = list(items)
        if not items:
            raise EvaluationError("empty database")
        return cls(
            ids=np.array([item[0] for item in items]),
            labels=np.array([item[1] for item in items], dtype=np.int64),
            vectors=np.array([item[2] for item in items], dtype=np.float64),
        )

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def without(self, index: int) -> "Database":
        keep = np.arange(len(self)) != index
        return Database(self.ids[keep], self.labels[keep], self.vectors[keep])


@dataclass(frozen=True)
class EvalReport:
    """Aggregated retrieval (and optionally classification) results."""

    cutoff: int
    hp_curve: Tuple[float, ...]
    mahp: float
    map: float
    p_at_k: Dict[int, float]
    num_queries: int
    balanced_accuracy: Optional[float] = None
    warnings: Tuple[str, ...] = field(default_factory=tuple)

    def with_balanced_accuracy(self, value: float) -> "EvalReport":
        return replace(self, balanced_accuracy=value)

    def curve_csv(self) -> str:
        rows = ["k,hp"]
        rows.extend(f"{k},{hp:.17g}" for k, hp in enumerate(self.hp_curve, start=1))
        return "\n".join(rows) + "\n"

    def summary_lines(self, digits: int = 4) -> List[str]:
        lines = [
            f"queries: {self.num_queries}",
            f"mAHP@{self.cutoff}: {self.mahp:.{digits}g}",
            f"mAP: {self.map:.{digits}g}",
        ]
        lines.extend(f"P@{k}: {value:.{digits}g}" for k, value in sorted(self.p_at_k.items()))
        if self.balanced_accuracy is None:
            lines.append("balanced_accuracy: n/a")
        else:
            lines.append(f"balanced_accuracy: {self.balanced_accuracy:.{digits}g}")
        lines.extend(f"warning: {message}" for message in self.warnings)
        return lines


def _id_keys(ids: np.ndarray) -> np.ndarray:
    if ids.dtype.kind in "USO":
        try:
            ids = np.array([int(v) for v in ids.tolist()], dtype=np.int64)
        except (TypeError, ValueError):
            pass
    return np.unique(ids, return_inverse=True)[1].reshape(-1)


def rank(query: np.ndarray, database: Database, query_label: int) -> RankedList:
    """Sort the database by descending dot product with ``query``; ties by ascending id."""
    if len(database) == 0:
        raise EvaluationError("empty database")
    q = np.asarray(query, dtype=np.float64)
    if q.shape != (database.dim,):
        raise EvaluationError(f"query has shape {q.shape} but database vectors have dimension {database.dim}")
    scores = database.vectors @ q
    order = np.lexsort((_id_keys(database.ids), -scores))
    return RankedList(query_label, database.ids[order], database.labels[order], scores[order])


def _query_similarities(r: RankedList, s: SimilarityMatrix) -> np.ndarray:
    n = s.order
    if not 0 <= r.query_label < n or (len(r) and (r.labels.min() < 0 or r.labels.max() >= n)):
        raise EvaluationError(f"labels must lie in [0, {n})")
    return s.values[r.query_label, r.labels]


def _check_cutoff(k: int, m: int, name: str = "k"):
    if not 1 <= k <= m:
        raise EvaluationError(f"{name} must lie in [1, {m}], got {k}")


def _hp_curve(r: RankedList, s: SimilarityMatrix, cutoff: int) -> Tuple[np.ndarray, bool]:
    _check_cutoff(cutoff, len(r), "K")
    sims = _query_similarities(r, s)
    achieved = np.cumsum(sims[:cutoff])
    best = np.cumsum(np.sort(sims)[::-1][:cutoff])
    defined = best > 0
    curve = np.zeros(cutoff, dtype=np.float64)
    np.divide(achieved, best, out=curve, where=defined)
    return np.clip(curve, 0.0, 1.0), not bool(np.all(defined))


def hp_curve(r: RankedList, s: SimilarityMatrix, cutoff: int) -> np.ndarray:
    """HP@1 .. HP@cutoff for one ranking.

    The denominator of HP@k is the similarity mass of the k most similar
    database items, which is the best any ordering can reach. Where it is 0
    HP@k is defined as 0.
    """
    curve, undefined = _hp_curve(r, s, cutoff)
    if undefined:
        logger.debug(f"HP@k undefined for query label {r.query_label}, reported as 0")
    return curve


def hp_at_k(r: RankedList, s: SimilarityMatrix, k: int) -> float:
    _check_cutoff(k, len(r))
    return float(hp_curve(r, s, k)[k - 1])


def ahp_at_k(r: RankedList, s: SimilarityMatrix, cutoff: int) -> float:
    """Area under the HP curve up to ``cutoff`` as the mean of HP@1 .. HP@cutoff."""
    return float(np.mean(hp_curve(r, s, cutoff)))


def mahp(queries: Sequence[RankedList], s: SimilarityMatrix, cutoff: int = DEFAULT_CUTOFF) -> float:
    """Mean AHP over queries; the cutoff is clipped to shorter rankings with a warning."""
    if not queries:
        raise EvaluationError("empty query set")
    if cutoff < 1:
        raise EvaluationError(f"K must be >= 1, got {cutoff}")
    values = []
    clipped = 0
    for r in queries:
        effective = min(cutoff, len(r))
        clipped += effective < cutoff
        values.append(ahp_at_k(r, s, effective))
    if clipped:
        logger.warning(f"K={cutoff} clipped to the database size for {clipped} of {len(queries)} queries")
    return float(np.mean(values))


def _relevance(r: RankedList) -> np.ndarray:
    return r.labels == r.query_label


def average_precision(r: RankedList) -> float:
    """Non-interpolated AP with exact label match as relevance; 0 without relevant items."""
    if len(r) == 0:
        raise EvaluationError("empty ranking")
    relevant = _relevance(r)
    total = int(relevant.sum())
    if total == 0:
        logger.debug(f"No relevant items for query label {r.query_label}, AP reported as 0")
        return 0.0
    precision = np.cumsum(relevant) / np.arange(1, len(r) + 1)
    return float(precision[relevant].sum() / total)


def p_at_k(r: RankedList, k: int) -> float:
    _check_cutoff(k, len(r))
    return float(np.mean(_relevance(r)[:k]))


def mean_average_precision(queries: Sequence[RankedList]) -> float:
    if not queries:
        raise EvaluationError("empty query set")
    return float(np.mean([average_precision(r) for r in queries]))


def balanced_accuracy(truth: Sequence[int], predicted: Sequence[int], num_classes: int) -> float:
    """Mean per-class recall over the classes present in ``truth``."""
    truth = np.asarray(truth, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if truth.size == 0:
        raise EvaluationError("no predictions to score")
    if truth.shape != predicted.shape:
        raise EvaluationError(f"{truth.size} true labels but {predicted.size} predictions")
    for labels in (truth, predicted):
        if labels.min() < 0 or labels.max() >= num_classes:
            raise EvaluationError(f"labels must lie in [0, {num_classes})")

    support = np.bincount(truth, minlength=num_classes)
    hits = np.bincount(truth[truth == predicted], minlength=num_classes)
    present = support > 0
    if not np.all(present):
        logger.info(f"{int(np.sum(~present))} class(es) absent from the ground truth excluded from balanced accuracy")
    return float(np.mean(hits[present] / support[present]))


def leave_one_out_rankings(
    vectors: np.ndarray, labels: Sequence[int], ids: Optional[Sequence[object]] = None
) -> Iterator[RankedList]:
    """Use every item once as the query against all other items."""
    ids = np.arange(len(labels)) if ids is None else np.asarray(ids)
    database = Database(ids=ids, labels=np.asarray(labels), vectors=vectors)
    if len(database) < 2:
        raise EvaluationError("leave-one-out retrieval needs at least two items")
    for i in range(len(database)):
        yield rank(database.vectors[i], database.without(i), int(database.labels[i]))


def evaluate_rankings(
    rankings: Iterable[RankedList],
    s: SimilarityMatrix,
    cutoff: int = DEFAULT_CUTOFF,
    p_at: Sequence[int] = DEFAULT_P_AT,
) -> EvalReport:
    """Aggregate HP curve, mAHP, mAP and P@k over a stream of rankings.

    The mean HP curve at position k averages the queries whose ranking has at
    least k entries.
    """
    if cutoff < 1:
        raise EvaluationError(f"K must be >= 1, got {cutoff}")
    curve_sum = np.zeros(cutoff, dtype=np.float64)
    curve_count = np.zeros(cutoff, dtype=np.int64)
    ahps: List[float] = []
    aps: List[float] = []
    precision: Dict[int, List[float]] = {k: [] for k in p_at}
    clipped = undefined = no_relevant = 0
    shortest = cutoff

    for r in rankings:
        effective = min(cutoff, len(r))
        clipped += effective < cutoff
        shortest = min(shortest, effective)
        curve, has_undefined = _hp_curve(r, s, effective)
        undefined += has_undefined
        curve_sum[:effective] += curve
        curve_count[:effective] += 1
        ahps.append(float(np.mean(curve)))
        relevant = _relevance(r)
        no_relevant += not relevant.any()
        aps.append(average_precision(r))
        for k in p_at:
            if k <= len(r):
                precision[k].append(float(np.mean(relevant[:k])))

    if not ahps:
        raise EvaluationError("empty query set")

    warnings = []
    if clipped:
        warnings.append(f"K={cutoff} clipped to m={shortest} for {clipped} of {len(ahps)} queries")
    if undefined:
        warnings.append(f"HP@k denominator was 0 for {undefined} queries (reported as 0)")
    if no_relevant:
        warnings.append(f"{no_relevant} queries had no relevant items (AP reported as 0)")
    for message in warnings:
        logger.warning(message)

    filled = curve_count > 0
    return EvalReport(
        cutoff=cutoff,
        hp_curve=tuple(float(v) for v in curve_sum[filled] / curve_count[filled]),
        mahp=float(np.mean(ahps)),
        map=float(np.mean(aps)),
        p_at_k={k: float(np.mean(values)) for k, values in precision.items() if values},
        num_queries=len(ahps),
        warnings=tuple(warnings),
    )
