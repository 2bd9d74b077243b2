"""Zero-shot event prediction and benchmark-style scorers.

Scorers are pure functions over prediction/gold structures so they can be
checked against brute-force reimplementations. The zero-shot functions turn
a provider plus ontology into predictions; everything composes in the CLI.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .encoders import EmbeddingProvider, cosine, cosine_distance
from .errors import DataError
from .io import ConfusionMatrix
from .prompts import type_description
from .types import CorpusRecord, Ontology, image_graph

__all__ = [
    "TypingResult",
    "RoleAssignment",
    "ExtractionResult",
    "ArgumentPrediction",
    "PRF",
    "ExtractionScores",
    "SituationFrame",
    "RoleSlot",
    "GsrScores",
    "RetrievalScores",
    "TextCandidate",
    "RankedCandidate",
    "iou",
    "union_ground",
    "zero_shot_type",
    "zero_shot_arguments",
    "score_event_extraction",
    "score_gsr",
    "score_retrieval",
    "retrieval_scores",
    "rank_texts",
    "confusion_from_predictions",
]

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# geometry

def iou(box_a: Sequence[float], box_b: Sequence[float]) -> float:
    """Intersection over union of two (x0, y0, x1, y1) boxes."""
    ax0, ay0, ax1, ay1 = box_a
    bx0, by0, bx1, by1 = box_b
    if ax1 <= ax0 or ay1 <= ay0 or bx1 <= bx0 or by1 <= by0:
        raise DataError("iou needs non-degenerate boxes")
    ix0, iy0 = max(ax0, bx0), max(ay0, by0)
    ix1, iy1 = min(ax1, bx1), min(ay1, by1)
    inter = max(0.0, ix1 - ix0) * max(0.0, iy1 - iy0)
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union


def union_ground(boxes: Sequence[Sequence[float]]) -> tuple[float, float, float, float]:
    """Smallest box covering all the given boxes (per-coordinate min/max hull)."""
    if not boxes:
        raise DataError("union_ground needs at least one box")
    arr = np.asarray(boxes, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise DataError("boxes must be (n, 4)")
    return (
        float(arr[:, 0].min()),
        float(arr[:, 1].min()),
        float(arr[:, 2].max()),
        float(arr[:, 3].max()),
    )


# ---------------------------------------------------------------------------
# zero-shot prediction

@dataclass(frozen=True)
class TypingResult:
    """Candidate event types ranked by image/description similarity."""

    ranked: tuple[tuple[str, float], ...]  # (type_id, similarity), best first
    tied: bool

    @property
    def prediction(self) -> str:
        return self.ranked[0][0]


def _candidate_vector(type_id: str, provider: EmbeddingProvider, ont: Ontology) -> np.ndarray:
    if provider.supports_text:
        return provider.text(type_description(type_id, ont))
    # table-backed providers store the candidate description under the label key
    return provider.label(type_id)


def zero_shot_type(
    record: CorpusRecord,
    candidates: Sequence[str],
    provider: EmbeddingProvider,
    ont: Ontology,
) -> TypingResult:
    """Rank candidate event types against the image.

    Each candidate is rendered to its zero-argument description ("The image
    is about T.") and scored by cosine similarity; ties keep candidate order
    and are logged.
    """
    if not candidates:
        raise DataError("zero_shot_type needs at least one candidate type")
    image_vec = provider.image(record)
    scores = [
        (type_id, cosine(_candidate_vector(type_id, provider, ont), image_vec))
        for type_id in candidates
    ]
    ranked = sorted(scores, key=lambda pair: -pair[1])  # stable: ties keep input order
    tied = len(ranked) > 1 and ranked[0][1] == ranked[1][1]
    if tied:
        log.info("record %s: zero-shot typing tie at score %.6f between %r and %r",
                 record.record_id, ranked[0][1], ranked[0][0], ranked[1][0])
    return TypingResult(ranked=tuple(ranked), tied=tied)


@dataclass(frozen=True)
class RoleAssignment:
    object_index: int
    role: str | None  # None when every role fell below the threshold
    similarity: float


def zero_shot_arguments(
    record: CorpusRecord,
    event_type: str,
    provider: EmbeddingProvider,
    ont: Ontology,
    threshold: float = 0.0,
) -> tuple[RoleAssignment, ...]:
    """Assign each detected object the best role of ``event_type``.

    Roles are scored by cosine between the region embedding and the
    "<role> of <TYPE>" description. ``threshold`` applies to the similarity
    mapped into [0, 1] (s_hat = (cos + 1) / 2); the default 0.0 disables it,
    so every object receives a role.
    """
    roles = ont.roles_of(event_type)
    out = []
    for index in range(len(record.objects)):
        region = provider.region(record, index)
        scored = [
            (role, cosine(region, provider.label(f"{event_type}/{role}")))
            for role in roles
        ]
        best_role, best_sim = max(scored, key=lambda pair: pair[1])
        s_hat = (best_sim + 1.0) / 2.0
        assigned = best_role if s_hat >= threshold else None
        out.append(RoleAssignment(object_index=index, role=assigned, similarity=best_sim))
    return tuple(out)


# ---------------------------------------------------------------------------
# multimedia event extraction scoring

@dataclass(frozen=True)
class ArgumentPrediction:
    event_type: str
    role: str
    bbox: tuple[float, float, float, float]


@dataclass(frozen=True)
class ExtractionResult:
    """Predicted (or gold) events and grounded arguments for one record."""

    record_id: str
    events: tuple[str, ...] = ()
    arguments: tuple[ArgumentPrediction, ...] = ()


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    correct: int
    predicted: int
    gold: int

    @classmethod
    def from_counts(cls, correct: int, predicted: int, gold: int) -> PRF:
        # empty prediction sets score zero precision by convention
        p = correct / predicted if predicted else 0.0
        r = correct / gold if gold else 0.0
        f = 2 * p * r / (p + r) if (p + r) else 0.0
        return cls(precision=p, recall=r, f1=f, correct=correct, predicted=predicted, gold=gold)


@dataclass(frozen=True)
class ExtractionScores:
    event: PRF
    argument: PRF


IOU_THRESHOLD = 0.5


def _pair_by_record(preds, golds, what: str):
    pred_ids = [p.record_id for p in preds]
    gold_ids = [g.record_id for g in golds]
    if sorted(pred_ids) != sorted(gold_ids):
        raise DataError(f"{what}: prediction and gold record ids do not match")
    if len(set(pred_ids)) != len(pred_ids):
        raise DataError(f"{what}: duplicate record ids in predictions")
    gold_by_id = {g.record_id: g for g in golds}
    return [(p, gold_by_id[p.record_id]) for p in preds]


def score_event_extraction(
    preds: Sequence[ExtractionResult], golds: Sequence[ExtractionResult]
) -> ExtractionScores:
    """Precision/recall/F1 for event typing and argument extraction.

    Event credit is multiset intersection of predicted and gold types per
    record. An argument is correct when an unmatched gold argument shares its
    event type and role and overlaps its box with IoU >= 0.5 (greedy matching
    in prediction order).
    """
    ev_correct = ev_pred = ev_gold = 0
    arg_correct = arg_pred = arg_gold = 0
    for pred, gold in _pair_by_record(preds, golds, "event extraction"):
        ev_pred += len(pred.events)
        ev_gold += len(gold.events)
        remaining = list(gold.events)
        for etype in pred.events:
            if etype in remaining:
                remaining.remove(etype)
                ev_correct += 1
        arg_pred += len(pred.arguments)
        arg_gold += len(gold.arguments)
        unmatched = list(gold.arguments)
        for parg in pred.arguments:
            for garg in unmatched:
                if (
                    parg.event_type == garg.event_type
                    and parg.role == garg.role
                    and iou(parg.bbox, garg.bbox) >= IOU_THRESHOLD
                ):
                    unmatched.remove(garg)
                    arg_correct += 1
                    break
    return ExtractionScores(
        event=PRF.from_counts(ev_correct, ev_pred, ev_gold),
        argument=PRF.from_counts(arg_correct, arg_pred, arg_gold),
    )


# ---------------------------------------------------------------------------
# situation recognition scoring

@dataclass(frozen=True)
class RoleSlot:
    value: str | None = None
    bbox: tuple[float, float, float, float] | None = None


@dataclass(frozen=True)
class SituationFrame:
    """Verb plus role slots for one image (prediction or gold)."""

    record_id: str
    verb: str
    roles: Mapping[str, RoleSlot] = field(default_factory=dict)


@dataclass(frozen=True)
class GsrScores:
    verb: float
    value: float
    value_all: float
    ground: float
    ground_all: float
    records: int


def _slot_value_correct(pred: RoleSlot | None, gold: RoleSlot) -> bool:
    return pred is not None and pred.value == gold.value


def _slot_ground_correct(pred: RoleSlot | None, gold: RoleSlot) -> bool:
    if not _slot_value_correct(pred, gold):
        return False
    assert pred is not None
    if gold.bbox is None:
        return pred.bbox is None
    return pred.bbox is not None and iou(pred.bbox, gold.bbox) >= IOU_THRESHOLD


def score_gsr(
    preds: Sequence[SituationFrame], golds: Sequence[SituationFrame]
) -> GsrScores:
    """Verb accuracy plus value / value-all / ground / ground-all.

    A wrong verb zeroes all argument credit for that record. Value compares
    role fillers; ground additionally needs the bbox to match (IoU >= 0.5;
    an ungrounded gold slot expects an ungrounded prediction).
    """
    if not golds:
        raise DataError("score_gsr needs at least one gold frame")
    verb_hits = 0
    value_hits = value_total = 0
    ground_hits = 0
    value_all_hits = ground_all_hits = 0
    pairs = _pair_by_record(preds, golds, "situation frames")
    for pred, gold in pairs:
        verb_ok = pred.verb == gold.verb
        verb_hits += verb_ok
        all_value = all_ground = verb_ok
        for role, gslot in gold.roles.items():
            value_total += 1
            pslot = pred.roles.get(role) if verb_ok else None
            v_ok = verb_ok and _slot_value_correct(pslot, gslot)
            g_ok = verb_ok and _slot_ground_correct(pslot, gslot)
            value_hits += v_ok
            ground_hits += g_ok
            all_value = all_value and v_ok
            all_ground = all_ground and g_ok
        value_all_hits += all_value
        ground_all_hits += all_ground
    n = len(pairs)
    return GsrScores(
        verb=verb_hits / n,
        value=value_hits / value_total if value_total else 0.0,
        value_all=value_all_hits / n,
        ground=ground_hits / value_total if value_total else 0.0,
        ground_all=ground_all_hits / n,
        records=n,
    )


# ---------------------------------------------------------------------------
# retrieval

@dataclass(frozen=True)
class RetrievalScores:
    text_to_image: Mapping[int, float]  # k -> recall@k
    image_to_text: Mapping[int, float]


def _recall_at_k(scores: np.ndarray, gold: np.ndarray, ks: Sequence[int]) -> dict[int, float]:
    n, m = scores.shape
    out = {}
    ranks = []
    for q in range(n):
        gold_score = scores[q, gold[q]]
        # optimistic ranks: ties do not push the gold item down
        ranks.append(1 + int(np.sum(scores[q] > gold_score)))
    for k in ks:
        k_eff = min(k, m)
        if k_eff < k:
            log.warning("recall@%d capped to list length %d", k, m)
        out[k] = float(np.mean([r <= k_eff for r in ranks]))
    return out


def score_retrieval(
    scores,
    gold: Sequence[int] | None = None,
    ks: Sequence[int] = (1, 5, 10),
) -> RetrievalScores:
    """Recall@k in both directions from a text x image score matrix.

    ``gold[q]`` is the correct image column for text row q (identity by
    default, requiring a square matrix); the mapping must be a bijection so
    the image-to-text direction is well defined. Ranks use strict comparison
    only, so any strictly monotone transform of the scores leaves them
    unchanged.
    """
    S = np.asarray(scores, dtype=np.float64)
    if S.ndim != 2 or S.size == 0:
        raise DataError("scores must be a non-empty 2-D matrix")
    n, m = S.shape
    if gold is None:
        if n != m:
            raise DataError("identity gold needs a square score matrix")
        gold_arr = np.arange(n)
    else:
        gold_arr = np.asarray(gold, dtype=np.int64)
        if gold_arr.shape != (n,):
            raise DataError(f"gold must have one column index per text row ({n})")
        if np.any(gold_arr < 0) or np.any(gold_arr >= m):
            raise DataError("gold column index out of range")
        if len(set(gold_arr.tolist())) != n or n != m:
            raise DataError("gold must be a bijection between rows and columns")
    inverse = np.empty(m, dtype=np.int64)
    inverse[gold_arr] = np.arange(n)
    return RetrievalScores(
        text_to_image=_recall_at_k(S, gold_arr, ks),
        image_to_text=_recall_at_k(S.T, inverse, ks),
    )


def retrieval_scores(
    records: Sequence[CorpusRecord],
    provider: EmbeddingProvider,
    ont: Ontology | None = None,
    *,
    gamma: float = 0.1,
    graph_weight: float = 1.0,
    event_indices: Mapping[str, int] | None = None,
) -> np.ndarray:
    """Pairwise retrieval score matrix: -d(caption_i, image_j) - w * d(G_i, G_j).

    The graph term uses each record's first event unless ``event_indices``
    says otherwise, and is skipped (contributes zero) for records without
    events or when ``graph_weight`` is zero.
    """
    from .transport import graph_distance
    from .types import text_graph

    n = len(records)
    sentence_vecs = [provider.sentence(r) for r in records]
    image_vecs = [provider.image(r) for r in records]
    S = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            S[i, j] = -cosine_distance(sentence_vecs[i], image_vecs[j])
    if graph_weight != 0.0 and ont is not None:
        for i, rec_t in enumerate(records):
            if not rec_t.events:
                continue
            idx = event_indices.get(rec_t.record_id, 0) if event_indices else 0
            gt = text_graph(rec_t, idx)
            for j, rec_i in enumerate(records):
                result = graph_distance(gt, image_graph(rec_i), provider, ont, gamma)
                S[i, j] -= graph_weight * result.distance
    return S


# ---------------------------------------------------------------------------
# description ranking

@dataclass(frozen=True)
class TextCandidate:
    """Candidate description; graph-bearing candidates also pay a graph distance.

    ``record``/``event_index`` point at the candidate's own event annotation
    (used both for the graph term and, for table-backed providers, to find
    the text embedding under the record's key).
    """

    text: str
    record: CorpusRecord | None = None
    event_index: int | None = None


@dataclass(frozen=True)
class RankedCandidate:
    index: int
    distance: float
    text_distance: float
    graph_distance: float


def rank_texts(
    record: CorpusRecord,
    candidates: Sequence[TextCandidate],
    provider: EmbeddingProvider,
    ont: Ontology | None = None,
    *,
    gamma: float = 0.1,
    graph_weight: float = 1.0,
) -> list[RankedCandidate]:
    """Order candidate texts by image distance plus graph-transport distance.

    Candidates without an event annotation contribute no graph term. Sorting
    is ascending and stable, so exact ties keep candidate order.
    """
    from .transport import graph_distance
    from .types import text_graph

    if not candidates:
        raise DataError("rank_texts needs at least one candidate")
    image_vec = provider.image(record)
    gi = image_graph(record)
    out = []
    for index, cand in enumerate(candidates):
        if cand.record is not None:
            text_vec = provider.sentence(cand.record)
        else:
            text_vec = provider.text(cand.text)
        d_text = cosine_distance(text_vec, image_vec)
        d_graph = 0.0
        if (
            graph_weight != 0.0
            and ont is not None
            and cand.record is not None
            and cand.event_index is not None
        ):
            gt = text_graph(cand.record, cand.event_index)
            d_graph = graph_distance(gt, gi, provider, ont, gamma).distance
        out.append(RankedCandidate(
            index=index,
            distance=d_text + graph_weight * d_graph,
            text_distance=d_text,
            graph_distance=d_graph,
        ))
    return sorted(out, key=lambda r: r.distance)


# ---------------------------------------------------------------------------
# confusion export

def confusion_from_predictions(
    gold_labels: Sequence[str],
    pred_labels: Sequence[str],
    labels: Sequence[str] | None = None,
) -> ConfusionMatrix:
    """Count gold rows against predicted columns (labels sorted when not given)."""
    if len(gold_labels) != len(pred_labels):
        raise DataError("gold and predicted label lists differ in length")
    if labels is None:
        labels = sorted(set(gold_labels) | set(pred_labels))
    labels = tuple(labels)
    index = {lbl: i for i, lbl in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for g, p in zip(gold_labels, pred_labels):
        if g not in index:
            raise DataError(f"gold label {g!r} not in label list")
        if p not in index:
            raise DataError(f"predicted label {p!r} not in label list")
        counts[index[g], index[p]] += 1
    return ConfusionMatrix(labels, counts)
