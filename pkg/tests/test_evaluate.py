import dataclasses
import logging
from collections import Counter

import numpy as np
import pytest

from evalign.encoders import ToyEncoder, cosine, cosine_distance
from evalign.errors import DataError
from evalign.evaluate import (
    ArgumentPrediction,
    ExtractionResult,
    PRF,
    RoleSlot,
    SituationFrame,
    TextCandidate,
    confusion_from_predictions,
    iou,
    rank_texts,
    retrieval_scores,
    score_event_extraction,
    score_gsr,
    score_retrieval,
    union_ground,
    zero_shot_arguments,
    zero_shot_type,
)
from evalign.prompts import type_description
from evalign.transport import graph_distance
from evalign.types import image_graph, text_graph

from helpers import table_provider

E = np.eye(8)


# ---------------------------------------------------------------------------
# geometry

def test_iou_hand_cases():
    assert iou((0, 0, 2, 2), (0, 0, 2, 2)) == pytest.approx(1.0)
    assert iou((0, 0, 1, 1), (5, 5, 6, 6)) == 0.0
    # intersection 1, union 4 + 4 - 1
    assert iou((0, 0, 2, 2), (1, 1, 3, 3)) == pytest.approx(1 / 7)
    # touching edges intersect with zero area
    assert iou((0, 0, 1, 1), (1, 0, 2, 1)) == 0.0


def test_iou_is_symmetric():
    rng = np.random.default_rng(0)
    for _ in range(50):
        a = rng.uniform(0, 50, 2)
        b = rng.uniform(0, 50, 2)
        box_a = (a[0], a[1], a[0] + rng.uniform(1, 20), a[1] + rng.uniform(1, 20))
        box_b = (b[0], b[1], b[0] + rng.uniform(1, 20), b[1] + rng.uniform(1, 20))
        value = iou(box_a, box_b)
        assert value == pytest.approx(iou(box_b, box_a))
        assert 0.0 <= value <= 1.0


def test_iou_rejects_degenerate_boxes():
    with pytest.raises(DataError, match="non-degenerate"):
        iou((0, 0, 0, 1), (0, 0, 1, 1))
    with pytest.raises(DataError, match="non-degenerate"):
        iou((0, 0, 1, 1), (2, 3, 2, 4))


def test_union_ground():
    assert union_ground([(1, 2, 3, 4)]) == (1, 2, 3, 4)
    assert union_ground([(0, 0, 2, 2), (1, -1, 3, 1)]) == (0, -1, 3, 2)
    with pytest.raises(DataError, match="at least one"):
        union_ground([])
    with pytest.raises(DataError, match=r"\(n, 4\)"):
        union_ground([(1, 2, 3)])


# ---------------------------------------------------------------------------
# zero-shot typing

def test_zero_shot_type_with_rigged_table(demo_records, news_ont):
    record = demo_records[0]
    provider = table_provider(demo_records, news_ont, overrides={
        "img:demo-0001": E[0],
        "label:Transport": E[0],
        "label:Arrest": E[1],
        "label:Attack": -E[0],
    })
    result = zero_shot_type(record, ["Arrest", "Transport", "Attack"], provider, news_ont)
    assert result.prediction == "Transport"
    assert [t for t, _ in result.ranked] == ["Transport", "Arrest", "Attack"]
    assert result.ranked[0][1] == pytest.approx(1.0)
    assert result.ranked[1][1] == pytest.approx(0.0)
    assert result.ranked[2][1] == pytest.approx(-1.0)
    assert not result.tied


def test_zero_shot_type_tie_keeps_candidate_order(demo_records, news_ont, caplog):
    record = demo_records[0]
    provider = table_provider(demo_records, news_ont, overrides={
        "img:demo-0001": E[0],
        "label:Arrest": E[1],
        "label:Meet": E[1],
    })
    with caplog.at_level(logging.INFO, logger="evalign.evaluate"):
        result = zero_shot_type(record, ["Meet", "Arrest"], provider, news_ont)
    assert result.tied
    assert result.prediction == "Meet"
    assert any("tie" in message for message in caplog.messages)


def test_zero_shot_type_uses_descriptions_when_text_is_supported(demo_records, news_ont):
    record = demo_records[0]
    encoder = ToyEncoder(dim=8, base_dim=32, ontology=news_ont)
    candidates = ["Transport", "Arrest", "Die"]
    result = zero_shot_type(record, candidates, encoder, news_ont)
    image_vec = encoder.image(record)
    for type_id, sim in result.ranked:
        want = cosine(encoder.text(type_description(type_id, news_ont)), image_vec)
        assert sim == pytest.approx(want)
    sims = [s for _, s in result.ranked]
    assert sims == sorted(sims, reverse=True)


def test_zero_shot_type_needs_candidates(demo_records, news_ont, encoder):
    with pytest.raises(DataError, match="at least one candidate"):
        zero_shot_type(demo_records[0], [], encoder, news_ont)


# ---------------------------------------------------------------------------
# zero-shot argument roles

def test_zero_shot_arguments_rigged(demo_records, news_ont):
    record = demo_records[0]  # three detected objects
    provider = table_provider(demo_records, news_ont, overrides={
        "bbox:demo-0001:0": E[0],
        "bbox:demo-0001:1": E[1],
        "bbox:demo-0001:2": E[2],
        "label:Arrest/agent": E[0],
        "label:Arrest/detainee": E[1],
        "label:Arrest/place": E[5],
    })
    got = zero_shot_arguments(record, "Arrest", provider, news_ont)
    assert [a.object_index for a in got] == [0, 1, 2]
    assert got[0].role == "agent" and got[0].similarity == pytest.approx(1.0)
    assert got[1].role == "detainee" and got[1].similarity == pytest.approx(1.0)
    # object 2 is orthogonal to every role label: cosine 0, role arbitrary
    assert got[2].similarity == pytest.approx(0.0)


def test_zero_shot_arguments_threshold(demo_records, news_ont):
    record = demo_records[0]
    provider = table_provider(demo_records, news_ont, overrides={
        "bbox:demo-0001:0": E[0],
        "bbox:demo-0001:1": E[3],
        "bbox:demo-0001:2": E[3],
        "label:Arrest/agent": E[0],
        "label:Arrest/detainee": E[1],
        "label:Arrest/place": E[2],
    })
    # cosine 0 maps to s_hat = 0.5: a threshold above that drops the role
    got = zero_shot_arguments(record, "Arrest", provider, news_ont, threshold=0.6)
    assert got[0].role == "agent"  # s_hat = 1.0
    assert got[1].role is None and got[1].similarity == pytest.approx(0.0)
    assert got[2].role is None
    # at the boundary the role is kept (>=), and 0.0 disables the gate
    boundary = zero_shot_arguments(record, "Arrest", provider, news_ont, threshold=0.5)
    assert boundary[1].role is not None
    ungated = zero_shot_arguments(record, "Arrest", provider, news_ont, threshold=0.0)
    assert all(a.role is not None for a in ungated)


# ---------------------------------------------------------------------------
# extraction scoring

def test_prf_from_counts():
    scores = PRF.from_counts(2, 4, 8)
    assert scores.precision == 0.5
    assert scores.recall == 0.25
    assert scores.f1 == pytest.approx(2 * 0.5 * 0.25 / 0.75)
    empty = PRF.from_counts(0, 0, 0)
    assert (empty.precision, empty.recall, empty.f1) == (0.0, 0.0, 0.0)


def test_extraction_hand_case():
    gold = [ExtractionResult("r1", events=("Attack", "Attack", "Meet"),
                             arguments=(ArgumentPrediction("Attack", "target", (0, 0, 10, 10)),))]
    pred = [ExtractionResult("r1", events=("Attack", "Die"),
                             arguments=(
                                 ArgumentPrediction("Attack", "target", (0, 0, 10, 9)),
                                 ArgumentPrediction("Attack", "target", (50, 50, 60, 60)),
                             ))]
    scores = score_event_extraction(pred, gold)
    assert scores.event.correct == 1
    assert scores.event.precision == pytest.approx(1 / 2)
    assert scores.event.recall == pytest.approx(1 / 3)
    # one argument overlaps at IoU 0.9, the other misses entirely
    assert scores.argument.correct == 1
    assert scores.argument.precision == pytest.approx(1 / 2)
    assert scores.argument.recall == pytest.approx(1.0)


def test_argument_matching_is_greedy_in_prediction_order():
    # box A overlaps both gold cells at exactly IoU 0.5; box B only the first.
    # greedy order matches A to the first gold, leaving B stranded, so the
    # scorer credits 1 even though a maximum matching would credit 2
    gold = [ExtractionResult("r", arguments=(
        ArgumentPrediction("T", "x", (0, 0, 1, 1)),
        ArgumentPrediction("T", "x", (1, 0, 2, 1)),
    ))]
    pred = [ExtractionResult("r", arguments=(
        ArgumentPrediction("T", "x", (0, 0, 2, 1)),
        ArgumentPrediction("T", "x", (0, 0, 1, 1)),
    ))]
    assert score_event_extraction(pred, gold).argument.correct == 1


def test_extraction_requires_matching_record_ids():
    with pytest.raises(DataError, match="do not match"):
        score_event_extraction([ExtractionResult("a")], [ExtractionResult("b")])
    with pytest.raises(DataError, match="duplicate"):
        score_event_extraction(
            [ExtractionResult("a"), ExtractionResult("a")],
            [ExtractionResult("a"), ExtractionResult("a")])


def _separated_cell(i):
    # disjoint 9x9 cells on a 10-pixel grid: distinct cells never overlap
    x0 = 10.0 * (i % 8)
    y0 = 10.0 * (i // 8)
    return (x0, y0, x0 + 9.0, y0 + 9.0)


def _jitter(box, rng):
    dx = rng.uniform(-0.4, 0.4, size=4)
    return (box[0] + dx[0], box[1] + dx[1], box[2] + dx[2], box[3] + dx[3])


def test_extraction_matches_counting_oracle():
    # with well-separated boxes the IoU matching degenerates to multiset
    # counting over (type, role, cell), which an independent oracle can do
    rng = np.random.default_rng(77)
    types = ["Attack", "Meet", "Die"]
    roles = ["agent", "place"]
    preds, golds = [], []
    oracle_ev = Counter()
    oracle_ev_pred = oracle_ev_gold = 0
    oracle_arg = Counter()
    oracle_arg_pred = oracle_arg_gold = 0
    for r in range(40):
        rid = f"rec-{r:02d}"
        gold_events = [types[rng.integers(3)] for _ in range(rng.integers(0, 4))]
        pred_events = [types[rng.integers(3)] for _ in range(rng.integers(0, 4))]
        gold_args, gold_keys = [], []
        for _ in range(rng.integers(0, 5)):
            key = (types[rng.integers(3)], roles[rng.integers(2)], int(rng.integers(0, 6)))
            gold_keys.append(key)
            gold_args.append(ArgumentPrediction(key[0], key[1], _separated_cell(key[2])))
        pred_args, pred_keys = [], []
        for _ in range(rng.integers(0, 5)):
            key = (types[rng.integers(3)], roles[rng.integers(2)], int(rng.integers(0, 6)))
            pred_keys.append(key)
            pred_args.append(ArgumentPrediction(
                key[0], key[1], _jitter(_separated_cell(key[2]), rng)))
        preds.append(ExtractionResult(rid, tuple(pred_events), tuple(pred_args)))
        golds.append(ExtractionResult(rid, tuple(gold_events), tuple(gold_args)))
        oracle_ev += Counter(pred_events) & Counter(gold_events)
        oracle_ev_pred += len(pred_events)
        oracle_ev_gold += len(gold_events)
        oracle_arg += Counter(pred_keys) & Counter(gold_keys)
        oracle_arg_pred += len(pred_args)
        oracle_arg_gold += len(gold_args)

    scores = score_event_extraction(preds, golds)
    assert scores.event == PRF.from_counts(
        sum(oracle_ev.values()), oracle_ev_pred, oracle_ev_gold)
    assert scores.argument == PRF.from_counts(
        sum(oracle_arg.values()), oracle_arg_pred, oracle_arg_gold)


# ---------------------------------------------------------------------------
# situation recognition scoring

def frame(rid, verb, **roles):
    return SituationFrame(rid, verb, {k: v for k, v in roles.items()})


def test_gsr_hand_case():
    golds = [
        frame("a", "carry",
              agent=RoleSlot("man", (0, 0, 10, 10)),
              place=RoleSlot("street", None)),
        frame("b", "arrest",
              agent=RoleSlot("police", (5, 5, 9, 9))),
    ]
    preds = [
        frame("a", "carry",
              agent=RoleSlot("man", (0, 0, 10, 9)),   # IoU 0.9: grounded
              place=RoleSlot("street", (1, 1, 2, 2))),  # gold expects no box
        frame("b", "ride",
              agent=RoleSlot("police", (5, 5, 9, 9))),  # wrong verb: no credit
    ]
    scores = score_gsr(preds, golds)
    assert scores.records == 2
    assert scores.verb == pytest.approx(1 / 2)
    assert scores.value == pytest.approx(2 / 3)
    assert scores.value_all == pytest.approx(1 / 2)
    assert scores.ground == pytest.approx(1 / 3)
    assert scores.ground_all == pytest.approx(0.0)


def test_gsr_full_credit_and_ungrounded_agreement():
    golds = [frame("a", "meet", agent=RoleSlot("crowd", None))]
    preds = [frame("a", "meet", agent=RoleSlot("crowd", None))]
    scores = score_gsr(preds, golds)
    assert (scores.verb, scores.value, scores.value_all) == (1.0, 1.0, 1.0)
    assert (scores.ground, scores.ground_all) == (1.0, 1.0)


def test_gsr_missing_and_extra_roles():
    golds = [frame("a", "meet",
                   agent=RoleSlot("crowd", None), place=RoleSlot("square", None))]
    preds = [frame("a", "meet", agent=RoleSlot("crowd", None),
                   extra=RoleSlot("noise", None))]
    scores = score_gsr(preds, golds)
    assert scores.value == pytest.approx(1 / 2)  # place is missing, extra ignored
    assert scores.value_all == 0.0


def test_gsr_roleless_gold_counts_verb_only():
    golds = [frame("a", "meet"), frame("b", "carry")]
    preds = [frame("a", "meet"), frame("b", "meet")]
    scores = score_gsr(preds, golds)
    assert scores.verb == 0.5
    assert scores.value == 0.0  # no role slots exist at all
    assert scores.value_all == 0.5  # vacuous per-record credit follows the verb


def test_gsr_is_order_invariant():
    golds = [frame("a", "meet", x=RoleSlot("u", None)),
             frame("b", "carry", y=RoleSlot("v", (0, 0, 2, 2)))]
    preds = [frame("a", "meet", x=RoleSlot("u", None)),
             frame("b", "carry", y=RoleSlot("w", (0, 0, 2, 2)))]
    assert score_gsr(preds, golds) == score_gsr(preds[::-1], golds)


def test_gsr_needs_gold():
    with pytest.raises(DataError, match="at least one"):
        score_gsr([], [])


# ---------------------------------------------------------------------------
# retrieval scoring

def test_retrieval_hand_case():
    S = np.array([[0.5, 0.9],
                  [0.1, 0.2]])
    scores = score_retrieval(S, ks=(1, 2))
    # row 0's gold 0.5 loses to 0.9; row 1's gold 0.2 wins
    assert scores.text_to_image[1] == pytest.approx(0.5)
    assert scores.text_to_image[2] == pytest.approx(1.0)
    # columns: gold 0.5 beats 0.1; gold 0.2 loses to 0.9
    assert scores.image_to_text[1] == pytest.approx(0.5)
    assert scores.image_to_text[2] == pytest.approx(1.0)


def test_retrieval_ties_are_optimistic():
    S = np.full((3, 3), 0.7)
    scores = score_retrieval(S, ks=(1,))
    assert scores.text_to_image[1] == 1.0
    assert scores.image_to_text[1] == 1.0


def test_retrieval_monotone_transform_invariance():
    rng = np.random.default_rng(9)
    S = rng.normal(size=(6, 6))
    base = score_retrieval(S, ks=(1, 3, 5))
    warped = score_retrieval(np.exp(2.0 * S) + 5.0, ks=(1, 3, 5))
    assert base == warped


def test_retrieval_with_permutation_gold():
    S = np.array([[0.1, 0.9],
                  [0.8, 0.2]])
    scores = score_retrieval(S, gold=[1, 0], ks=(1,))
    assert scores.text_to_image[1] == 1.0
    assert scores.image_to_text[1] == 1.0


def test_retrieval_k_capping_logs(caplog):
    S = np.eye(3)
    with caplog.at_level(logging.WARNING, logger="evalign.evaluate"):
        scores = score_retrieval(S, ks=(10,))
    assert scores.text_to_image[10] == 1.0
    assert any("capped" in m for m in caplog.messages)


def test_retrieval_against_sorting_oracle():
    rng = np.random.default_rng(31)
    S = rng.normal(size=(7, 7))
    perm = rng.permutation(7)
    got = score_retrieval(S, gold=perm.tolist(), ks=(1, 2, 5))

    def oracle(matrix, gold, k):
        hits = 0
        for q in range(matrix.shape[0]):
            order = sorted(matrix[q], reverse=True)
            rank = 1 + sum(1 for s in order if s > matrix[q, gold[q]])
            hits += rank <= k
        return hits / matrix.shape[0]

    inverse = np.empty(7, dtype=int)
    inverse[perm] = np.arange(7)
    for k in (1, 2, 5):
        assert got.text_to_image[k] == pytest.approx(oracle(S, perm, k))
        assert got.image_to_text[k] == pytest.approx(oracle(S.T, inverse, k))


@pytest.mark.parametrize("kwargs, message", [
    ({"scores": np.zeros((0, 3))}, "non-empty"),
    ({"scores": np.zeros((2, 3))}, "square"),
    ({"scores": np.zeros((2, 2)), "gold": [0]}, "one column index"),
    ({"scores": np.zeros((2, 2)), "gold": [0, 5]}, "out of range"),
    ({"scores": np.zeros((2, 2)), "gold": [1, 1]}, "bijection"),
])
def test_retrieval_input_validation(kwargs, message):
    with pytest.raises(DataError, match=message):
        score_retrieval(**kwargs)


def test_retrieval_scores_matrix(demo_records, news_ont):
    provider = table_provider(demo_records, news_ont)
    records = demo_records[:2]
    S = retrieval_scores(records, provider, news_ont, gamma=0.2, graph_weight=0.5)
    for i, rec_t in enumerate(records):
        for j, rec_i in enumerate(records):
            d_text = cosine_distance(provider.sentence(rec_t), provider.image(rec_i))
            d_graph = graph_distance(
                text_graph(rec_t, 0), image_graph(rec_i), provider, news_ont, 0.2).distance
            assert S[i, j] == pytest.approx(-d_text - 0.5 * d_graph)


def test_retrieval_scores_without_graph_term(demo_records, news_ont):
    provider = table_provider(demo_records, news_ont)
    records = [demo_records[0], dataclasses.replace(demo_records[1], events=())]
    S = retrieval_scores(records, provider, news_ont, graph_weight=0.0)
    S_none = retrieval_scores(records, provider, None)
    for i in range(2):
        for j in range(2):
            d_text = cosine_distance(
                provider.sentence(records[i]), provider.image(records[j]))
            assert S[i, j] == pytest.approx(-d_text)
    np.testing.assert_allclose(S, S_none)
    # an eventless record simply skips its graph row
    S_mixed = retrieval_scores(records, provider, news_ont, graph_weight=1.0)
    assert S_mixed[1, 0] == pytest.approx(S[1, 0])
    assert S_mixed[0, 0] < S[0, 0]


# ---------------------------------------------------------------------------
# description ranking

def test_rank_texts_orders_by_distance(demo_records, news_ont):
    record = demo_records[0]
    encoder = ToyEncoder(dim=8, base_dim=32, ontology=news_ont)
    candidates = [
        TextCandidate("Completely unrelated words about gardening."),
        TextCandidate(record.caption, record=record, event_index=0),
        TextCandidate(record.caption),
    ]
    ranked = rank_texts(record, candidates, encoder, news_ont, graph_weight=0.0)
    with_graph = rank_texts(record, candidates, encoder, news_ont, graph_weight=1.0)

    # with the graph term off, the two caption candidates tie exactly
    # (sentence embedding == full-caption text) and the sort is stable
    by_index = {r.index: r for r in ranked}
    assert by_index[1].distance == pytest.approx(by_index[2].distance)
    assert ranked.index(by_index[1]) < ranked.index(by_index[2])
    image_vec = encoder.image(record)
    for r in ranked:
        want = cosine_distance(encoder.text(candidates[r.index].text), image_vec)
        assert r.text_distance == pytest.approx(want)
        assert r.distance == pytest.approx(want)
    assert all(r.graph_distance == 0.0 for r in ranked)
    assert [r.distance for r in ranked] == sorted(r.distance for r in ranked)

    # the record-backed candidate pays its transport distance on top
    backed = next(r for r in with_graph if r.index == 1)
    want = graph_distance(
        text_graph(record, 0), image_graph(record), encoder, news_ont, 0.1).distance
    assert backed.graph_distance == pytest.approx(want)
    assert backed.distance == pytest.approx(backed.text_distance + want)


def test_rank_texts_needs_candidates(demo_records, news_ont, encoder):
    with pytest.raises(DataError, match="at least one candidate"):
        rank_texts(demo_records[0], [], encoder, news_ont)


# ---------------------------------------------------------------------------
# confusion export

def test_confusion_from_predictions_counts():
    cm = confusion_from_predictions(
        ["A", "A", "B", "B", "B"],
        ["A", "B", "B", "B", "A"])
    assert cm.labels == ("A", "B")
    np.testing.assert_array_equal(cm.counts, [[1, 1], [1, 2]])
    assert cm.row("B").tolist() == [1, 2]


def test_confusion_with_explicit_labels():
    cm = confusion_from_predictions(["A"], ["A"], labels=["B", "A", "C"])
    assert cm.labels == ("B", "A", "C")
    assert cm.counts[1, 1] == 1 and cm.counts.sum() == 1


def test_confusion_validation():
    with pytest.raises(DataError, match="differ in length"):
        confusion_from_predictions(["A"], ["A", "B"])
    with pytest.raises(DataError, match="gold label"):
        confusion_from_predictions(["Z"], ["A"], labels=["A"])
    with pytest.raises(DataError, match="predicted label"):
        confusion_from_predictions(["A"], ["Z"], labels=["A"])
