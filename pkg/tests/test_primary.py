import numpy as np
import pytest

from evalign.errors import NoEventError
from evalign.io import embedding_key
from evalign.primary import primary_rankings, select_primary
from evalign.types import (
    Argument,
    CorpusRecord,
    EntityMention,
    EventStructure,
    Span,
)

from helpers import table_provider

CAPTION = "One two three four five six."
E = {
    "One": EntityMention(0, 3, "One", "THING"),
    "two": EntityMention(4, 7, "two", "THING"),
    "three": EntityMention(8, 13, "three", "THING"),
}
TRIGGERS = {
    "two": Span(4, 7, "two"),
    "three": Span(8, 13, "three"),
    "four": Span(14, 18, "four"),
}


def build_record(events, record_id="syn"):
    return CorpusRecord(
        record_id=record_id, caption=CAPTION, image=f"{record_id}.jpg",
        image_size=(64, 64), events=tuple(events),
        entities=tuple(E.values()),
    )


def take_event(depth=2, trigger="two"):
    # Take: 2 roles, toy frequency 200
    return EventStructure("Take", TRIGGERS[trigger],
                          (Argument("taker", E["One"]), Argument("item", E["two"])),
                          dependency_depth=depth)


def give_event(depth=0, trigger="three"):
    # Give: 3 roles, toy frequency 120
    return EventStructure("Give", TRIGGERS[trigger],
                          (Argument("giver", E["One"]), Argument("recipient", E["two"]),
                           Argument("gift", E["three"])),
                          dependency_depth=depth)


def watch_event(depth=1, trigger="four"):
    # Watch: toy frequency 30
    return EventStructure("Watch", TRIGGERS[trigger],
                          (Argument("watcher", E["One"]),), dependency_depth=depth)


def rig_similarity(record, ont, by_trigger):
    """Provider whose image/trigger-span cosines are exactly ``by_trigger``."""
    dim = 8
    overrides = {embedding_key("img", record.record_id): np.eye(dim)[0]}
    for name, cos_target in by_trigger.items():
        span = TRIGGERS[name]
        vec = cos_target * np.eye(dim)[0] + np.sqrt(1 - cos_target**2) * np.eye(dim)[1]
        overrides[embedding_key("span", record.record_id, span.start, span.end)] = vec
    return table_provider([record], ont, dim=dim, seed=0, overrides=overrides)


def test_running_example_primary_is_depth_zero(news_ont, running_record, encoder):
    rankings = primary_rankings(running_record, news_ont, encoder)
    assert select_primary(running_record, news_ont, encoder) == 0
    # the two annotations differ only in dependency depth
    assert rankings[0].ranks == (1, 1, 1, 1)
    assert rankings[1].ranks == (2, 1, 1, 1)
    assert rankings[0].first_places == 4


def test_no_events_raises(news_ont, encoder):
    record = build_record([])
    with pytest.raises(NoEventError):
        select_primary(record, news_ont, encoder)


def test_majority_of_first_places_wins(toy_ont):
    # Give wins depth, argument count, and similarity; Take only frequency
    record = build_record([take_event(), give_event()])
    provider = rig_similarity(record, toy_ont, {"two": 0.2, "three": 0.9})
    rankings = primary_rankings(record, toy_ont, provider)
    assert [r.first_places for r in rankings] == [1, 3]
    assert select_primary(record, toy_ont, provider) == 1


def test_tied_first_places_fall_back_to_criterion_order(toy_ont):
    # Take wins frequency + similarity, Give wins depth + arguments (2 vs 2);
    # the rank vector is compared in criterion priority order, so the
    # depth-winning event comes first
    record = build_record([take_event(), give_event(), watch_event()])
    provider = rig_similarity(record, toy_ont,
                              {"two": 0.9, "three": 0.4, "four": 0.0})
    rankings = primary_rankings(record, toy_ont, provider)
    assert [r.first_places for r in rankings] == [2, 2, 0]
    assert rankings[0].ranks == (3, 2, 1, 1)
    assert rankings[1].ranks == (1, 1, 2, 2)
    assert select_primary(record, toy_ont, provider) == 1


def test_competition_ranks_share_the_best_rank(toy_ont):
    # two events at depth 0 and one deeper: ranks 1, 1, 3 (not 1, 2, 3)
    record = build_record([give_event(depth=0, trigger="three"),
                           take_event(depth=0, trigger="two"),
                           watch_event(depth=1, trigger="four")])
    provider = rig_similarity(record, toy_ont,
                              {"two": 0.5, "three": 0.5, "four": 0.5})
    depth_ranks = [r.ranks[0] for r in primary_rankings(record, toy_ont, provider)]
    assert depth_ranks == [1, 1, 3]


def test_full_tie_breaks_on_lowest_index(toy_ont):
    record = build_record([take_event(), take_event()])
    provider = rig_similarity(record, toy_ont, {"two": 0.5})
    rankings = primary_rankings(record, toy_ont, provider)
    assert rankings[0].ranks == rankings[1].ranks == (1, 1, 1, 1)
    assert select_primary(record, toy_ont, provider) == 0


def test_selection_tracks_the_event_under_permutation(toy_ont):
    events = [take_event(), give_event(), watch_event()]
    sims = {"two": 0.9, "three": 0.4, "four": 0.0}

    record = build_record(events)
    provider = rig_similarity(record, toy_ont, sims)
    winner = record.events[select_primary(record, toy_ont, provider)]

    permuted = build_record(events[::-1], record_id="syn")
    provider2 = rig_similarity(permuted, toy_ont, sims)
    winner2 = permuted.events[select_primary(permuted, toy_ont, provider2)]
    assert winner == winner2


def test_adding_an_argument_never_hurts(toy_ont):
    # identical events except one extra argument: the richer one wins
    short = EventStructure("Give", TRIGGERS["three"],
                           (Argument("giver", E["One"]), Argument("recipient", E["two"])),
                           dependency_depth=0)
    record = build_record([short, give_event(depth=0)])
    provider = rig_similarity(record, toy_ont, {"three": 0.5})
    assert select_primary(record, toy_ont, provider) == 1
