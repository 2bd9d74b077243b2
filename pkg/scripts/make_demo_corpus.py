"""Regenerate src/evalign/data/demo_corpus.jsonl (spans computed, not hand-counted)."""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from evalign.io import save_corpus
from evalign.types import (
    Argument,
    CorpusRecord,
    EntityMention,
    EventStructure,
    ObjectDetection,
    Span,
)


def span(caption: str, phrase: str) -> tuple[int, int]:
    start = caption.index(phrase)
    return start, start + len(phrase)


def mention(caption: str, phrase: str, entity_type: str) -> EntityMention:
    s, e = span(caption, phrase)
    return EntityMention(start=s, end=e, text=phrase, entity_type=entity_type)


CAPTION_1 = (
    "Antigovernment protesters carry an injured man on a stretcher "
    "after clashes with riot police on Independence Square in Kyiv."
)
CAPTION_2 = "Riot police arrested a demonstrator near the square."
CAPTION_3 = "Protesters clashed with riot police during a demonstration in the capital."


def record_1() -> CorpusRecord:
    c = CAPTION_1
    ents = (
        mention(c, "protesters", "PER"),
        mention(c, "an injured man", "PER"),
        mention(c, "a stretcher", "VEH"),
        mention(c, "Antigovernment protesters", "PER"),
        mention(c, "riot police", "PER"),
        mention(c, "Independence Square", "FAC"),
        mention(c, "Kyiv", "LOC"),
    )
    trig = Span(*span(c, "carry"), "carry")
    events = (
        EventStructure(
            event_type="Transport",
            trigger=trig,
            arguments=(
                Argument("agent", ents[0]),
                Argument("entity", ents[1]),
                Argument("instrument", ents[2]),
            ),
            dependency_depth=0,
        ),
        EventStructure(
            event_type="Transport",
            trigger=trig,
            arguments=(
                Argument("agent", ents[3]),
                Argument("entity", ents[1]),
                Argument("instrument", ents[2]),
            ),
            dependency_depth=1,
        ),
    )
    objects = (
        ObjectDetection(bbox=(12.0, 40.0, 210.0, 240.0), object_type="PER", confidence=0.97),
        ObjectDetection(bbox=(220.0, 60.0, 420.0, 250.0), object_type="PER", confidence=0.93),
        ObjectDetection(bbox=(180.0, 140.0, 460.0, 300.0), object_type="VEH", confidence=0.88),
    )
    return CorpusRecord(
        record_id="demo-0001",
        caption=c,
        image="demo-0001.jpg",
        image_size=(640, 480),
        events=events,
        entities=ents,
        objects=objects,
    )


def record_2() -> CorpusRecord:
    c = CAPTION_2
    ents = (
        mention(c, "Riot police", "PER"),
        mention(c, "a demonstrator", "PER"),
        mention(c, "the square", "FAC"),
    )
    events = (
        EventStructure(
            event_type="Arrest",
            trigger=Span(*span(c, "arrested"), "arrested"),
            arguments=(
                Argument("agent", ents[0]),
                Argument("detainee", ents[1]),
                Argument("place", ents[2]),
            ),
            dependency_depth=0,
        ),
    )
    objects = (
        ObjectDetection(bbox=(30.0, 50.0, 300.0, 400.0), object_type="PER", confidence=0.95),
        ObjectDetection(bbox=(310.0, 80.0, 560.0, 410.0), object_type="PER", confidence=0.91),
    )
    return CorpusRecord(
        record_id="demo-0002",
        caption=c,
        image="demo-0002.jpg",
        image_size=(640, 427),
        events=events,
        entities=ents,
        objects=objects,
    )


def record_3() -> CorpusRecord:
    c = CAPTION_3
    ents = (
        mention(c, "Protesters", "PER"),
        mention(c, "riot police", "PER"),
        mention(c, "the capital", "LOC"),
    )
    events = (
        EventStructure(
            event_type="Attack",
            trigger=Span(*span(c, "clashed"), "clashed"),
            arguments=(
                Argument("attacker", ents[0]),
                Argument("target", ents[1]),
                Argument("place", ents[2]),
            ),
            dependency_depth=0,
        ),
        EventStructure(
            event_type="Demonstrate",
            trigger=Span(*span(c, "demonstration"), "demonstration"),
            arguments=(
                Argument("demonstrator", ents[0]),
                Argument("place", ents[2]),
            ),
            dependency_depth=2,
        ),
    )
    objects = (
        ObjectDetection(bbox=(0.0, 100.0, 390.0, 580.0), object_type="PER", confidence=0.96),
        ObjectDetection(bbox=(400.0, 120.0, 790.0, 560.0), object_type="PER", confidence=0.9),
        ObjectDetection(bbox=(250.0, 0.0, 620.0, 240.0), object_type="FAC", confidence=0.62),
    )
    return CorpusRecord(
        record_id="demo-0003",
        caption=c,
        image="demo-0003.jpg",
        image_size=(800, 600),
        events=events,
        entities=ents,
        objects=objects,
    )


if __name__ == "__main__":
    out = pathlib.Path(__file__).resolve().parents[1] / "src/evalign/data/demo_corpus.jsonl"
    save_corpus([record_1(), record_2(), record_3()], out)
    print(f"wrote {out}")
