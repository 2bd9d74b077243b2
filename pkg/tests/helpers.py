"""Shared builders: synthetic corpora and table-backed providers."""

from __future__ import annotations

import numpy as np

from evalign.data import toy_ontology
from evalign.encoders import TableProvider
from evalign.io import EmbeddingTable, embedding_key
from evalign.types import (
    Argument,
    CorpusRecord,
    EntityMention,
    EventStructure,
    ObjectDetection,
    Ontology,
    Span,
)

NOUNS = ["farmer", "trader", "builder", "runner", "crowd", "guard", "child", "artist"]
THINGS = ["basket", "ladder", "wagon", "lantern", "rope", "barrel", "kite", "drum"]
PLACES = ["market", "bridge", "harbor", "meadow", "tower", "yard"]


def mention_at(caption: str, phrase: str, entity_type: str) -> EntityMention:
    start = caption.index(phrase)
    return EntityMention(start=start, end=start + len(phrase),
                         text=phrase, entity_type=entity_type)


def make_toy_corpus(n: int, seed: int = 0, ont: Ontology | None = None) -> list[CorpusRecord]:
    """Deterministic synthetic records over the toy ontology.

    Each record carries one event using the first 1-3 roles of a random
    type, entity mentions for every argument, and matching object boxes.
    """
    rng = np.random.default_rng(seed)
    ont = ont or toy_ontology()
    records = []
    for i in range(n):
        et = ont.event_types[int(rng.integers(len(ont.event_types)))]
        verb = et.verb_forms.get("past", et.label.lower())
        subj = NOUNS[int(rng.integers(len(NOUNS)))]
        thing = THINGS[int(rng.integers(len(THINGS)))]
        place = PLACES[int(rng.integers(len(PLACES)))]
        caption = f"The {subj} {verb} the {thing} at the {place}."
        phrases = [f"The {subj}", f"the {thing}", f"the {place}"]
        types = ["PERSON", "THING", "PLACE"]
        k = min(len(et.roles), 1 + int(rng.integers(3)))
        entities = tuple(
            mention_at(caption, phrase, etype)
            for phrase, etype in zip(phrases[:k], types[:k])
        )
        trigger_start = caption.index(verb)
        event = EventStructure(
            event_type=et.type_id,
            trigger=Span(trigger_start, trigger_start + len(verb), verb),
            arguments=tuple(
                Argument(role, ent) for role, ent in zip(et.roles[:k], entities)
            ),
            dependency_depth=0,
        )
        objects = []
        for j in range(k):
            x0 = float(rng.integers(0, 50))
            y0 = float(rng.integers(0, 50))
            objects.append(ObjectDetection(
                bbox=(x0, y0, x0 + float(rng.integers(20, 45)),
                      y0 + float(rng.integers(20, 45))),
                object_type=types[j],
                confidence=float(rng.uniform(0.5, 1.0)),
            ))
        records.append(CorpusRecord(
            record_id=f"toy-{seed}-{i:03d}",
            caption=caption,
            image=f"toy-{seed}-{i:03d}.jpg",
            image_size=(100, 100),
            events=(event,),
            entities=entities,
            objects=tuple(objects),
        ))
    return records


def unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.normal(size=dim)
    return v / np.linalg.norm(v)


def table_keys(records, ont: Ontology | None) -> list[str]:
    """Every key the pipeline can ask a table-backed provider for."""
    keys = []
    for r in records:
        keys.append(embedding_key("txt", r.record_id))
        keys.append(embedding_key("img", r.record_id))
        spans = set()
        for ev in r.events:
            spans.add((ev.trigger.start, ev.trigger.end))
            for a in ev.arguments:
                spans.add((a.entity.start, a.entity.end))
        for e in r.entities:
            spans.add((e.start, e.end))
        for s, e in sorted(spans):
            keys.append(embedding_key("span", r.record_id, s, e))
        for i in range(len(r.objects)):
            keys.append(embedding_key("bbox", r.record_id, i))
    if ont is not None:
        for et in ont.event_types:
            keys.append(embedding_key("label", et.type_id))
            for role in et.roles:
                keys.append(embedding_key("label", f"{et.type_id}/{role}"))
        for nt in ont.entity_types:
            keys.append(embedding_key("label", nt.type_id))
    seen, ordered = set(), []
    for k in keys:
        if k not in seen:
            seen.add(k)
            ordered.append(k)
    return ordered


def table_provider(records, ont: Ontology | None = None, dim: int = 8,
                   seed: int = 0, overrides: dict | None = None) -> TableProvider:
    """Random-unit-vector provider covering all standard keys, with overrides."""
    rng = np.random.default_rng(seed)
    vectors = {key: unit(rng, dim) for key in table_keys(records, ont)}
    if overrides:
        vectors.update(overrides)
    return TableProvider(EmbeddingTable.from_pairs(vectors.items()))
