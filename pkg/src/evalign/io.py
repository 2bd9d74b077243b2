"""File formats: ontology JSON, line-delimited corpora, embedding tables, confusion CSV.

Binary embedding layout (little-endian throughout):

    magic   4 bytes  b"EVAL"
    version u32      currently 1
    count   u64      number of keys
    dim     u64      vector dimensionality
    keys    count times: u32 byte length + UTF-8 bytes
    data    count*dim float32, row-major, rows in key order

Corpus files are UTF-8 JSON objects, one record per line; loader errors carry
1-based line numbers. Confusion matrices are CSV with a label header row and
the same labels down the first column.
"""

from __future__ import annotations

import csv
import json
import struct
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorpusError, DataError, FormatError, MissingEmbeddingError
from .types import (
    Argument,
    CorpusRecord,
    EntityMention,
    EntityType,
    EventStructure,
    EventType,
    ObjectDetection,
    Ontology,
    Span,
)
from .validation import bbox_problems, span_problems

__all__ = [
    "EmbeddingTable",
    "ConfusionMatrix",
    "load_ontology",
    "save_ontology",
    "load_corpus",
    "save_corpus",
    "load_embeddings",
    "save_embeddings",
    "load_confusion",
    "save_confusion",
    "embedding_key",
    "event_to_dict",
    "event_from_dict",
    "record_to_dict",
]

_MAGIC = b"EVAL"
_VERSION = 1


# ---------------------------------------------------------------------------
# embedding tables

def embedding_key(kind: str, *parts: object) -> str:
    """Canonical table keys: img:<rid>, txt:<rid>, span:<rid>:<s>-<e>, bbox:<rid>:<i>, label:<id>."""
    if kind in ("img", "txt"):
        (record_id,) = parts
        return f"{kind}:{record_id}"
    if kind == "span":
        record_id, start, end = parts
        return f"span:{record_id}:{start}-{end}"
    if kind == "bbox":
        record_id, index = parts
        return f"bbox:{record_id}:{index}"
    if kind == "label":
        (ident,) = parts
        return f"label:{ident}"
    raise ValueError(f"unknown key kind {kind!r}")


@dataclass(frozen=True)
class EmbeddingTable:
    """Immutable key -> float32 vector store."""

    keys: tuple[str, ...]
    matrix: np.ndarray  # shape (len(keys), dim), float32

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=np.float32)
        if m.ndim != 2:
            raise DataError(f"embedding matrix must be 2-D, got shape {m.shape}")
        if m.shape[0] != len(self.keys):
            raise DataError(f"{len(self.keys)} keys but {m.shape[0]} rows")
        if len(set(self.keys)) != len(self.keys):
            raise DataError("duplicate keys in embedding table")
        if m.size and not np.all(np.isfinite(m)):
            raise DataError("embedding matrix contains non-finite values")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "_index", {k: i for i, k in enumerate(self.keys)})

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, Sequence[float]]], dim: int | None = None) -> EmbeddingTable:
        keys, rows = [], []
        for key, vec in pairs:
            keys.append(key)
            rows.append(np.asarray(vec, dtype=np.float32))
        if rows:
            matrix = np.stack(rows)
        else:
            if dim is None:
                raise DataError("empty table needs an explicit dim")
            matrix = np.zeros((0, dim), dtype=np.float32)
        return cls(tuple(keys), matrix)

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    def __len__(self) -> int:
        return len(self.keys)

    def __contains__(self, key: str) -> bool:
        return key in self._index  # type: ignore[attr-defined]

    def vector(self, key: str) -> np.ndarray:
        """Stored row as float64 (raises MissingEmbeddingError if absent)."""
        idx = self._index.get(key)  # type: ignore[attr-defined]
        if idx is None:
            raise MissingEmbeddingError(key)
        return np.asarray(self.matrix[idx], dtype=np.float64)


def save_embeddings(table: EmbeddingTable, path: str | Path) -> None:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<Q", len(table.keys)))
        fh.write(struct.pack("<Q", table.dim))
        for key in table.keys:
            raw = key.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        fh.write(np.ascontiguousarray(table.matrix, dtype="<f4").tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    raw = fh.read(n)
    if len(raw) != n:
        raise FormatError(f"truncated embedding file: expected {n} bytes for {what}, got {len(raw)}")
    return raw


def load_embeddings(path: str | Path) -> EmbeddingTable:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {_MAGIC!r}")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != _VERSION:
            raise FormatError(f"unsupported embedding file version {version}")
        (count,) = struct.unpack("<Q", _read_exact(fh, 8, "key count"))
        (dim,) = struct.unpack("<Q", _read_exact(fh, 8, "dim"))
        keys = []
        for i in range(count):
            (klen,) = struct.unpack("<I", _read_exact(fh, 4, f"key {i} length"))
            keys.append(_read_exact(fh, klen, f"key {i}").decode("utf-8"))
        body = _read_exact(fh, count * dim * 4, "vector data")
        extra = fh.read(1)
        if extra:
            raise FormatError("trailing bytes after vector data")
    matrix = np.frombuffer(body, dtype="<f4").reshape(count, dim).copy()
    if matrix.size and not np.all(np.isfinite(matrix)):
        raise DataError("embedding file contains non-finite values")
    return EmbeddingTable(tuple(keys), matrix)


# ---------------------------------------------------------------------------
# confusion matrices

@dataclass(frozen=True)
class ConfusionMatrix:
    """Square count matrix; rows are gold labels, columns predictions."""

    labels: tuple[str, ...]
    counts: np.ndarray  # shape (k, k), nonnegative integers

    def __post_init__(self) -> None:
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise DataError(f"confusion counts must be square, got shape {c.shape}")
        if c.shape[0] != len(self.labels):
            raise DataError(f"{len(self.labels)} labels but {c.shape[0]} rows")
        if len(set(self.labels)) != len(self.labels):
            raise DataError("duplicate confusion labels")
        if np.any(c < 0):
            raise DataError("confusion counts must be nonnegative")
        object.__setattr__(self, "counts", c)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(label) from None

    def row(self, label: str) -> np.ndarray:
        return self.counts[self.index(label)]


def load_confusion(path: str | Path) -> ConfusionMatrix:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty confusion file")
    header = rows[0]
    if header and header[0] != "":
        raise FormatError(f"{path}: first header cell must be empty, got {header[0]!r}")
    labels = tuple(header[1:])
    if not labels:
        raise FormatError(f"{path}: no labels in header")
    body = rows[1:]
    if len(body) != len(labels):
        raise FormatError(f"{path}: {len(labels)} labels in header but {len(body)} data rows")
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for i, row in enumerate(body):
        if len(row) != len(labels) + 1:
            raise FormatError(f"{path}: row {i + 2} has {len(row)} cells, expected {len(labels) + 1}")
        if row[0] != labels[i]:
            raise FormatError(f"{path}: row {i + 2} label {row[0]!r} does not match header {labels[i]!r}")
        for j, cell in enumerate(row[1:]):
            try:
                value = int(cell)
            except ValueError:
                raise FormatError(f"{path}: row {i + 2} cell {j + 2} is not an integer: {cell!r}") from None
            counts[i, j] = value
    return ConfusionMatrix(labels, counts)


def save_confusion(cm: ConfusionMatrix, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([""] + list(cm.labels))
        for label, row in zip(cm.labels, cm.counts):
            writer.writerow([label] + [int(v) for v in row])


# ---------------------------------------------------------------------------
# ontology

def _ontology_to_dict(ont: Ontology) -> dict:
    return {
        "event_types": [
            {
                "id": et.type_id,
                "label": et.label,
                "roles": list(et.roles),
                **({"template": et.template} if et.template is not None else {}),
                **({"verb_forms": dict(et.verb_forms)} if et.verb_forms else {}),
            }
            for et in ont.event_types
        ],
        "role_descriptions": dict(ont.role_descriptions),
        "entity_types": [{"id": nt.type_id, "label": nt.label} for nt in ont.entity_types],
        "type_frequency": {k: int(v) for k, v in ont.type_frequency.items()},
    }


def _ontology_from_dict(doc: dict) -> Ontology:
    try:
        event_types = tuple(
            EventType(
                type_id=str(et["id"]),
                label=str(et["label"]),
                roles=tuple(str(r) for r in et["roles"]),
                template=et.get("template"),
                verb_forms={str(k): str(v) for k, v in et.get("verb_forms", {}).items()},
            )
            for et in doc["event_types"]
        )
        return Ontology(
            event_types=event_types,
            role_descriptions={str(k): str(v) for k, v in doc.get("role_descriptions", {}).items()},
            entity_types=tuple(
                EntityType(str(nt["id"]), str(nt["label"])) for nt in doc.get("entity_types", [])
            ),
            type_frequency={str(k): int(v) for k, v in doc.get("type_frequency", {}).items()},
        )
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed ontology document: {exc!r}") from exc


def load_ontology(path: str | Path) -> Ontology:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON: {exc}") from exc
    return _ontology_from_dict(doc)


def save_ontology(ont: Ontology, path: str | Path) -> None:
    # sort_keys + fixed indent makes save(load(save(x))) byte-identical
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_ontology_to_dict(ont), fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


# ---------------------------------------------------------------------------
# corpus

def _require(obj: dict, key: str, line: int) -> object:
    if key not in obj:
        raise CorpusError(f"missing field", line=line, field=key)
    return obj[key]


def _parse_record(obj: dict, line: int) -> CorpusRecord:
    record_id = str(_require(obj, "record_id", line))
    caption = _require(obj, "caption", line)
    if not isinstance(caption, str):
        raise CorpusError("caption must be a string", line=line, record_id=record_id, field="caption")
    image = str(_require(obj, "image", line))
    size = _require(obj, "image_size", line)
    if (not isinstance(size, (list, tuple)) or len(size) != 2
            or not all(isinstance(v, int) and v > 0 for v in size)):
        raise CorpusError("image_size must be two positive integers", line=line,
                          record_id=record_id, field="image_size")
    image_size = (int(size[0]), int(size[1]))

    entities = []
    for i, ent in enumerate(obj.get("entities", [])):
        start, end = ent.get("start"), ent.get("end")
        problems = span_problems(start, end, len(caption), f"entity {i}")
        if problems:
            raise CorpusError("; ".join(problems), line=line, record_id=record_id, field="entities")
        entities.append(EntityMention(start=start, end=end, text=caption[start:end],
                                      entity_type=str(ent.get("entity_type", ""))))

    objects = []
    for i, det in enumerate(obj.get("objects", [])):
        bbox = det.get("bbox", [])
        problems = bbox_problems(bbox, image_size, f"object {i}")
        if problems:
            raise CorpusError("; ".join(problems), line=line, record_id=record_id, field="objects")
        confidence = float(det.get("confidence", 1.0))
        if not 0.0 <= confidence <= 1.0:
            raise CorpusError(f"object {i}: confidence {confidence} outside [0, 1]",
                              line=line, record_id=record_id, field="objects")
        objects.append(ObjectDetection(bbox=tuple(float(c) for c in bbox),
                                       object_type=str(det.get("object_type", "")),
                                       confidence=confidence))

    events = []
    for i, ev in enumerate(obj.get("events", [])):
        trig = ev.get("trigger")
        if not isinstance(trig, (list, tuple)) or len(trig) != 2:
            raise CorpusError(f"event {i}: trigger must be [start, end]", line=line,
                              record_id=record_id, field="events")
        problems = span_problems(trig[0], trig[1], len(caption), f"event {i} trigger")
        if problems:
            raise CorpusError("; ".join(problems), line=line, record_id=record_id, field="events")
        args = []
        for j, arg in enumerate(ev.get("arguments", [])):
            idx = arg.get("entity")
            if not isinstance(idx, int) or not 0 <= idx < len(entities):
                raise CorpusError(
                    f"event {i} argument {j} references entity {idx!r} "
                    f"but record has {len(entities)} entities",
                    line=line, record_id=record_id, field="events")
            args.append(Argument(role=str(arg.get("role", "")), entity=entities[idx]))
        depth = ev.get("dependency_depth", 0)
        if not isinstance(depth, int) or depth < 0:
            raise CorpusError(f"event {i}: dependency_depth must be a nonnegative integer",
                              line=line, record_id=record_id, field="events")
        events.append(EventStructure(
            event_type=str(ev.get("event_type", "")),
            trigger=Span(trig[0], trig[1], caption[trig[0]:trig[1]]),
            arguments=tuple(args),
            dependency_depth=depth,
        ))

    return CorpusRecord(record_id=record_id, caption=caption, image=image,
                        image_size=image_size, events=tuple(events),
                        entities=tuple(entities), objects=tuple(objects))


def load_corpus(path: str | Path) -> list[CorpusRecord]:
    """Parse a line-delimited corpus; raises CorpusError with 1-based line numbers."""
    records: list[CorpusRecord] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"invalid JSON: {exc.msg}", line=line_no) from exc
            if not isinstance(obj, dict):
                raise CorpusError("record must be a JSON object", line=line_no)
            record = _parse_record(obj, line_no)
            if record.record_id in seen:
                raise CorpusError("duplicate record_id", line=line_no, record_id=record.record_id)
            seen.add(record.record_id)
            records.append(record)
    return records


def event_to_dict(record: CorpusRecord, ev: EventStructure) -> dict:
    """JSON-ready event dict, arguments referring to the record's entities by index."""
    ent_index = {(e.start, e.end, e.entity_type): i for i, e in enumerate(record.entities)}

    def entity_ref(ent: EntityMention) -> int:
        key = (ent.start, ent.end, ent.entity_type)
        if key not in ent_index:
            raise DataError(
                f"record {record.record_id!r}: event argument entity "
                f"{ent.text!r} is not in the record's entity list")
        return ent_index[key]

    return {
        "event_type": ev.event_type,
        "trigger": [ev.trigger.start, ev.trigger.end],
        "dependency_depth": ev.dependency_depth,
        "arguments": [{"role": a.role, "entity": entity_ref(a.entity)} for a in ev.arguments],
    }


def event_from_dict(record: CorpusRecord, doc: dict) -> EventStructure:
    """Inverse of event_to_dict against the same record."""
    try:
        start, end = doc["trigger"]
        args = tuple(
            Argument(role=str(a["role"]), entity=record.entities[int(a["entity"])])
            for a in doc["arguments"]
        )
        return EventStructure(
            event_type=str(doc["event_type"]),
            trigger=Span(int(start), int(end), record.caption[int(start):int(end)]),
            arguments=args,
            dependency_depth=int(doc.get("dependency_depth", 0)),
        )
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise FormatError(f"malformed event document: {exc!r}") from exc


def record_to_dict(record: CorpusRecord) -> dict:
    """JSON-ready dict for one record (arguments refer to entities by index)."""
    return {
        "record_id": record.record_id,
        "caption": record.caption,
        "image": record.image,
        "image_size": list(record.image_size),
        "entities": [
            {"start": e.start, "end": e.end, "entity_type": e.entity_type}
            for e in record.entities
        ],
        "objects": [
            {"bbox": list(o.bbox), "object_type": o.object_type, "confidence": o.confidence}
            for o in record.objects
        ],
        "events": [event_to_dict(record, ev) for ev in record.events],
    }


def save_corpus(records: Iterable[CorpusRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record_to_dict(record), ensure_ascii=False, sort_keys=True))
            fh.write("\n")
