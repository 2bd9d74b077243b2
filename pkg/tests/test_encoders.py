import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evalign.encoders import (
    TableProvider,
    ToyEncoder,
    cosine,
    cosine_distance,
    load_checkpoint,
    save_checkpoint,
)
from evalign.errors import (
    DataError,
    MissingEmbeddingError,
    UndefinedSimilarityError,
    UnregisteredTokenError,
)
from evalign.hashing import derive_seed, stable_hash
from evalign.io import EmbeddingTable
from evalign.types import ReservedToken

from helpers import table_provider


# ---------------------------------------------------------------------------
# cosine

def test_cosine_basics():
    assert cosine([1.0, 0.0], [1.0, 0.0]) == pytest.approx(1.0)
    assert cosine([1.0, 0.0], [-1.0, 0.0]) == pytest.approx(-1.0)
    assert cosine([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.0)
    assert cosine_distance([1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0)


def test_cosine_rejects_zero_vectors():
    with pytest.raises(UndefinedSimilarityError):
        cosine([0.0, 0.0], [1.0, 0.0])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=8),
       st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=8))
def test_cosine_stays_in_range(u, v):
    n = min(len(u), len(v))
    u, v = np.asarray(u[:n]), np.asarray(v[:n])
    if np.linalg.norm(u) == 0 or np.linalg.norm(v) == 0:
        return
    c = cosine(u, v)
    assert -1.0 <= c <= 1.0
    assert c == pytest.approx(cosine(v, u))
    assert cosine(u, u) == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# hashing

def test_stable_hash_is_stable_and_sensitive():
    assert stable_hash("a", 1) == stable_hash("a", 1)
    assert stable_hash("a", 1) != stable_hash("a", 2)
    # the separator keeps concatenations apart
    assert stable_hash("ab", "c") != stable_hash("a", "bc")
    assert stable_hash("a") != stable_hash("a", "")
    assert 0 <= derive_seed(0, "rid", 0) < 2**64


# ---------------------------------------------------------------------------
# toy encoder: text side

def test_encoder_is_deterministic(news_ont, running_record):
    a = ToyEncoder(ontology=news_ont)
    b = ToyEncoder(ontology=news_ont)
    np.testing.assert_array_equal(a.sentence(running_record), b.sentence(running_record))
    np.testing.assert_array_equal(a.image(running_record), b.image(running_record))
    c = ToyEncoder(ontology=news_ont, seed=1)
    assert not np.allclose(a.image(running_record), c.image(running_record))


def test_tokenization_is_case_and_punctuation_insensitive(encoder):
    np.testing.assert_allclose(encoder.text("Hello, WORLD!"), encoder.text("hello world"))
    assert not np.allclose(encoder.text("hello world"), encoder.text("hello earth"))


def test_sentence_equals_full_caption_span(encoder, running_record):
    np.testing.assert_allclose(
        encoder.sentence(running_record),
        encoder.span(running_record, 0, len(running_record.caption)))


def test_span_pooling_matches_token_mean(encoder, running_record):
    # "an injured man" = tokens an/injured/man
    vec = encoder.span(running_record, 32, 46)
    manual = np.mean([encoder._token_feature(t) for t in ("an", "injured", "man")], axis=0)
    np.testing.assert_allclose(vec, manual @ encoder.projection)


def test_span_falls_back_to_overlap(encoder, running_record):
    # a span strictly inside the token "Antigovernment" contains no whole token
    inside = encoder.span(running_record, 2, 6)
    np.testing.assert_allclose(
        inside, encoder._token_feature("antigovernment") @ encoder.projection)


def test_label_embedding_is_its_phrase(encoder):
    np.testing.assert_allclose(
        encoder.label("Transport/agent"), encoder.text("agent of Transport"))
    np.testing.assert_allclose(encoder.label("Transport"), encoder.text("Transport"))
    # role_phrase substitution applies inside role-of-type labels
    np.testing.assert_allclose(
        encoder.label("Transport/origin"), encoder.text("origin place of Transport"))


def test_label_without_ontology_uses_raw_ids():
    enc = ToyEncoder()
    np.testing.assert_allclose(enc.label("T9/toucher"), enc.text("toucher of T9"))


def test_supports_text_flags():
    assert ToyEncoder().supports_text
    table = TableProvider(EmbeddingTable.from_pairs([("img:r", [1.0])]))
    assert not table.supports_text
    with pytest.raises(MissingEmbeddingError):
        table.text("whatever")


# ---------------------------------------------------------------------------
# toy encoder: image side

def test_full_image_bbox_equals_image_embedding(encoder, running_record):
    w, h = running_record.image_size
    np.testing.assert_allclose(
        encoder.region_bbox(running_record, (0, 0, w, h)),
        encoder.image(running_record))


def test_region_pools_intersecting_patches(encoder, running_record):
    # patch size 32: bbox (12, 40, 210, 240) covers columns 0..6 and rows 1..7
    grid = encoder._patch_grid(running_record)
    manual = grid[1:8, 0:7].mean(axis=(0, 1)) @ encoder.projection
    np.testing.assert_allclose(encoder.region(running_record, 0), manual)


def test_subpatch_bbox_uses_single_patch(encoder, running_record):
    grid = encoder._patch_grid(running_record)
    vec = encoder.region_bbox(running_record, (33.0, 1.0, 40.0, 8.0))
    np.testing.assert_allclose(vec, grid[0, 1] @ encoder.projection)


def test_region_rejects_bad_boxes(encoder, running_record):
    with pytest.raises(DataError, match="degenerate"):
        encoder.region_bbox(running_record, (10, 10, 10, 40))
    with pytest.raises(DataError, match="outside"):
        encoder.region_bbox(running_record, (10_000, 10_000, 10_010, 10_010))


def test_images_differ_between_records(encoder, demo_records):
    a = encoder.image(demo_records[0])
    b = encoder.image(demo_records[1])
    assert not np.allclose(a, b)


def test_projection_feeds_every_output(news_ont, running_record):
    enc = ToyEncoder(ontology=news_ont)
    before = (enc.sentence(running_record), enc.image(running_record),
              enc.region(running_record, 0), enc.label("Arrest"))
    enc.projection = enc.projection + 0.05
    after = (enc.sentence(running_record), enc.image(running_record),
             enc.region(running_record, 0), enc.label("Arrest"))
    for b, a in zip(before, after):
        assert not np.allclose(b, a)


# ---------------------------------------------------------------------------
# reserved tokens and segmented text

def test_embed_segments_decomposition(encoder):
    segments = [ReservedToken("X0"), "Transport", ReservedToken("X1")]
    parts = encoder.text_parts(segments)
    assert parts.item_count == 3
    manual = parts.base_mean @ encoder.projection
    for token_id, weight in parts.reserved_weights.items():
        manual = manual + weight * encoder.reserved[token_id]
    np.testing.assert_allclose(encoder.embed_segments(segments), manual)


def test_unregistered_reserved_token(encoder):
    with pytest.raises(UnregisteredTokenError):
        encoder.embed_segments([ReservedToken("X9")])
    encoder.register_reserved_token("X9")
    encoder.embed_segments([ReservedToken("X9")])  # now fine


def test_plain_string_text_parts_match_text(encoder):
    parts = encoder.text_parts("an injured man")
    np.testing.assert_allclose(parts.base_mean @ encoder.projection,
                               encoder.text("an injured man"))


# ---------------------------------------------------------------------------
# checkpoints

def test_checkpoint_round_trip(tmp_path, news_ont, running_record):
    enc = ToyEncoder(ontology=news_ont, dim=12, base_dim=48, seed=5)
    enc.projection = enc.projection + 0.25  # pretend training happened
    enc.reserved["X0"] = enc.reserved["X0"] + 1.0
    path = tmp_path / "ckpt.bin"
    save_checkpoint(enc, path)
    loaded = load_checkpoint(path, ontology=news_ont)
    assert (loaded.dim, loaded.base_dim, loaded.seed) == (12, 48, 5)
    np.testing.assert_allclose(loaded.sentence(running_record),
                               enc.sentence(running_record), atol=1e-6)
    np.testing.assert_allclose(loaded.image(running_record),
                               enc.image(running_record), atol=1e-6)
    np.testing.assert_allclose(loaded.reserved["X0"], enc.reserved["X0"], atol=1e-6)


def test_checkpoint_rejects_huge_seed(tmp_path):
    enc = ToyEncoder(seed=2**24)
    with pytest.raises(DataError, match="seed"):
        save_checkpoint(enc, tmp_path / "ckpt.bin")


def test_checkpoint_rejects_missing_meta(tmp_path):
    from evalign.io import save_embeddings

    save_embeddings(EmbeddingTable.from_pairs([("proj:00000", [0.0] * 4)]),
                    tmp_path / "bad.bin")
    with pytest.raises(DataError, match="metadata"):
        load_checkpoint(tmp_path / "bad.bin")


# ---------------------------------------------------------------------------
# table provider

def test_table_provider_serves_all_kinds(demo_records, news_ont):
    provider = table_provider(demo_records, news_ont, dim=8, seed=3)
    record = demo_records[0]
    assert provider.dim == 8
    assert provider.sentence(record).shape == (8,)
    assert provider.image(record).shape == (8,)
    assert provider.span(record, 15, 25).shape == (8,)
    assert provider.region(record, 2).shape == (8,)
    assert provider.label("Transport/agent").shape == (8,)
    with pytest.raises(MissingEmbeddingError):
        provider.span(record, 1, 2)
