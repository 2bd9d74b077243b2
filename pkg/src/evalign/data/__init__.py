"""Packaged fixtures: two ontologies and a three-record demo corpus."""

from importlib import resources

from ..io import load_corpus, load_ontology
from ..types import CorpusRecord, Ontology

__all__ = ["news_ontology", "toy_ontology", "demo_corpus"]


def _load(name: str, loader):
    # as_file keeps this working even when the package is not on a plain filesystem
    with resources.as_file(resources.files(__package__) / name) as path:
        return loader(path)


def news_ontology() -> Ontology:
    """News-domain ontology with templates and verb forms."""
    return _load("ontology_news.json", load_ontology)


def toy_ontology() -> Ontology:
    """Ten generic event types with 2-5 roles each."""
    return _load("ontology_toy.json", load_ontology)


def demo_corpus() -> list[CorpusRecord]:
    """Three annotated caption/image records for demos and CLI examples."""
    return _load("demo_corpus.jsonl", load_corpus)
