import pytest

from evalign.data import demo_corpus, news_ontology, toy_ontology
from evalign.encoders import ToyEncoder
from evalign.negatives import NegativePair, rotate_arguments, substitute_event_type


@pytest.fixture(scope="session")
def news_ont():
    return news_ontology()


@pytest.fixture(scope="session")
def toy_ont():
    return toy_ontology()


@pytest.fixture(scope="session")
def demo_records():
    return demo_corpus()


@pytest.fixture
def running_record(demo_records):
    # caption about protesters carrying an injured man; event 0 uses bare
    # noun-phrase mention spans, event 1 the full surface phrases
    return demo_records[0]


def build_pair(ev, ont, negative_type="Arrest"):
    return NegativePair(
        positive=ev,
        negative_event=substitute_event_type(ev, negative_type, ont),
        negative_args=rotate_arguments(ev),
        provenance={"negative_event": "confusion", "negative_args": "rotation"},
    )


@pytest.fixture
def running_pair(running_record, news_ont):
    return build_pair(running_record.events[0], news_ont)


@pytest.fixture
def edit_pair(running_record, news_ont):
    return build_pair(running_record.events[1], news_ont)


@pytest.fixture
def encoder(news_ont):
    return ToyEncoder(ontology=news_ont)
