import pytest

from rigel.embedder import EmbedConfig, embed_graph
from rigel.generators import scale_free, small_world


@pytest.fixture(scope="session")
def sw_graph():
    return small_world(400, 10, 0.1, seed=5)


@pytest.fixture(scope="session")
def sw_embedding(sw_graph):
    return embed_graph(sw_graph, EmbedConfig(landmark_count=40, seed=1))


@pytest.fixture(scope="session")
def sf_graph():
    return scale_free(300, 3, seed=2)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
