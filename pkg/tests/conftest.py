import numpy as np
import pytest

from laakso.core import JSequence
from laakso.graph import build_graph, default_form
from laakso.spectral import eigendecompose


@pytest.fixture(scope="session")
def S21():
    return JSequence(j=2, k=1)


@pytest.fixture(scope="session")
def S31():
    return JSequence(j=3, k=1)


@pytest.fixture(scope="session")
def SALT():
    # alternating 2,3,2,3,...
    return JSequence(j=2, mode="periodic", pattern=(2, 3))


@pytest.fixture(scope="session")
def graph_of():
    """Memoized graph factory shared across the whole test session."""
    cache = {}

    def get(seq, N):
        if (seq, N) not in cache:
            cache[(seq, N)] = build_graph(seq, N)
        return cache[(seq, N)]

    return get


@pytest.fixture(scope="session")
def spectrum_of(graph_of):
    cache = {}

    def get(seq, N):
        if (seq, N) not in cache:
            G = graph_of(seq, N)
            cache[(seq, N)] = eigendecompose(default_form(G))
        return cache[(seq, N)]

    return get


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
