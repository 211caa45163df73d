import numpy as np
import pytest

import walkdp as wd


@pytest.fixture(scope="session")
def client():
    from starlette.testclient import TestClient

    from walkdp.service.app import create_app

    with TestClient(create_app(), raise_server_exceptions=False) as c:
        yield c


@pytest.fixture(scope="session")
def two_node_lazy():
    spec = wd.GraphSpec(n=2, edges=((0, 1),))
    return wd.build_transition(spec, "lazy_simple_walk")


@pytest.fixture(scope="session")
def ring8_mh():
    spec = wd.named_graph("ring:8")
    return wd.build_transition(spec, "metropolis_hastings")


def random_connected_graph(rng: np.random.Generator, n: int) -> wd.GraphSpec:
    """Random spanning tree plus extra edges; always connected."""
    edges = set()
    nodes = list(rng.permutation(n))
    for a, b in zip(nodes, nodes[1:]):
        edges.add((min(a, b), max(a, b)))
    extra = rng.integers(0, n * (n - 1) // 2 + 1)
    for _ in range(extra):
        a, b = rng.integers(0, n, size=2)
        if a != b:
            edges.add((min(a, b), max(a, b)))
    return wd.GraphSpec(n=n, edges=tuple(sorted(edges)))
