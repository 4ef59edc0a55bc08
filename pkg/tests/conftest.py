import random

import pytest

from misnc.harness import build_extended_butterfly, generate_online_trace
from misnc.netgraph import build_network, make_request


@pytest.fixture(scope="session")
def butterfly():
    return build_extended_butterfly(150.0)


@pytest.fixture(scope="session")
def net(butterfly):
    return butterfly[0]


@pytest.fixture(scope="session")
def session_a(butterfly):
    return butterfly[1][0]


@pytest.fixture(scope="session")
def trace():
    return generate_online_trace(seed=0)


def random_instance(rng: random.Random, n_nodes: int, n_links: int, n_receivers: int = 1,
                    int_caps: bool = False):
    """Random digraph with a request whose receivers are reachable from node 0."""
    nodes = list(range(n_nodes))
    links = []
    # a spanning path keeps every node reachable from the source
    order = nodes[1:]
    rng.shuffle(order)
    prev = 0
    for v in order:
        links.append((prev, v))
        prev = rng.choice([0, v] + [u for u, _ in links])
    while len(links) < n_links:
        a, b = rng.sample(nodes, 2)
        links.append((a, b))
    specs = []
    for k, (a, b) in enumerate(links):
        cap = rng.randint(1, 5) if int_caps else rng.uniform(0.5, 5.0)
        specs.append((f"e{k}", a, b, cap))
    net = build_network(nodes, specs)
    receivers = rng.sample(nodes[1:], n_receivers)
    return net, receivers


_ACCEPTANCE: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
