import numpy as np
import pytest

from wmm.io import load_fixture
from wmm.tree import BranchEvidence, NodeSpec, TreeSpec

ACCEPTANCE_LINES = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def fig3():
    return load_fixture("fig3_simple", warn=False)


@pytest.fixture(scope="session")
def fig2():
    return load_fixture("fig2_pathways", warn=False)


@pytest.fixture(scope="session")
def hcv():
    return load_fixture("hcv_scotland", warn=False)


def random_tree(rng: np.random.Generator, max_depth=3, survey=200):
    """Random evidence tree with counted leaves.

    Sibling groups get either one shared survey covering every child or an
    independent survey per evidenced child; some children stay latent.
    Branch probabilities are drawn first, so evidence and counts agree.
    """
    nodes = [NodeSpec("R")]
    edges, evidence = [], []
    counts = {}
    frontier = [("R", 0, float(rng.uniform(2e3, 2e4)))]
    n_id = 0
    while frontier:
        parent, depth, size = frontier.pop()
        if depth >= max_depth or (depth > 0 and rng.uniform() < 0.35):
            counts[parent] = max(1, int(round(size)))
            continue
        k = int(rng.integers(2, 4))
        probs = rng.dirichlet(np.full(k, 2.0))
        kids = []
        for j in range(k):
            n_id += 1
            cid = f"N{n_id}"
            nodes.append(NodeSpec(cid))
            edges.append((parent, cid))
            kids.append(cid)
        shared = rng.uniform() < 0.5
        latent = set() if shared else {kids[-1]} if rng.uniform() < 0.5 else set()
        if shared:
            xs = rng.multinomial(survey, probs)
            for cid, x in zip(kids, xs):
                evidence.append(BranchEvidence((parent, cid), int(x), survey, f"s_{parent}"))
        else:
            for cid, p in zip(kids, probs):
                if cid in latent:
                    continue
                x = int(rng.binomial(survey, p))
                evidence.append(BranchEvidence((parent, cid), x, survey, f"s_{cid}"))
        for cid, p in zip(kids, probs):
            if cid in latent:
                continue
            frontier.append((cid, depth + 1, size * p))
    nodes = [NodeSpec(n.id, observed_count=counts.get(n.id)) for n in nodes]
    spec = TreeSpec(tuple(nodes), tuple(edges), "R")
    return spec, evidence


def total_variation(z1, p1, z2, p2):
    lo = min(z1[0], z2[0])
    hi = max(z1[-1], z2[-1])
    x = np.zeros(hi - lo + 1)
    y = np.zeros(hi - lo + 1)
    x[np.asarray(z1) - lo] = p1
    y[np.asarray(z2) - lo] = p2
    return 0.5 * float(np.abs(x - y).sum())
