import os

import numpy as np
import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CORA_DIR = os.path.join(ROOT, "data", "cora")
CORA = {
    "edges": os.path.join(CORA_DIR, "cora.edges"),
    "features": os.path.join(CORA_DIR, "cora.features.csv"),
    "labels": os.path.join(CORA_DIR, "cora.labels.csv"),
}


@pytest.fixture(scope="session")
def cora():
    from lac.graphio import load_graph

    if not os.path.exists(CORA["edges"]):
        pytest.skip("Cora files not present")
    return load_graph(CORA["edges"], CORA["features"], CORA["labels"], name="cora")


@pytest.fixture(scope="session")
def cora_view(cora):
    from lac.spectral import to_spectral_view

    return to_spectral_view(cora)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_graph(n, p, seed):
    """Symmetric 0/1 adjacency with zero diagonal."""
    r = np.random.default_rng(seed)
    A = np.triu((r.random((n, n)) < p).astype(float), 1)
    return A + A.T


def planted_graph(n=40, k=4, d=12, seed=0):
    """Small community graph whose features carry the label; fast to train on."""
    from lac.graphio import Graph

    r = np.random.default_rng(seed)
    labels = np.repeat(np.arange(k), n // k)
    same = labels[:, None] == labels[None, :]
    A = np.triu((r.random((n, n)) < np.where(same, 0.3, 0.02)).astype(float), 1)
    A = A + A.T
    X = (r.random((n, d)) < 0.2).astype(float)
    X[np.arange(n), labels] = 1.0
    return Graph(A, X, labels, name="planted")


# small model settings for planted_graph runs
TINY = dict(hidden=16, embed_dim=8, mta_dim=8, repeats=2, classifier_epochs=50, train_frac=0.3, cluster_restarts=5)


# -- acceptance verdict lines ---------------------------------------------

_VERDICTS = []


@pytest.fixture
def verdict():
    """``verdict(name, ok, detail)`` records one PASS/FAIL line for the summary."""

    def record(name, ok, detail=""):
        _VERDICTS.append(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
