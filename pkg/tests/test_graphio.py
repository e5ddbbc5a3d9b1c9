import numpy as np
import pytest

from conftest import CORA, random_graph
from lac.graphio import (
    Graph,
    GraphFormatError,
    Split,
    load_graph,
    make_splits,
    normalize_adjacency,
    normalized_laplacian,
    save_graph,
)


def _write(path, text):
    path.write_text(text)
    return str(path)


def test_cora_counts(cora):
    assert cora.n == 2708
    assert cora.num_features == 1433
    assert cora.num_classes == 7


def test_cora_edge_records(cora):
    # the published edge count is the number of citation records; a few are
    # reciprocal pairs that collapse onto one undirected edge
    with open(CORA["edges"]) as fh:
        records = sum(1 for line in fh if line.strip())
    assert records == 5429
    assert cora.num_edges == 5278


def test_empty_edge_file(tmp_path):
    e = _write(tmp_path / "g.edges", "")
    f = _write(tmp_path / "g.csv", "1,2\n3,4\n5,6\n")
    g = load_graph(e, f)
    assert np.array_equal(g.adjacency, np.zeros((3, 3)))


def test_reversed_duplicate_collapses(tmp_path):
    e = _write(tmp_path / "g.edges", "0 1\n1 0\n")
    f = _write(tmp_path / "g.csv", "1\n2\n")
    g = load_graph(e, f)
    assert g.adjacency.sum() == 2 and g.num_edges == 1


def test_self_loops_dropped_and_comments_skipped(tmp_path):
    e = _write(tmp_path / "g.edges", "# header\n0 0\n0 2\n\n")
    f = _write(tmp_path / "g.csv", "0\n0\n0\n")
    g = load_graph(e, f)
    assert np.trace(g.adjacency) == 0 and g.num_edges == 1


@pytest.mark.parametrize(
    "edges,feats,lineno",
    [
        ("0 1\n", "1,2\n3\n", 2),  # ragged row
        ("0 1\n0 7\n", "1\n2\n", 2),  # out-of-range id
        ("0 1\n", "1\nx\n", 2),  # non-numeric feature
        ("0 a\n", "1\n2\n", 1),  # non-numeric id
    ],
)
def test_parse_errors_carry_line_numbers(tmp_path, edges, feats, lineno):
    e = _write(tmp_path / "g.edges", edges)
    f = _write(tmp_path / "g.csv", feats)
    with pytest.raises(GraphFormatError) as info:
        load_graph(e, f)
    assert info.value.lineno == lineno and f":{lineno}:" in str(info.value)


def test_label_count_mismatch(tmp_path):
    e = _write(tmp_path / "g.edges", "0 1\n")
    f = _write(tmp_path / "g.csv", "1\n2\n")
    y = _write(tmp_path / "g.labels", "0\n")
    with pytest.raises(GraphFormatError):
        load_graph(e, f, y)


def test_graph_invariants_enforced():
    with pytest.raises(ValueError):
        Graph(np.array([[0, 1], [0, 0]]), np.ones((2, 1)))
    with pytest.raises(ValueError):
        Graph(np.array([[1, 0], [0, 0]]), np.ones((2, 1)))
    with pytest.raises(ValueError):
        Graph(np.zeros((2, 2)), np.ones((3, 1)))


def test_round_trip_is_bit_exact(tmp_path, rng):
    A = random_graph(12, 0.3, 5)
    X = rng.normal(size=(12, 4)) * 1e3
    y = rng.integers(0, 3, size=12)
    g = Graph(A, X, y)
    paths = [str(tmp_path / n) for n in ("g.edges", "g.csv", "g.labels")]
    save_graph(g, *paths)
    h = load_graph(*paths)
    assert np.array_equal(h.adjacency, g.adjacency)
    assert np.array_equal(h.features, g.features)
    assert np.array_equal(h.labels, g.labels)


def test_normalize_single_node():
    assert normalize_adjacency(np.zeros((1, 1))).tolist() == [[1.0]]


def test_normalize_two_nodes():
    S = normalize_adjacency(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(S, 0.5, atol=1e-15)


def test_normalize_symmetric_and_bounded():
    for seed in range(5):
        S = normalize_adjacency(random_graph(30, 0.2, seed))
        assert np.abs(S - S.T).max() < 1e-12
        assert np.abs(np.linalg.eigvalsh(S)).max() <= 1 + 1e-10


def test_cora_spectral_radius(cora_view):
    assert np.abs(cora_view.lambdas).max() <= 1 + 1e-10


def test_laplacian_is_complement():
    A = random_graph(8, 0.4, 2)
    assert np.allclose(normalized_laplacian(A) + normalize_adjacency(A), np.eye(8))


def test_split_sizes():
    s = make_splits(10, 0.1, 0.1, 0)
    assert (len(s.train), len(s.val), len(s.test)) == (1, 1, 8)


def test_split_deterministic():
    a, b = make_splits(50, 0.2, 0.2, 9), make_splits(50, 0.2, 0.2, 9)
    assert all(np.array_equal(getattr(a, k), getattr(b, k)) for k in ("train", "val", "test"))


def test_split_test_coverage_over_seeds():
    seen = np.zeros(2708, dtype=bool)
    for seed in range(100):
        seen[make_splits(2708, 0.1, 0.1, seed).test] = True
    assert seen.all()


@pytest.mark.parametrize("tr,va", [(0.0, 0.1), (0.1, 0.0), (0.6, 0.5), (1.2, 0.1)])
def test_split_bad_fractions(tr, va):
    with pytest.raises(ValueError):
        make_splits(10, tr, va, 0)


def test_split_overlap_rejected():
    with pytest.raises(ValueError):
        Split(np.array([0, 1]), np.array([1]), np.array([2]), 0)
