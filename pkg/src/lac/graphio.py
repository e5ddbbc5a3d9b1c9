"""Graph ingestion, adjacency normalisation and node splits.

On-disk format
--------------
* edge file: one ``u v`` pair of 0-based node ids per line; blank lines and
  lines starting with ``#`` are ignored.  Each undirected edge needs to appear
  once; duplicates and reversed duplicates collapse onto the same entry.
* feature file: CSV, one row per node, no header.
* label file (optional): one integer class id per line.
"""
from __future__ import annotations

import os
import pickle
from dataclasses import dataclass

import numpy as np


class GraphFormatError(ValueError):
    """A dataset file could not be parsed."""

    def __init__(self, path, lineno: int, msg: str):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path = path
        self.lineno = lineno


@dataclass
class Graph:
    adjacency: np.ndarray
    features: np.ndarray
    labels: np.ndarray | None = None
    name: str = "graph"

    def __post_init__(self):
        A = np.asarray(self.adjacency, dtype=np.float64)
        X = np.asarray(self.features, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"adjacency must be square, got {A.shape}")
        if not np.array_equal(A, A.T):
            raise ValueError("adjacency must be symmetric")
        if not np.all((A == 0) | (A == 1)):
            raise ValueError("adjacency entries must be 0 or 1")
        if np.any(np.diag(A) != 0):
            raise ValueError("adjacency must have a zero diagonal")
        if X.shape[0] != A.shape[0]:
            raise ValueError(f"{X.shape[0]} feature rows for {A.shape[0]} nodes")
        self.adjacency, self.features = A, X
        if self.labels is not None:
            y = np.asarray(self.labels)
            if y.shape != (A.shape[0],):
                raise ValueError(f"labels must have shape ({A.shape[0]},), got {y.shape}")
            self.labels = y.astype(np.int64)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        """Number of undirected edges."""
        return int(np.triu(self.adjacency, 1).sum())

    @property
    def num_classes(self) -> int:
        return 0 if self.labels is None else int(self.labels.max()) + 1

    def edge_list(self) -> np.ndarray:
        """Undirected edges as ``(u, v)`` rows with ``u < v``."""
        u, v = np.nonzero(np.triu(self.adjacency, 1))
        return np.stack([u, v], axis=1)


def _parse_features(path) -> np.ndarray:
    rows = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            try:
                row = [float(p) for p in parts]
            except ValueError:
                raise GraphFormatError(path, lineno, f"non-numeric field in {line[:40]!r}") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise GraphFormatError(path, lineno, f"expected {width} fields, found {len(row)}")
            rows.append(row)
    if not rows:
        raise GraphFormatError(path, 0, "no feature rows")
    return np.array(rows, dtype=np.float64)


def _parse_edges(path, n: int) -> np.ndarray:
    A = np.zeros((n, n), dtype=np.float64)
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise GraphFormatError(path, lineno, f"expected 'u v', got {line!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise GraphFormatError(path, lineno, f"non-numeric node id in {line!r}") from None
            if not (0 <= u < n and 0 <= v < n):
                raise GraphFormatError(path, lineno, f"node id out of range [0, {n}) in {line!r}")
            if u != v:
                A[u, v] = A[v, u] = 1.0
    return A


def _parse_labels(path, n: int) -> np.ndarray:
    labels = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                labels.append(int(line))
            except ValueError:
                raise GraphFormatError(path, lineno, f"non-integer label {line!r}") from None
    if len(labels) != n:
        raise GraphFormatError(path, len(labels), f"{len(labels)} labels for {n} nodes")
    return np.array(labels, dtype=np.int64)


def load_graph(edge_file_path, feature_file_path, label_file_path=None, name: str | None = None) -> Graph:
    """Read a graph from an edge list, a feature CSV and an optional label file."""
    X = _parse_features(feature_file_path)
    A = _parse_edges(edge_file_path, X.shape[0])
    y = _parse_labels(label_file_path, X.shape[0]) if label_file_path else None
    if name is None:
        name = os.path.splitext(os.path.basename(str(edge_file_path)))[0]
    return Graph(A, X, y, name)


def save_graph(g: Graph, edge_file_path, feature_file_path, label_file_path=None) -> None:
    """Write ``g`` in the format read by :func:`load_graph` (floats round-trip exactly)."""
    with open(edge_file_path, "w") as fh:
        for u, v in g.edge_list():
            fh.write(f"{u} {v}\n")
    with open(feature_file_path, "w") as fh:
        for row in g.features:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    if label_file_path is not None:
        if g.labels is None:
            raise ValueError("graph has no labels to save")
        with open(label_file_path, "w") as fh:
            fh.writelines(f"{int(c)}\n" for c in g.labels)


def normalize_adjacency(g) -> np.ndarray:
    """``D^-1/2 (A + I) D^-1/2`` with ``D`` the degree matrix of ``A + I``.

    Accepts a :class:`Graph` or a square array.
    """
    A = g.adjacency if isinstance(g, Graph) else np.asarray(g, dtype=np.float64)
    A_hat = A + np.eye(A.shape[0])
    d_inv_sqrt = 1.0 / np.sqrt(A_hat.sum(axis=1))
    S = A_hat * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]
    return 0.5 * (S + S.T)


def normalized_laplacian(g) -> np.ndarray:
    """``I - D^-1/2 (A + I) D^-1/2``; diagnostic only."""
    S = normalize_adjacency(g)
    return np.eye(S.shape[0]) - S


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int

    def __post_init__(self):
        sets = [set(self.train.tolist()), set(self.val.tolist()), set(self.test.tolist())]
        if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
            raise ValueError("split parts overlap")


def make_splits(n: int, train_frac: float, val_frac: float, seed: int) -> Split:
    """Seeded shuffle of ``range(n)`` cut into train / val / test blocks."""
    if not (0 < train_frac < 1 and 0 < val_frac < 1) or train_frac + val_frac > 1:
        raise ValueError(f"invalid split fractions train={train_frac}, val={val_frac}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(train_frac * n))
    n_val = int(round(val_frac * n))
    return Split(
        train=np.sort(perm[:n_train]),
        val=np.sort(perm[n_train : n_train + n_val]),
        test=np.sort(perm[n_train + n_val :]),
        seed=seed,
    )


# -- converters for public dumps -----------------------------------------

def convert_linqs(content_path, cites_path, out_dir, name: str = "cora") -> dict:
    """Convert a LINQS ``.content`` / ``.cites`` pair to the native format.

    Nodes keep the row order of the content file; classes are numbered in
    sorted order of their names.  Citation lines are written one per line
    (reciprocal citations therefore appear twice, which :func:`load_graph`
    collapses).
    """
    ids, feats, classes = [], [], []
    with open(content_path) as fh:
        for line in fh:
            parts = line.split()
            if parts:
                ids.append(parts[0])
                feats.append(parts[1:-1])
                classes.append(parts[-1])
    index = {pid: i for i, pid in enumerate(ids)}
    names = sorted(set(classes))
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "edges": os.path.join(out_dir, f"{name}.edges"),
        "features": os.path.join(out_dir, f"{name}.features.csv"),
        "labels": os.path.join(out_dir, f"{name}.labels.csv"),
    }
    skipped = 0
    with open(cites_path) as fh, open(paths["edges"], "w") as out:
        for line in fh:
            parts = line.split()
            if len(parts) != 2:
                continue
            if parts[0] not in index or parts[1] not in index:
                skipped += 1
                continue
            out.write(f"{index[parts[0]]} {index[parts[1]]}\n")
    with open(paths["features"], "w") as out:
        for row in feats:
            out.write(",".join(row) + "\n")
    with open(paths["labels"], "w") as out:
        out.writelines(f"{names.index(c)}\n" for c in classes)
    paths["classes"] = names
    paths["skipped_edges"] = skipped
    return paths


def convert_planetoid(raw_dir, name: str, out_dir) -> dict:
    """Convert a Planetoid ``ind.<name>.*`` dump to the native format.

    Test nodes are placed at the positions listed in ``ind.<name>.test.index``
    (the usual reordering); missing test positions (CiteSeer) get zero rows.
    """
    def load(suffix):
        with open(os.path.join(raw_dir, f"ind.{name}.{suffix}"), "rb") as fh:
            return pickle.load(fh, encoding="latin1")

    def dense(m):
        return m.toarray() if hasattr(m, "toarray") else np.asarray(m)

    allx, tx = dense(load("allx")), dense(load("tx"))
    ally, ty = np.asarray(load("ally")), np.asarray(load("ty"))
    graph = load("graph")
    with open(os.path.join(raw_dir, f"ind.{name}.test.index")) as fh:
        test_idx = [int(line) for line in fh if line.strip()]
    n = max(max(test_idx) + 1, allx.shape[0] + tx.shape[0])
    X = np.zeros((n, allx.shape[1]))
    Y = np.zeros((n, ally.shape[1]))
    X[: allx.shape[0]] = allx
    Y[: ally.shape[0]] = ally
    # row i of tx belongs to node test_idx[i]
    for row, node in enumerate(test_idx):
        X[node] = tx[row]
        Y[node] = ty[row]
    labels = Y.argmax(axis=1)
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "edges": os.path.join(out_dir, f"{name}.edges"),
        "features": os.path.join(out_dir, f"{name}.features.csv"),
        "labels": os.path.join(out_dir, f"{name}.labels.csv"),
    }
    with open(paths["edges"], "w") as out:
        for u in sorted(graph):
            for v in graph[u]:
                out.write(f"{u} {v}\n")
    with open(paths["features"], "w") as out:
        for row in X:
            out.write(",".join(repr(float(x)) for x in row) + "\n")
    with open(paths["labels"], "w") as out:
        out.writelines(f"{int(c)}\n" for c in labels)
    return paths
