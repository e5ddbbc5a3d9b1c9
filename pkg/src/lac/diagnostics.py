"""Tables behind the ``diagnose`` command: channel energy, eigenvalue drift, edge flips."""
from __future__ import annotations

import numpy as np

from .cfa import cfa_forward, channel_energy, energy_spread
from .graphio import Graph
from .mta import mta_forward
from .spectral import SpectralView, edge_flip_delta, exact_flip_drift
from .tensor import no_grad
from .trainer import Augmenter


def augmented_coefficients(view: SpectralView, aug: Augmenter) -> np.ndarray:
    if aug.cfa is None:
        return view.C
    with no_grad():
        return cfa_forward(view.C, aug.cfa).data


def augmented_spectrum(view: SpectralView, aug: Augmenter) -> np.ndarray:
    if aug.mta is None:
        return view.lambdas.copy()
    with no_grad():
        return mta_forward(aug.embedding, aug.mta, view.lambdas).data


def energy_table(view: SpectralView, aug: Augmenter) -> dict:
    """Per-channel RMS of ``C`` and ``C'`` plus their max/median spreads."""
    C_aug = augmented_coefficients(view, aug)
    return {
        "before": channel_energy(view.C),
        "after": channel_energy(C_aug),
        "spread_before": energy_spread(view.C),
        "spread_after": energy_spread(C_aug),
    }


def drift_table(view: SpectralView, aug: Augmenter) -> dict:
    lam_aug = augmented_spectrum(view, aug)
    mask = aug.mta.mask if aug.mta is not None else np.zeros(view.n)
    return {"lambda": view.lambdas, "lambda_aug": lam_aug, "abs_drift": np.abs(lam_aug - view.lambdas), "mask": mask}


def random_flips(n: int, count: int, seed: int) -> list[tuple[int, int]]:
    rng = np.random.default_rng(seed)
    pairs = set()
    while len(pairs) < min(count, n * (n - 1) // 2):
        p, q = sorted(int(v) for v in rng.choice(n, size=2, replace=False))
        pairs.add((p, q))
    return sorted(pairs)


def flip_table(graph: Graph, view: SpectralView, count: int = 10, seed: int = 0) -> dict:
    """First-order edge-flip estimates next to the drift from re-decomposition.

    ``formula`` uses the orthonormal eigenvectors as stored; ``formula_scaled``
    maps them to the generalised problem ``(A + I) u = lambda D u`` first.
    """
    deg = graph.adjacency.sum(axis=1) + 1.0
    rows = {"p": [], "q": [], "formula": [], "formula_scaled": [], "exact": []}
    for p, q in random_flips(graph.n, count, seed):
        rows["p"].append(p)
        rows["q"].append(q)
        rows["formula"].append(edge_flip_delta(view, p, q))
        rows["formula_scaled"].append(edge_flip_delta(view, p, q, deg))
        rows["exact"].append(exact_flip_drift(graph.adjacency, p, q))
    return {k: np.array(v) for k, v in rows.items()}


def spearman(a, b) -> float:
    from scipy.stats import spearmanr

    return float(spearmanr(a, b).statistic)


def diagnose(graph: Graph, view: SpectralView, aug: Augmenter, flips: int = 10, seed: int = 0) -> tuple[dict, dict]:
    """All ``diagnose`` tables plus a summary of scalar measurements."""
    energy = energy_table(view, aug)
    drift = drift_table(view, aug)
    tables = {
        "channel_energy": {
            "channel": np.arange(energy["before"].size),
            "before": energy["before"],
            "after": energy["after"],
        },
        "eigen_drift": {"index": np.arange(view.n), **drift},
    }
    summary = {
        "energy_spread_before": energy["spread_before"],
        "energy_spread_after": energy["spread_after"],
        "lambda_drift_norm": float(np.linalg.norm(drift["lambda_aug"] - drift["lambda"])),
    }
    if flips > 0:
        table = flip_table(graph, view, flips, seed)
        tables["edge_flip"] = table
        summary["flip_spearman"] = spearman(table["formula"], table["exact"])
        summary["flip_spearman_scaled"] = spearman(table["formula_scaled"], table["exact"])
    return tables, summary
