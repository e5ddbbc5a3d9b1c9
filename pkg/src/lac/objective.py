"""Contrastive losses: InfoNCE, the augmenter objective and the encoder objective."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, Tensor, frobenius_sq, log_softmax, matmul


@dataclass
class LossConfig:
    tau: float = 0.5
    alpha: float = 0.5
    beta: float = 0.5
    # +1 lets the augmenter minimize agreement; -1 flips it (the max-max ablation)
    diversity_sign: float = 1.0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError(f"alpha and beta must be non-negative, got {self.alpha}, {self.beta}")
        if self.diversity_sign not in (1.0, -1.0):
            raise ValueError(f"diversity_sign must be +1 or -1, got {self.diversity_sign}")


def _unit_rows(Z: Tensor) -> Tensor:
    norms = (Z * Z).sum(axis=1, keepdims=True).sqrt()
    if np.any(norms.data == 0.0):
        bad = int(np.flatnonzero(norms.data.reshape(-1) == 0.0)[0])
        raise ValueError(f"row {bad} has zero norm; cosine similarity is undefined")
    return Z / norms


def info_nce(Z, Z2, tau: float, symmetric: bool = True) -> Tensor:
    """Average log-probability of the aligned pair under a cosine softmax.

    Row ``i`` of one view is scored against every row of the other view (the
    positive included).  The symmetric form averages both directions over
    ``2n`` terms; ``symmetric=False`` keeps only the ``Z -> Z2`` direction
    while retaining the ``1 / (2n)`` prefactor.
    """
    Z = Z if isinstance(Z, Tensor) else Tensor(Z)
    Z2 = Z2 if isinstance(Z2, Tensor) else Tensor(Z2)
    if Z.ndim != 2 or Z.shape != Z2.shape:
        raise ShapeError(f"views must share a 2-D shape, got {Z.shape} and {Z2.shape}")
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    n = Z.shape[0]
    if n == 0:
        raise ShapeError("need at least one row")
    S = matmul(_unit_rows(Z), _unit_rows(Z2).T)
    fused = _aligned_log_prob(S, 1.0 / tau, symmetric)
    if fused is None:
        return info_nce_reference(Z, Z2, tau, symmetric)
    return fused * (1.0 / (2 * n))


def _aligned_log_prob(S: Tensor, scale: float, symmetric: bool) -> Tensor | None:
    """``sum_i log softmax_row(scale * S)_ii`` (plus the column direction), fused.

    Cosine similarities are at most 1, so shifting by ``scale`` bounds every
    exponent by zero and one ``exp`` serves both directions.  Returns None
    when a row or column sum underflows (only at extreme temperatures).
    """
    L = S.data * scale - scale
    E = np.exp(L)
    row = E.sum(axis=1)
    col = E.sum(axis=0) if symmetric else None
    if not row.all() or (symmetric and not col.all()):
        return None
    diag = np.diagonal(L)
    out = float((diag - np.log(row)).sum())
    if symmetric:
        out += float((diag - np.log(col)).sum())

    def back(g):
        G = E / row[:, None]
        if symmetric:
            G += E / col[None, :]
            G *= -1.0
            G[np.diag_indices_from(G)] += 2.0
        else:
            G *= -1.0
            G[np.diag_indices_from(G)] += 1.0
        return (G * (g * scale),)

    return Tensor._make(np.array(out), (S,), back)


def info_nce_reference(Z, Z2, tau: float, symmetric: bool = True) -> Tensor:
    """Unfused InfoNCE built from ``log_softmax``; kept as an independent check."""
    Z = Z if isinstance(Z, Tensor) else Tensor(Z)
    Z2 = Z2 if isinstance(Z2, Tensor) else Tensor(Z2)
    n = Z.shape[0]
    S = matmul(_unit_rows(Z), _unit_rows(Z2).T) * (1.0 / tau)
    total = log_softmax(S, axis=1).diagonal().sum()
    if symmetric:
        total = total + log_softmax(S, axis=0).diagonal().sum()
    return total * (1.0 / (2 * n))


def consistency(lam, lam_aug, C, C_aug) -> Tensor:
    """``||lam - lam'||^2 + ||C - C'||^2``."""
    lam = lam if isinstance(lam, Tensor) else Tensor(lam)
    C = C if isinstance(C, Tensor) else Tensor(C)
    if lam.shape != lam_aug.shape or C.shape != C_aug.shape:
        raise ShapeError(f"shapes differ: {lam.shape}/{lam_aug.shape}, {C.shape}/{C_aug.shape}")
    return frobenius_sq(lam - lam_aug) + frobenius_sq(C - C_aug)


def augmenter_loss(Z, Z2, lam, lam_aug, C, C_aug, cfg: LossConfig) -> Tensor:
    """Diversity term plus ``alpha`` times the consistency anchor; minimized over the augmenter."""
    loss = info_nce(Z, Z2, cfg.tau) * cfg.diversity_sign
    if cfg.alpha:
        loss = loss + consistency(lam, lam_aug, C, C_aug) * cfg.alpha
    return loss


def encoder_loss(Z, Z2, Z_aux_orig, Z_aux_view, cfg: LossConfig) -> Tensor:
    """Agreement between views plus ``beta`` times the two bottleneck terms; to be maximized."""
    loss = info_nce(Z, Z2, cfg.tau)
    if cfg.beta:
        loss = loss + (info_nce(Z2, Z_aux_view, cfg.tau) + info_nce(Z, Z_aux_orig, cfg.tau)) * cfg.beta
    return loss
