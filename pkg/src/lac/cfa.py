"""Cross-channel feature augmentation with one shared ``d x d`` kernel."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, Tensor, const_matmul, matmul, xavier_init


@dataclass
class CfaKernel:
    K: Tensor

    def __post_init__(self):
        if not isinstance(self.K, Tensor):
            self.K = Tensor(np.asarray(self.K, dtype=np.float64), requires_grad=True)
        if self.K.ndim != 2 or self.K.shape[0] != self.K.shape[1]:
            raise ShapeError(f"kernel must be square, got {self.K.shape}")

    @property
    def d(self) -> int:
        return self.K.shape[0]

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return [("cfa.K", self.K)]

    def parameters(self) -> list[Tensor]:
        return [self.K]


def init_cfa(d: int, seed=0, noise: float = 0.01) -> CfaKernel:
    """Identity plus ``noise`` times a Xavier draw, so the view starts near the original."""
    K = np.eye(d) + noise * xavier_init((d, d), seed, requires_grad=False).data
    return CfaKernel(Tensor(K, requires_grad=True))


def cfa_forward(C, kernel: CfaKernel) -> Tensor:
    """``C'[i, l] = sum_j C[i, j] K[l, j]``, i.e. ``C @ K.T``."""
    Ct = C if isinstance(C, Tensor) else Tensor(C)
    if Ct.ndim != 2 or Ct.shape[1] != kernel.d:
        raise ShapeError(f"coefficients {Ct.shape} do not match kernel side {kernel.d}")
    return matmul(Ct, kernel.K.T)


def cfa_node_features(X, kernel: CfaKernel) -> Tensor:
    """Node-domain features of the augmented view, ``U (C K^T) = X K^T``.

    ``U`` is orthogonal and ``C = U^T X``, so the product can skip the
    spectral round trip; ``X`` may be a scipy sparse matrix.
    """
    if X.ndim != 2 or X.shape[1] != kernel.d:
        raise ShapeError(f"features {X.shape} do not match kernel side {kernel.d}")
    return const_matmul(X, kernel.K.T)


def channel_energy(C) -> np.ndarray:
    """Root-mean-square of every column."""
    C = np.asarray(C.data if isinstance(C, Tensor) else C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] == 0:
        raise ShapeError(f"expected a non-empty 2-D array, got {C.shape}")
    return np.sqrt((C * C).mean(axis=0))


def energy_spread(C) -> float:
    """``max / median`` of :func:`channel_energy`; ``inf`` when the median is zero."""
    e = channel_energy(C)
    med = float(np.median(e))
    return float("inf") if med == 0.0 else float(e.max() / med)


def dimension_mask_kernel(d: int, dropped) -> CfaKernel:
    """Identity kernel with the rows in ``dropped`` zeroed: zeroes those channels of ``C'``."""
    K = np.eye(d)
    K[np.asarray(dropped, dtype=np.int64)] = 0.0
    return CfaKernel(Tensor(K, requires_grad=True))
