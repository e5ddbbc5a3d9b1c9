"""Dense GCN encoder shared by both views, plus an auxiliary copy.

The auxiliary encoder has the same architecture and its own weights; it is
only used to estimate how much of a view survives in the main encoder's
embedding.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .tensor import ShapeError, Tensor, const_matmul, matmul, prelu, xavier_init


@dataclass
class GcnWeights:
    weights: list  # Tensors, d_in x d_out
    slopes: list  # PReLU slopes, one scalar Tensor per hidden layer

    def __post_init__(self):
        if not self.weights:
            raise ValueError("a GCN needs at least one layer")
        for a, b in zip(self.weights, self.weights[1:]):
            if a.shape[1] != b.shape[0]:
                raise ShapeError(f"layer widths do not chain: {a.shape} then {b.shape}")
        if len(self.slopes) != len(self.weights) - 1:
            raise ValueError(f"{len(self.weights)} layers need {len(self.weights) - 1} PReLU slopes")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def named_parameters(self, prefix: str) -> list[tuple[str, Tensor]]:
        out = [(f"{prefix}.W{k}", w) for k, w in enumerate(self.weights)]
        out.extend((f"{prefix}.prelu{k}", s) for k, s in enumerate(self.slopes))
        return out


@dataclass
class EncoderParams:
    main: GcnWeights
    aux: GcnWeights

    def __post_init__(self):
        if [w.shape for w in self.main.weights] != [w.shape for w in self.aux.weights]:
            raise ShapeError("auxiliary encoder must mirror the main encoder's shapes")

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return self.main.named_parameters("encoder") + self.aux.named_parameters("aux")

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]


def _init_gcn(dims: list[int], rng) -> GcnWeights:
    weights = [xavier_init((a, b), rng) for a, b in zip(dims, dims[1:])]
    slopes = [Tensor(np.array(0.25), requires_grad=True) for _ in range(len(weights) - 1)]
    return GcnWeights(weights, slopes)


def init_encoder(in_dim: int, hidden: int = 256, out_dim: int = 256, layers: int = 2, seed=0) -> EncoderParams:
    if layers < 1:
        raise ValueError(f"layers must be >= 1, got {layers}")
    dims = [in_dim] + [hidden] * (layers - 1) + [out_dim]
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return EncoderParams(_init_gcn(dims, rng), _init_gcn(dims, rng))


class Propagator:
    """``H -> D^-1/2 (A + I) D^-1/2 H`` with ``D`` the row sums of ``|A| + I``.

    Built once per adjacency so several encoders can share the normalization.
    """

    def __init__(self, adjacency):
        if isinstance(adjacency, Tensor):
            A = adjacency
            n = A.shape[0]
            if A.ndim != 2 or A.shape[1] != n:
                raise ShapeError(f"adjacency must be square, got {A.shape}")
            self._A = A
            self._dinv = ((A.abs().sum(axis=1) + 1.0) ** -0.5).reshape(n, 1)
            self._P = None
        else:
            A = adjacency if sp.issparse(adjacency) else np.asarray(adjacency, dtype=np.float64)
            n = A.shape[0]
            if A.ndim != 2 or A.shape[1] != n:
                raise ShapeError(f"adjacency must be square, got {A.shape}")
            dinv = 1.0 / np.sqrt(np.asarray(abs(A).sum(axis=1)).reshape(-1) + 1.0)
            # constant adjacency: fold the normalization into one operator
            if sp.issparse(A):
                self._P = sp.csr_matrix(sp.diags(dinv) @ (A + sp.identity(n)) @ sp.diags(dinv))
            else:
                self._P = (A + np.eye(n)) * dinv[:, None] * dinv[None, :]
        self.n = n

    def __call__(self, H: Tensor) -> Tensor:
        if self._P is not None:
            return const_matmul(self._P, H)
        Hs = H * self._dinv
        return (matmul(self._A, Hs) + Hs) * self._dinv


def make_propagator(adjacency) -> Propagator:
    return adjacency if isinstance(adjacency, Propagator) else Propagator(adjacency)


def _features_times(X, W: Tensor) -> Tensor:
    if isinstance(X, Tensor):
        return matmul(X, W)
    if X.ndim != 2:
        raise ShapeError(f"features must be 2-D, got {X.shape}")
    return const_matmul(X if sp.issparse(X) else np.asarray(X, dtype=np.float64), W)


def _gcn(adjacency, X, net: GcnWeights) -> Tensor:
    prop = make_propagator(adjacency)
    n = prop.n
    if X.shape[0] != n:
        raise ShapeError(f"{X.shape[0]} feature rows for a {n}-node adjacency")
    if X.shape[1] != net.in_dim:
        raise ShapeError(f"feature width {X.shape[1]} does not match encoder input {net.in_dim}")
    H = None
    last = len(net.weights) - 1
    for k, W in enumerate(net.weights):
        # transform before propagating: the propagation then runs at the narrower width
        HW = _features_times(X, W) if k == 0 else matmul(H, W)
        H = prop(HW)
        if k < last:
            H = prelu(H, net.slopes[k])
    return H


def gcn_forward(adjacency, X, params: EncoderParams) -> Tensor:
    """Embeddings ``H_{k+1} = act(A_norm H_k W_k)`` from the main encoder.

    ``adjacency`` may be a real-valued (even negative) symmetric matrix, a
    Tensor carrying gradient, a scipy sparse matrix or a :class:`Propagator`.  PReLU between
    layers, identity after the last one.
    """
    return _gcn(adjacency, X, params.main)


def aux_view_encode(adjacency, X, params: EncoderParams) -> Tensor:
    """Same contract as :func:`gcn_forward`, using the auxiliary weights."""
    return _gcn(adjacency, X, params.aux)
