"""Masked topology augmentation: a transformer over eigenvalue tokens.

Each eigenvalue is embedded (:func:`eigen_embed`), the embedding is split into
``H`` equal slices and every slice runs through its own stack of ``L`` pre-LN
transformer layers.  A per-head linear decoder with ``tanh`` gives one
candidate spectrum per head; the candidates are averaged and written into the
masked positions only.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import (
    ShapeError,
    Tensor,
    layer_norm,
    matmul,
    softmax,
    stack_mean,
    xavier_init,
)

MASK_STRATEGIES = ("random", "low_band", "high_band", "mid_band")
_LAYER_KEYS = ("ln1_g", "ln1_b", "wq", "wk", "wv", "wo", "ln2_g", "ln2_b", "w1", "b1", "w2", "b2")


def eigen_embed(lambdas, D: int, epsilon: float) -> np.ndarray:
    """Sinusoidal embedding of eigenvalues, one row per eigenvalue.

    With 1-based column ``j``: column 1 holds the eigenvalue itself, even
    ``j = 2k`` holds ``sin(eps * lam / N**(2k/D))`` and odd ``j = 2k + 1 >= 3``
    holds ``cos`` of the same argument, ``N`` being the number of eigenvalues.
    """
    lam = np.asarray(lambdas, dtype=np.float64).reshape(-1)
    if D % 2 or D < 2:
        raise ValueError(f"embedding width must be even and positive, got {D}")
    n = lam.size
    if n == 0:
        raise ValueError("need at least one eigenvalue")
    Z = np.empty((n, D))
    Z[:, 0] = lam
    for j in range(2, D + 1):
        k = j // 2
        arg = epsilon * lam / float(n) ** (2.0 * k / D)
        Z[:, j - 1] = np.sin(arg) if j % 2 == 0 else np.cos(arg)
    return Z


def build_mask(n: int, mask_ratio: float, strategy: str = "random", seed: int = 0) -> np.ndarray:
    """0/1 vector over the ascending spectrum with ``round(mask_ratio * n)`` ones."""
    if not 0.0 <= mask_ratio <= 1.0:
        raise ValueError(f"mask_ratio must lie in [0, 1], got {mask_ratio}")
    if strategy not in MASK_STRATEGIES:
        raise ValueError(f"unknown mask strategy {strategy!r}; choose from {MASK_STRATEGIES}")
    m = int(round(mask_ratio * n))
    mask = np.zeros(n)
    if m == 0:
        return mask
    if strategy == "random":
        idx = np.random.default_rng(seed).choice(n, size=m, replace=False)
    elif strategy == "low_band":
        idx = np.arange(m)
    elif strategy == "high_band":
        idx = np.arange(n - m, n)
    else:
        start = (n - m) // 2
        idx = np.arange(start, start + m)
    mask[idx] = 1.0
    return mask


@dataclass
class MtaParams:
    D: int
    H: int
    L: int
    epsilon: float
    layers: list  # layers[l][h] -> dict of Tensors keyed by _LAYER_KEYS
    decoders: list  # one (D/H x 1) Tensor per head
    mask: np.ndarray
    activation: str = "tanh"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.D % self.H:
            raise ValueError(f"head count {self.H} must divide embedding width {self.D}")
        m = np.asarray(self.mask, dtype=np.float64)
        if not np.all((m == 0) | (m == 1)):
            raise ValueError("mask entries must be exactly 0 or 1")
        self.mask = m

    @property
    def head_dim(self) -> int:
        return self.D // self.H

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for l, heads in enumerate(self.layers):
            for h, block in enumerate(heads):
                out.extend((f"mta.layer{l}.head{h}.{k}", block[k]) for k in _LAYER_KEYS)
        out.extend((f"mta.decoder{h}", w) for h, w in enumerate(self.decoders))
        return out

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]


def init_mta(
    mask: np.ndarray,
    D: int = 128,
    H: int = 2,
    L: int = 1,
    epsilon: float = 100.0,
    seed=0,
) -> MtaParams:
    """Xavier-uniform projections, unit layer-norm scales, zero offsets and biases."""
    if D % 2:
        raise ValueError(f"embedding width must be even, got {D}")
    if D % H:
        raise ValueError(f"head count {H} must divide embedding width {D}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    dh = D // H
    layers = []
    for _ in range(L):
        heads = []
        for _ in range(H):
            heads.append(
                {
                    "ln1_g": Tensor(np.ones(dh), True),
                    "ln1_b": Tensor(np.zeros(dh), True),
                    "wq": xavier_init((dh, dh), rng),
                    "wk": xavier_init((dh, dh), rng),
                    "wv": xavier_init((dh, dh), rng),
                    "wo": xavier_init((dh, dh), rng),
                    "ln2_g": Tensor(np.ones(dh), True),
                    "ln2_b": Tensor(np.zeros(dh), True),
                    "w1": xavier_init((dh, 4 * dh), rng),
                    "b1": Tensor(np.zeros(4 * dh), True),
                    "w2": xavier_init((4 * dh, dh), rng),
                    "b2": Tensor(np.zeros(dh), True),
                }
            )
        layers.append(heads)
    decoders = [xavier_init((dh, 1), rng) for _ in range(H)]
    return MtaParams(D=D, H=H, L=L, epsilon=float(epsilon), layers=layers, decoders=decoders, mask=np.asarray(mask))


def _attention_block(x: Tensor, block: dict, rows: np.ndarray | None) -> Tensor:
    """``MHA(LN(x)) + x`` then ``FFN(LN(.)) + .`` for one head's stream.

    ``rows`` restricts the queries (and therefore the output rows) to a subset
    of tokens; keys and values always cover every token.
    """
    dh = x.shape[1]
    h = layer_norm(x, block["ln1_g"], block["ln1_b"])
    q_in = h if rows is None else h[rows]
    resid = x if rows is None else x[rows]
    q = matmul(q_in, block["wq"])
    k = matmul(h, block["wk"])
    v = matmul(h, block["wv"])
    att = softmax(matmul(q, k.T) * (1.0 / np.sqrt(dh)), axis=1)
    t = matmul(matmul(att, v), block["wo"]) + resid
    f = layer_norm(t, block["ln2_g"], block["ln2_b"])
    f = matmul((matmul(f, block["w1"]) + block["b1"]).gelu(), block["w2"])
    return f + block["b2"] + t


def _activation(x: Tensor, name: str) -> Tensor:
    if name == "tanh":
        return x.tanh()
    if name == "identity":
        return x
    raise ValueError(f"unknown decoder activation {name!r}")


def _blend(lambdas: np.ndarray, values: Tensor, rows: np.ndarray) -> Tensor:
    """Copy of ``lambdas`` with ``values`` written at ``rows``; unmasked entries stay bitwise equal."""
    out = lambdas.copy()
    out[rows] = values.data

    def back(g):
        return (g[rows],)

    return Tensor._make(out, (values,), back)


def mta_forward(Z, params: MtaParams, lambdas) -> Tensor:
    """Augmented eigenvalues ``(1 - m) * lambda + m * mean_h tanh(Z_h^L W^h)``.

    Only masked tokens are decoded; the final layer computes its queries for
    those tokens only, which leaves the result unchanged because every
    per-token operation after attention is row-wise.
    """
    lam = np.asarray(lambdas.data if isinstance(lambdas, Tensor) else lambdas, dtype=np.float64)
    Zt = Z if isinstance(Z, Tensor) else Tensor(Z)
    n = lam.shape[0]
    if Zt.shape != (n, params.D):
        raise ShapeError(f"embedding shape {Zt.shape} does not match ({n}, {params.D})")
    if params.mask.shape != (n,):
        raise ShapeError(f"mask shape {params.mask.shape} does not match {n} eigenvalues")
    rows = np.flatnonzero(params.mask)
    if rows.size == 0:
        return Tensor(lam.copy())
    dh = params.head_dim
    head_out = []
    for h in range(params.H):
        x = Zt[:, h * dh : (h + 1) * dh]
        for l in range(params.L):
            last = l == params.L - 1
            x = _attention_block(x, params.layers[l][h], rows if last else None)
        if params.L == 0:
            x = x[rows]
        dec = matmul(x, params.decoders[h]).reshape(rows.size)
        head_out.append(_activation(dec, params.activation))
    pooled = stack_mean(head_out)
    return _blend(lam, pooled, rows)
