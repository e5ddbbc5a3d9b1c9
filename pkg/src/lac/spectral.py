"""The orthogonal spectral space of a graph and the way back out of it.

A graph with normalised adjacency ``S`` and features ``X`` is represented by
``(U, lambdas, C)`` where ``S = U diag(lambdas) U^T`` and ``C = U^T X``.
Augmented eigenvalues and coefficients are mapped back with
:func:`reconstruct`.
"""
from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass

import numpy as np

from .graphio import Graph, normalize_adjacency
from .tensor import ShapeError, Tensor, matmul

SYMMETRY_TOL = 1e-10


class EigenConvergenceError(ArithmeticError):
    """The iterative eigensolver hit its sweep cap."""


@dataclass
class SpectralView:
    U: np.ndarray
    lambdas: np.ndarray
    C: np.ndarray
    matrix: np.ndarray | None = None  # the decomposed matrix, kept for reconstruction shortcuts

    @property
    def n(self) -> int:
        return self.U.shape[0]

    def residuals(self, S: np.ndarray | None = None, X: np.ndarray | None = None) -> dict:
        """Max-abs residuals of orthogonality, reconstruction and feature recovery."""
        S = self.matrix if S is None else S
        out = {"orthogonality": float(np.abs(self.U.T @ self.U - np.eye(self.n)).max())}
        if S is not None:
            out["reconstruction"] = float(np.abs((self.U * self.lambdas) @ self.U.T - S).max())
        if X is not None:
            out["features"] = float(np.abs(self.U @ self.C - X).max())
        return out


# -- eigensolvers ---------------------------------------------------------

def _fix_signs(U: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Flip columns so the first entry with magnitude above ``tol`` is positive."""
    big = np.abs(U) > tol
    first = np.argmax(big, axis=0)
    lead = U[first, np.arange(U.shape[1])]
    signs = np.where(lead < 0, -1.0, 1.0)
    return U * signs


def _round_robin(m: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """``m - 1`` rounds of disjoint index pairs covering every pair once (``m`` even)."""
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p = np.array([min(players[i], players[m - 1 - i]) for i in range(m // 2)])
        q = np.array([max(players[i], players[m - 1 - i]) for i in range(m // 2)])
        rounds.append((p, q))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(S: np.ndarray, tol: float = 1e-14, max_sweeps: int = 60):
    """Cyclic Jacobi diagonalisation with parallel (round-robin) pair ordering.

    Each round applies ``n/2`` disjoint plane rotations at once, so a sweep is
    ``n - 1`` vectorised rounds.  Returns unsorted ``(lambdas, V)``.
    """
    A = np.array(S, dtype=np.float64)
    n = A.shape[0]
    V = np.eye(n)
    if n == 1:
        return A.diagonal().copy(), V
    m = n + (n % 2)
    if m != n:  # pad with a decoupled dummy index
        A = np.pad(A, ((0, 1), (0, 1)))
        V = np.pad(V, ((0, 1), (0, 1)))
        V[n, n] = 1.0
    rounds = _round_robin(m)
    scale = max(np.linalg.norm(A), np.finfo(float).tiny)
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off <= tol * scale:
            break
        for p, q in rounds:
            apq = A[p, q]
            active = np.abs(apq) > 1e-300
            if not active.any():
                continue
            p, q, apq = p[active], q[active], apq[active]
            theta = (A[q, q] - A[p, p]) / (2.0 * apq)
            big = np.abs(theta) > 1e150
            th = np.where(big, 1.0, theta)
            t = np.where(big, 0.5 / np.where(big, theta, 1.0), np.sign(th) / (np.abs(th) + np.sqrt(th * th + 1.0)))
            t[theta == 0] = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            Ap, Aq = A[p, :].copy(), A[q, :].copy()
            A[p, :] = c[:, None] * Ap - s[:, None] * Aq
            A[q, :] = s[:, None] * Ap + c[:, None] * Aq
            Ap, Aq = A[:, p].copy(), A[:, q].copy()
            A[:, p] = c * Ap - s * Aq
            A[:, q] = s * Ap + c * Aq
            Vp, Vq = V[:, p].copy(), V[:, q].copy()
            V[:, p] = c * Vp - s * Vq
            V[:, q] = s * Vp + c * Vq
    else:
        raise EigenConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")
    return A.diagonal()[:n].copy(), V[:n, :n]


def eig_sym(S: np.ndarray, method: str = "lapack"):
    """Eigendecomposition of a symmetric matrix.

    Returns ``(U, lambdas)`` with eigenvalues ascending and each eigenvector's
    first non-negligible entry positive.  ``method`` is ``"lapack"`` (divide
    and conquer via numpy) or ``"jacobi"`` (:func:`jacobi_eigh`).
    """
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {S.shape}")
    asym = np.abs(S - S.T).max() if S.size else 0.0
    if asym >= SYMMETRY_TOL:
        raise ValueError(f"matrix is not symmetric (max |S - S^T| = {asym:.3e})")
    if method == "lapack":
        lambdas, U = np.linalg.eigh(S)
    elif method == "jacobi":
        lambdas, U = jacobi_eigh(S)
    else:
        raise ValueError(f"unknown eigensolver {method!r}")
    order = np.argsort(lambdas, kind="stable")
    return _fix_signs(U[:, order]), lambdas[order]


def to_spectral_view(g: Graph, mode: str = "normalized", method: str = "lapack") -> SpectralView:
    """Decompose the graph once: ``S = U diag(lambdas) U^T``, ``C = U^T X``.

    ``mode="raw"`` decomposes the 0/1 adjacency instead of the normalised one;
    its eigenvalues are not confined to ``[-1, 1]``.
    """
    if mode == "normalized":
        S = normalize_adjacency(g)
    elif mode == "raw":
        S = g.adjacency.copy()
    else:
        raise ValueError(f"unknown adjacency mode {mode!r}")
    U, lambdas = eig_sym(S, method=method)
    return SpectralView(U=U, lambdas=lambdas, C=U.T @ g.features, matrix=S)


# -- back to the node domain ---------------------------------------------

def reconstruct(U, lambdas_aug, C_aug):
    """``A' = U diag(lambdas_aug) U^T`` and ``X' = U C_aug``, differentiable."""
    U = U if isinstance(U, Tensor) else Tensor(U)
    lam = lambdas_aug if isinstance(lambdas_aug, Tensor) else Tensor(lambdas_aug)
    C = C_aug if isinstance(C_aug, Tensor) else Tensor(C_aug)
    n = U.shape[0]
    if U.shape != (n, n) or lam.shape != (n,) or C.ndim != 2 or C.shape[0] != n:
        raise ShapeError(f"incompatible shapes U={U.shape}, lambdas={lam.shape}, C={C.shape}")
    A = matmul(U * lam.reshape(1, n), U.T)
    return A, matmul(U, C)


def reconstruct_masked(view: SpectralView, lambdas_aug, mask: np.ndarray) -> Tensor:
    """``A'`` through the masked eigenpairs only.

    Unmasked eigenvalues are untouched by the augmenter, so
    ``U diag(l') U^T = S + U_M diag(l'_M - l_M) U_M^T``; the cost scales with
    the number of masked eigenvalues instead of ``n``.
    """
    if view.matrix is None:
        raise ValueError("view does not carry its decomposed matrix")
    lam = lambdas_aug if isinstance(lambdas_aug, Tensor) else Tensor(lambdas_aug)
    if lam.shape != view.lambdas.shape or np.shape(mask) != view.lambdas.shape:
        raise ShapeError(f"lambdas {lam.shape} / mask {np.shape(mask)} vs view {view.lambdas.shape}")
    idx = np.flatnonzero(np.asarray(mask))
    base = Tensor(view.matrix)
    if idx.size == 0:
        return base
    Um = Tensor(view.U[:, idx])
    delta = lam[idx] - Tensor(view.lambdas[idx])
    return base + matmul(Um * delta.reshape(1, idx.size), Um.T)


# -- edge-flip perturbation ----------------------------------------------

def edge_flip_delta(view: SpectralView, p: int, q: int, degrees: np.ndarray | None = None) -> float:
    """``sum_i |2 u_ip u_iq - lambda_i (u_ip^2 + u_iq^2)|`` for flipping edge ``(p, q)``.

    With ``degrees`` (row sums of ``A + I``) the eigenvectors are first mapped
    to the generalised problem ``(A + I) u = lambda D u`` via ``u = D^-1/2 phi``,
    for which the expression is the exact first-order eigenvalue shift.
    """
    if p == q:
        raise ValueError("edge endpoints must differ")
    up, uq = view.U[p], view.U[q]
    if degrees is not None:
        up = up / np.sqrt(degrees[p])
        uq = uq / np.sqrt(degrees[q])
    return float(np.abs(2.0 * up * uq - view.lambdas * (up * up + uq * uq)).sum())


def node_removal_delta(view: SpectralView, s: int, neighbors, degrees: np.ndarray | None = None) -> float:
    """Perturbation from deleting node ``s``: the edge-flip sum over its neighbours."""
    return float(sum(edge_flip_delta(view, s, t, degrees) for t in neighbors))


def exact_flip_drift(adjacency: np.ndarray, p: int, q: int, mode: str = "normalized") -> float:
    """``sum_i |lambda'_i - lambda_i|`` after flipping ``(p, q)`` and re-decomposing."""
    A = np.asarray(adjacency, dtype=np.float64)
    B = A.copy()
    B[p, q] = B[q, p] = 1.0 - A[p, q]
    if mode == "normalized":
        before, after = normalize_adjacency(A), normalize_adjacency(B)
    else:
        before, after = A, B
    return float(np.abs(np.linalg.eigvalsh(after) - np.linalg.eigvalsh(before)).sum())


# -- on-disk cache --------------------------------------------------------

_MAGIC = b"LACSPEC\x01"


def dataset_hash(g: Graph, mode: str = "normalized") -> bytes:
    h = hashlib.sha256()
    h.update(mode.encode())
    h.update(np.ascontiguousarray(g.adjacency).tobytes())
    h.update(np.ascontiguousarray(g.features).tobytes())
    return h.digest()


def save_spectral_cache(path, view: SpectralView, key: bytes) -> None:
    """Header ``magic, n, d, sha256`` then row-major float64 ``U``, ``lambdas``, ``C``."""
    n, d = view.C.shape
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<QQ", n, d))
        fh.write(key)
        for block in (view.U, view.lambdas, view.C):
            fh.write(np.ascontiguousarray(block, dtype="<f8").tobytes())


def load_spectral_cache(path, key: bytes | None = None) -> SpectralView | None:
    """Read a cache file; ``None`` if missing or built for a different dataset."""
    if not os.path.exists(path):
        return None
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            return None
        n, d = struct.unpack("<QQ", fh.read(16))
        stored = fh.read(32)
        if key is not None and stored != key:
            return None
        U = np.frombuffer(fh.read(8 * n * n), dtype="<f8").reshape(n, n).copy()
        lambdas = np.frombuffer(fh.read(8 * n), dtype="<f8").copy()
        C = np.frombuffer(fh.read(8 * n * d), dtype="<f8").reshape(n, d).copy()
    return SpectralView(U=U, lambdas=lambdas, C=C)


def cached_spectral_view(g: Graph, cache_dir, mode: str = "normalized") -> tuple[SpectralView, bool]:
    """Decompose ``g`` or reuse a matching cache entry; returns ``(view, hit)``."""
    key = dataset_hash(g, mode)
    os.makedirs(cache_dir, exist_ok=True)
    path = os.path.join(cache_dir, f"{g.name}-{mode}-{key.hex()[:16]}.spec")
    view = load_spectral_cache(path, key)
    if view is not None:
        view.matrix = normalize_adjacency(g) if mode == "normalized" else g.adjacency.copy()
        return view, True
    view = to_spectral_view(g, mode=mode)
    save_spectral_cache(path, view, key)
    return view, False
