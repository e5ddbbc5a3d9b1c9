"""Alternating training of the encoder and the spectral augmenter, plus evaluation.

Each epoch first updates the encoder with the augmenter fixed, then updates
the augmenter with the encoder fixed.  Downstream quality is measured with a
logistic-regression probe and k-means clustering on frozen embeddings.
"""
from __future__ import annotations

import dataclasses
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .cfa import CfaKernel, cfa_node_features, init_cfa
from .encoder import EncoderParams, aux_view_encode, gcn_forward, init_encoder, make_propagator
from .graphio import Graph, Split, make_splits, normalize_adjacency
from .mta import MtaParams, build_mask, eigen_embed, init_mta, mta_forward
from .objective import LossConfig, augmenter_loss, encoder_loss
from .spectral import SpectralView, cached_spectral_view, reconstruct_masked, to_spectral_view
from .tensor import Adam, Tensor, frozen, log_softmax, matmul, no_grad, xavier_init

AUGMENTERS = ("lac", "no_mta", "no_cfa", "edge_mask", "feature_mask")

# named ablation variants: overrides applied on top of a base config
VARIANTS = {
    "infobal": {},
    "min-max": {"alpha": 0.0, "beta": 0.0},
    "min-bn": {"alpha": 0.0},
    "reg-max": {"beta": 0.0},
    "max-max": {"alpha": 0.0, "beta": 0.0, "diversity_sign": -1.0},
    "no-mta": {"augmenter": "no_mta"},
    "no-cfa": {"augmenter": "no_cfa"},
    "edge-mask": {"augmenter": "edge_mask"},
    "feature-mask": {"augmenter": "feature_mask"},
}


class TrainingDiverged(ArithmeticError):
    """A loss became non-finite; ``report`` holds the epochs recorded so far."""

    def __init__(self, msg: str, report: "RunReport"):
        super().__init__(msg)
        self.report = report


@dataclass
class TrainConfig:
    edges: str = ""
    features: str = ""
    labels: str = ""
    name: str = ""
    max_epochs: int = 60
    lr_encoder: float = 1e-3
    lr_augmenter: float = 1e-3
    encoder_steps: int = 1
    augmenter_steps: int = 1
    alpha: float = 0.5
    beta: float = 0.5
    tau: float = 0.5
    diversity_sign: float = 1.0
    mask_ratio: float = 0.2
    mask_strategy: str = "random"
    augmenter: str = "lac"
    seed: int = 0
    hidden: int = 256
    embed_dim: int = 256
    layers: int = 2
    mta_dim: int = 128
    mta_heads: int = 2
    mta_layers: int = 1
    epsilon: float = 100.0
    cfa_noise: float = 0.01
    feature_norm: str = "none"
    spectral_cache: str = ""
    classifier_epochs: int = 300
    classifier_lr: float = 0.01
    classifier_weight_decay: float = 1e-5
    repeats: int = 10
    train_frac: float = 0.1
    val_frac: float = 0.1
    split_seed: int = 0
    cluster_k: int = 0
    cluster_restarts: int = 50
    evaluate: bool = True
    evaluate_untrained: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.max_epochs < 0:
            raise ValueError(f"max_epochs must be >= 0, got {self.max_epochs}")
        if self.encoder_steps < 1 or self.augmenter_steps < 1:
            raise ValueError("encoder_steps and augmenter_steps must be >= 1")
        if self.augmenter not in AUGMENTERS:
            raise ValueError(f"unknown augmenter {self.augmenter!r}; choose from {AUGMENTERS}")
        if self.feature_norm not in ("none", "row"):
            raise ValueError(f"feature_norm must be 'none' or 'row', got {self.feature_norm!r}")
        if not 0.0 <= self.mask_ratio <= 1.0:
            raise ValueError(f"mask_ratio must lie in [0, 1], got {self.mask_ratio}")
        if self.repeats < 1:
            raise ValueError(f"repeats must be >= 1, got {self.repeats}")
        self.loss_config()

    def loss_config(self) -> LossConfig:
        return LossConfig(tau=self.tau, alpha=self.alpha, beta=self.beta, diversity_sign=self.diversity_sign)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class RunReport:
    config: dict
    epochs: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    def curve(self, key: str) -> np.ndarray:
        return np.array([e[key] for e in self.epochs])

    def to_dict(self) -> dict:
        return {"config": self.config, "epochs": self.epochs, "metrics": self.metrics, "wall_clock": self.wall_clock}


@dataclass
class Augmenter:
    kind: str
    mta: MtaParams | None = None
    cfa: CfaKernel | None = None
    embedding: np.ndarray | None = None  # eigenvalue embedding, constant

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        if self.mta is not None:
            out += self.mta.named_parameters()
        if self.cfa is not None:
            out += self.cfa.named_parameters()
        return out

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]


@dataclass
class TrainResult:
    encoder: EncoderParams
    augmenter: Augmenter
    Z: np.ndarray
    Z_aug: np.ndarray
    report: RunReport
    view: SpectralView


@dataclass
class GraphContext:
    """Per-graph constants reused every epoch."""

    graph: Graph
    view: SpectralView
    X: np.ndarray  # dense features fed to the encoder
    X_sparse: sp.csr_matrix
    P: object  # propagator of the original view

    @classmethod
    def build(cls, graph: Graph, cfg: TrainConfig, view: SpectralView | None = None) -> "GraphContext":
        X = graph.features
        if cfg.feature_norm == "row":
            rs = X.sum(axis=1, keepdims=True)
            X = X / np.where(rs == 0, 1.0, rs)
        if view is None:
            if cfg.spectral_cache:
                view, _ = cached_spectral_view(graph, cfg.spectral_cache)
            else:
                view = to_spectral_view(graph)
        if view.matrix is None:
            view.matrix = normalize_adjacency(graph)
        # the spectral view's C is tied to the raw features; refresh it if they were rescaled
        if cfg.feature_norm != "none":
            view = SpectralView(view.U, view.lambdas, view.U.T @ X, view.matrix)
        return cls(graph, view, X, sp.csr_matrix(X), make_propagator(sp.csr_matrix(view.matrix)))


def init_augmenter(ctx: GraphContext, cfg: TrainConfig, rng) -> Augmenter:
    kind = cfg.augmenter
    aug = Augmenter(kind)
    if kind in ("lac", "no_cfa"):
        mask = build_mask(ctx.view.n, cfg.mask_ratio, cfg.mask_strategy, int(rng.integers(2**31)))
        aug.mta = init_mta(mask, cfg.mta_dim, cfg.mta_heads, cfg.mta_layers, cfg.epsilon, rng)
        aug.embedding = eigen_embed(ctx.view.lambdas, cfg.mta_dim, cfg.epsilon)
    if kind in ("lac", "no_mta"):
        aug.cfa = init_cfa(ctx.X.shape[1], rng, cfg.cfa_noise)
    return aug


def augmented_view(ctx: GraphContext, aug: Augmenter, cfg: TrainConfig, rng):
    """``(lambda', A', X')`` of the augmented view; Tensors when the augmenter is learnable."""
    lam = ctx.view.lambdas
    if aug.kind == "edge_mask":
        A = ctx.graph.adjacency.copy()
        u, v = np.nonzero(np.triu(A, 1))
        drop = rng.random(u.size) < cfg.mask_ratio
        A[u[drop], v[drop]] = A[v[drop], u[drop]] = 0.0
        return Tensor(lam), Tensor(normalize_adjacency(A)), Tensor(ctx.X)
    if aug.kind == "feature_mask":
        keep = (rng.random(ctx.X.shape[1]) >= cfg.mask_ratio).astype(np.float64)
        return Tensor(lam), Tensor(ctx.view.matrix), Tensor(ctx.X * keep)
    if aug.mta is not None:
        lam_aug = mta_forward(aug.embedding, aug.mta, lam)
        A_aug = reconstruct_masked(ctx.view, lam_aug, aug.mta.mask)
    else:
        lam_aug, A_aug = Tensor(lam), Tensor(ctx.view.matrix)
    X_aug = cfa_node_features(ctx.X_sparse, aug.cfa) if aug.cfa is not None else Tensor(ctx.X)
    return lam_aug, A_aug, X_aug


def _check_finite(value: float, what: str, epoch: int, report: RunReport) -> None:
    if not np.isfinite(value):
        raise TrainingDiverged(f"{what} became {value} at epoch {epoch}", report)


def train(graph: Graph, cfg: TrainConfig, view: SpectralView | None = None, callback=None) -> TrainResult:
    """Alternating optimization; deterministic for a given config and seed.

    ``callback(epoch, encoder, ctx)`` runs after every epoch when given.
    """
    start = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    ctx = GraphContext.build(graph, cfg, view)
    enc = init_encoder(ctx.X.shape[1], cfg.hidden, cfg.embed_dim, cfg.layers, rng)
    aug = init_augmenter(ctx, cfg, rng)
    view_rng = np.random.default_rng(rng.integers(2**31))
    lcfg = cfg.loss_config()
    enc_params, aug_params = enc.parameters(), aug.parameters()
    opt_e = Adam(enc_params, lr=cfg.lr_encoder)
    opt_a = Adam(aug_params, lr=cfg.lr_augmenter) if aug_params else None
    report = RunReport(config=cfg.to_dict())
    lam = ctx.view.lambdas
    if cfg.evaluate and cfg.evaluate_untrained and graph.labels is not None:
        with no_grad():
            Z0 = gcn_forward(ctx.P, ctx.X_sparse, enc).data
        base = evaluate_embeddings(Z0, graph.labels, cfg, clustering=False)
        report.metrics["untrained_accuracy_mean"] = base["accuracy_mean"]
        report.metrics["untrained_accuracy_std"] = base["accuracy_std"]

    for epoch in range(cfg.max_epochs):
        # V' = g(V) is shared by both phases: g only changes in phase (b).
        # Its tape is kept so phase (b) can differentiate through it.
        lam_aug, A_aug, X_aug = augmented_view(ctx, aug, cfg, view_rng)

        # (a) augmenter fixed, encoder ascends the agreement + bottleneck objective
        P_aug = make_propagator(A_aug.data)
        for _ in range(cfg.encoder_steps):
            Z = gcn_forward(ctx.P, ctx.X_sparse, enc)
            Z2 = gcn_forward(P_aug, X_aug.data, enc)
            if lcfg.beta:
                Za = aux_view_encode(ctx.P, ctx.X_sparse, enc)
                Za2 = aux_view_encode(P_aug, X_aug.data, enc)
            else:
                Za = Za2 = None
            obj = encoder_loss(Z, Z2, Za, Za2, lcfg)
            (-obj).backward()
            opt_e.step()
        enc_obj = obj.item()
        _check_finite(enc_obj, "encoder objective", epoch, report)

        # (b) encoder fixed, augmenter descends diversity + consistency
        with no_grad():
            Z = gcn_forward(ctx.P, ctx.X_sparse, enc)
        with frozen(enc_params):
            for step in range(cfg.augmenter_steps):
                if step:
                    lam_aug, A_aug, X_aug = augmented_view(ctx, aug, cfg, view_rng)
                Z2 = gcn_forward(A_aug, X_aug, enc)
                # ||C - C'|| equals ||X - X'|| because U is orthogonal
                a_loss = augmenter_loss(Z, Z2, lam, lam_aug, ctx.X, X_aug, lcfg)
                if opt_a is not None:
                    a_loss.backward()
                    opt_a.step()
        aug_obj = a_loss.item()
        lam_drift = float(np.linalg.norm(lam_aug.data - lam))
        coef_drift = float(np.linalg.norm(X_aug.data - ctx.X))
        report.epochs.append(
            {
                "epoch": epoch,
                "encoder_objective": enc_obj,
                "augmenter_objective": aug_obj,
                "consistency": lam_drift**2 + coef_drift**2,
                "lambda_drift": lam_drift,
                "coef_drift": coef_drift,
            }
        )
        _check_finite(aug_obj, "augmenter objective", epoch, report)
        if callback is not None:
            callback(epoch, enc, ctx)

    with no_grad():
        Z = gcn_forward(ctx.P, ctx.X_sparse, enc).data
        lam_aug, A_aug, X_aug = augmented_view(ctx, aug, cfg, np.random.default_rng(cfg.seed))
        Z_aug = gcn_forward(A_aug.data, X_aug.data, enc).data
    report.metrics["final_lambda_drift"] = float(np.linalg.norm(lam_aug.data - lam))
    report.metrics["final_coef_drift"] = float(np.linalg.norm(X_aug.data - ctx.X))
    if cfg.evaluate and graph.labels is not None:
        report.metrics.update(evaluate_embeddings(Z, graph.labels, cfg))
    report.wall_clock = time.perf_counter() - start
    return TrainResult(enc, aug, Z, Z_aug, report, ctx.view)


# -- downstream evaluation ------------------------------------------------

def evaluate_classification(
    Z,
    labels,
    split: Split,
    repeats: int = 10,
    epochs: int = 300,
    lr: float = 0.01,
    weight_decay: float = 1e-5,
    seed: int = 0,
) -> tuple[float, float]:
    """Test accuracy (mean, std) of a softmax-regression probe over seeded restarts."""
    Z = np.asarray(Z, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if Z.ndim != 2 or Z.shape[0] != y.shape[0]:
        raise ValueError(f"embeddings {Z.shape} do not match {y.shape[0]} labels")
    tr, te = split.train, split.test
    if np.unique(y[tr]).size < 2:
        raise ValueError("training split contains a single class")
    k = int(y.max()) + 1
    onehot = np.eye(k)[y[tr]]
    Xtr = Tensor(np.column_stack([Z[tr], np.ones(tr.size)]))
    Xte = np.column_stack([Z[te], np.ones(te.size)])
    accs = []
    for r in range(repeats):
        W = xavier_init((Xtr.shape[1], k), seed + r)
        opt = Adam([W], lr=lr, weight_decay=weight_decay)
        for _ in range(epochs):
            nll = -(log_softmax(matmul(Xtr, W), axis=1) * onehot).sum() * (1.0 / tr.size)
            nll.backward()
            opt.step()
        pred = (Xte @ W.data).argmax(axis=1)
        accs.append(float((pred == y[te]).mean()))
    return float(np.mean(accs)), float(np.std(accs))


def evaluate_clustering(Z, labels, k: int, seed: int = 0, restarts: int = 50) -> tuple[float, float]:
    """NMI and ARI of k-means (k-means++ init) on row-normalized embeddings."""
    from sklearn.cluster import KMeans
    from sklearn.exceptions import ConvergenceWarning
    from sklearn.metrics import adjusted_rand_score, normalized_mutual_info_score

    Z = np.asarray(Z, dtype=np.float64)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if k > Z.shape[0]:
        raise ValueError(f"k={k} exceeds the number of points {Z.shape[0]}")
    norms = np.linalg.norm(Z, axis=1, keepdims=True)
    Zn = Z / np.where(norms == 0, 1.0, norms)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        pred = KMeans(n_clusters=k, init="k-means++", n_init=restarts, random_state=seed).fit_predict(Zn)
    return float(normalized_mutual_info_score(labels, pred)), float(adjusted_rand_score(labels, pred))


def evaluate_embeddings(Z, labels, cfg: TrainConfig, clustering: bool = True) -> dict:
    split = make_splits(len(labels), cfg.train_frac, cfg.val_frac, cfg.split_seed)
    mean, std = evaluate_classification(
        Z, labels, split, cfg.repeats, cfg.classifier_epochs, cfg.classifier_lr, cfg.classifier_weight_decay, cfg.seed
    )
    out = {"accuracy_mean": mean, "accuracy_std": std}
    if clustering:
        k = cfg.cluster_k or int(np.max(labels)) + 1
        out["nmi"], out["ari"] = evaluate_clustering(Z, labels, k, cfg.seed, cfg.cluster_restarts)
    return out
