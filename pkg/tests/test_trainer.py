import numpy as np
import pytest

from conftest import TINY, planted_graph
from lac.graphio import Split, make_splits
from lac.trainer import (
    VARIANTS,
    GraphContext,
    TrainConfig,
    TrainingDiverged,
    augmented_view,
    evaluate_classification,
    evaluate_clustering,
    init_augmenter,
    train,
)
import lac.trainer as trainer_mod


@pytest.fixture(scope="module")
def graph():
    return planted_graph()


def cfg(**kw):
    return TrainConfig(**{**TINY, "max_epochs": 4, **kw})


# -- config ----------------------------------------------------------------

def test_default_knobs_inside_sweep_ranges():
    c = TrainConfig()
    assert 0.1 <= c.alpha <= 1.5
    for v in (c.beta, c.tau, c.mask_ratio):
        assert 0.1 <= v <= 1.0


@pytest.mark.parametrize(
    "bad",
    [dict(max_epochs=-1), dict(tau=0.0), dict(augmenter="dropout"), dict(mask_ratio=1.5), dict(repeats=0),
     dict(encoder_steps=0), dict(feature_norm="l2")],
)
def test_config_rejects(bad):
    with pytest.raises(ValueError):
        TrainConfig(**bad)


def test_every_variant_is_a_valid_config():
    for name, overrides in VARIANTS.items():
        TrainConfig(**overrides)


# -- training loop ---------------------------------------------------------

def test_zero_epochs_gives_untrained_encoder(graph):
    r = train(graph, cfg(max_epochs=0))
    assert r.report.epochs == []
    assert r.Z.shape == (graph.n, 8)
    assert "accuracy_mean" in r.report.metrics and "untrained_accuracy_mean" in r.report.metrics
    # the untrained probe and the final probe see the same embeddings
    assert r.report.metrics["accuracy_mean"] == r.report.metrics["untrained_accuracy_mean"]


def test_report_epochs_and_fields(graph):
    r = train(graph, cfg(max_epochs=3))
    assert [e["epoch"] for e in r.report.epochs] == [0, 1, 2]
    for e in r.report.epochs:
        assert e["epoch"] < 3
        for k in ("encoder_objective", "augmenter_objective", "consistency", "lambda_drift", "coef_drift"):
            assert np.isfinite(e[k])
        assert e["consistency"] == pytest.approx(e["lambda_drift"] ** 2 + e["coef_drift"] ** 2)
    for k in ("accuracy_mean", "accuracy_std", "nmi", "ari", "final_lambda_drift", "final_coef_drift"):
        assert k in r.report.metrics
    assert r.report.config == r.report.to_dict()["config"]
    assert r.report.wall_clock > 0


def test_seed_determinism(graph):
    a = train(graph, cfg(seed=3)).report.to_dict()
    b = train(graph, cfg(seed=3)).report.to_dict()
    a.pop("wall_clock"), b.pop("wall_clock")
    assert a == b
    c = train(graph, cfg(seed=4)).report
    assert c.epochs != a["epochs"]


def test_returns_both_views(graph):
    r = train(graph, cfg(max_epochs=2, evaluate=False))
    assert r.Z.shape == r.Z_aug.shape == (graph.n, 8)
    assert not np.allclose(r.Z, r.Z_aug)


def test_mask_ratio_zero_keeps_spectrum(graph):
    r = train(graph, cfg(mask_ratio=0.0, evaluate=False))
    assert all(e["lambda_drift"] == 0.0 for e in r.report.epochs)
    assert r.report.metrics["final_lambda_drift"] == 0.0
    # the feature augmenter is still free to move
    assert r.report.metrics["final_coef_drift"] > 0.0


def test_alternation_contract(graph, monkeypatch):
    # wrap Adam so each step records which parameters moved
    real = trainer_mod.Adam
    moves = []

    class Watched(real):
        def step(self):
            others = watched_groups[1 - watched_groups.index(self.params)]
            before_own = [p.data.copy() for p in self.params]
            before_other = [p.data.copy() for p in others]
            super().step()
            moves.append(
                (
                    any(not np.array_equal(b, p.data) for b, p in zip(before_own, self.params)),
                    all(np.array_equal(b, p.data) for b, p in zip(before_other, others)),
                )
            )

    watched_groups = []
    orig_init = real.__init__

    def init(self, params, *a, **k):
        orig_init(self, params, *a, **k)
        watched_groups.append(self.params)

    monkeypatch.setattr(Watched, "__init__", init)
    monkeypatch.setattr(trainer_mod, "Adam", Watched)
    train(graph, cfg(max_epochs=3, evaluate=False))
    assert len(moves) == 6
    assert all(own_moved and other_fixed for own_moved, other_fixed in moves)


def test_augmented_view_is_differentiable(graph):
    c = cfg()
    ctx = GraphContext.build(graph, c)
    aug = init_augmenter(ctx, c, np.random.default_rng(0))
    lam_aug, A_aug, X_aug = augmented_view(ctx, aug, c, np.random.default_rng(0))
    assert lam_aug.requires_grad and A_aug.requires_grad and X_aug.requires_grad
    assert not np.array_equal(lam_aug.data, ctx.view.lambdas)


@pytest.mark.parametrize("kind", ["no_mta", "no_cfa", "edge_mask", "feature_mask"])
def test_augmenter_kinds_train(graph, kind):
    r = train(graph, cfg(augmenter=kind, max_epochs=2, evaluate=False))
    m = r.report.metrics
    if kind in ("no_mta", "feature_mask"):
        assert m["final_lambda_drift"] == 0.0
    if kind in ("no_cfa", "edge_mask"):
        assert m["final_coef_drift"] == 0.0


def test_large_alpha_shrinks_spectral_drift(graph):
    hi = train(graph, cfg(alpha=1e6, max_epochs=15, evaluate=False, lr_augmenter=1e-2))
    lo = train(graph, cfg(alpha=0.1, max_epochs=15, evaluate=False, lr_augmenter=1e-2))
    assert hi.report.metrics["final_lambda_drift"] < lo.report.metrics["final_lambda_drift"]


def test_drift_non_increasing_in_alpha(graph):
    means = []
    for alpha in (0.1, 0.5, 1.5):
        runs = [train(graph, cfg(alpha=alpha, seed=s, max_epochs=15, evaluate=False, lr_augmenter=1e-2)) for s in range(3)]
        means.append(np.mean([r.report.metrics["final_lambda_drift"] for r in runs]))
    assert means[0] >= means[1] >= means[2]


def test_nan_loss_aborts_with_partial_report(graph, monkeypatch):
    calls = {"n": 0}
    real = trainer_mod.encoder_loss

    def poisoned(*a, **k):
        calls["n"] += 1
        out = real(*a, **k)
        return out * float("nan") if calls["n"] == 3 else out

    monkeypatch.setattr(trainer_mod, "encoder_loss", poisoned)
    with pytest.raises(TrainingDiverged) as err:
        train(graph, cfg(max_epochs=5, evaluate=False))
    assert "epoch 2" in str(err.value)
    assert len(err.value.report.epochs) == 2


def test_callback_sees_each_epoch(graph):
    seen = []
    train(graph, cfg(max_epochs=3, evaluate=False), callback=lambda ep, enc, ctx: seen.append(ep))
    assert seen == [0, 1, 2]


def test_infonce_improves_over_training(graph):
    r = train(graph, cfg(max_epochs=30, evaluate=False, lr_encoder=1e-2))
    curve = r.report.curve("encoder_objective")
    assert curve[-1] > curve[0]


# -- classification probe --------------------------------------------------

def _split(n, seed=0):
    return make_splits(n, 0.3, 0.1, seed)


def test_probe_separable_two_class():
    rng = np.random.default_rng(0)
    y = np.repeat([0, 1], 50)
    Z = np.where(y[:, None] == 0, 1.0, -1.0) * np.array([[1.0, 0, 0]]) + 0.01 * rng.standard_normal((100, 3))
    mean, std = evaluate_classification(Z, y, _split(100), repeats=3, epochs=100)
    assert mean == 1.0 and std == 0.0


def test_probe_shuffled_labels_near_chance():
    rng = np.random.default_rng(1)
    n = 1400
    y = rng.permutation(np.arange(n) % 7)
    Z = rng.standard_normal((n, 16))
    mean, _ = evaluate_classification(Z, y, make_splits(n, 0.1, 0.1, 0), repeats=2, epochs=100)
    assert abs(mean - 1 / 7) < 0.05


def test_probe_single_class_train_split():
    y = np.array([0, 0, 0, 1, 1])
    split = Split(train=np.array([0, 1]), val=np.array([2]), test=np.array([3, 4]), seed=0)
    with pytest.raises(ValueError, match="single class"):
        evaluate_classification(np.eye(5), y, split)


def test_probe_shape_mismatch():
    with pytest.raises(ValueError):
        evaluate_classification(np.eye(4), np.array([0, 1, 0]), _split(3))


def test_probe_raw_cora_features(cora):
    # untrained reference level for bag-of-words features under this protocol
    split = make_splits(cora.n, 0.1, 0.1, 0)
    mean, _ = evaluate_classification(cora.features, cora.labels, split, repeats=2)
    assert abs(mean - 0.5689) < 0.05


# -- clustering ------------------------------------------------------------

def test_clustering_one_hot_is_perfect():
    y = np.repeat(np.arange(4), 10)
    nmi, ari = evaluate_clustering(np.eye(4)[y], y, 4, restarts=5)
    assert nmi == pytest.approx(1.0) and ari == pytest.approx(1.0)


def test_clustering_constant_embedding():
    y = np.repeat(np.arange(3), 10)
    nmi, ari = evaluate_clustering(np.ones((30, 5)), y, 3, restarts=5)
    assert nmi == pytest.approx(0.0, abs=1e-12) and ari == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("k", [1, 31])
def test_clustering_bad_k(k):
    with pytest.raises(ValueError):
        evaluate_clustering(np.eye(30), np.zeros(30, dtype=int), k)
