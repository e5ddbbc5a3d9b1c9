import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lac.mta import MtaParams, build_mask, eigen_embed, init_mta, mta_forward
from lac.tensor import ShapeError, gradcheck


# -- plain numpy reference of the whole module ------------------------------

def _ln(x, g, b, eps=1e-5):
    mu = x.mean(axis=1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * g + b


def _gelu(x):
    return 0.5 * x * (1 + np.tanh(math.sqrt(2 / math.pi) * (x + 0.044715 * x**3)))


def reference_forward(Z, params: MtaParams, lam):
    """Every token through every layer, then ``(1 - m) lam + m pooled``."""
    dh = params.head_dim
    outs = []
    for h in range(params.H):
        x = Z[:, h * dh : (h + 1) * dh]
        for layer in params.layers:
            w = {k: t.data for k, t in layer[h].items()}
            a = _ln(x, w["ln1_g"], w["ln1_b"])
            s = (a @ w["wq"]) @ (a @ w["wk"]).T / math.sqrt(dh)
            s = np.exp(s - s.max(axis=1, keepdims=True))
            s /= s.sum(axis=1, keepdims=True)
            x = s @ (a @ w["wv"]) @ w["wo"] + x
            f = _ln(x, w["ln2_g"], w["ln2_b"])
            x = _gelu(f @ w["w1"] + w["b1"]) @ w["w2"] + w["b2"] + x
        outs.append(np.tanh(x @ params.decoders[h].data).reshape(-1))
    pooled = np.mean(outs, axis=0)
    m = params.mask
    return (1 - m) * lam + m * pooled


def embed_loop(lam, D, eps):
    n = len(lam)
    out = np.zeros((n, D))
    for i in range(n):
        for j in range(1, D + 1):
            if j == 1:
                out[i, 0] = lam[i]
                continue
            k = j // 2
            arg = eps * lam[i] / n ** (2 * k / D)
            out[i, j - 1] = math.sin(arg) if j % 2 == 0 else math.cos(arg)
    return out


def test_embed_zero_eigenvalue():
    row = eigen_embed([0.0, 0.3], 8, 100.0)[0]
    assert row.tolist() == [0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]


def test_embed_single_value():
    row = eigen_embed([1.0], 4, 1.0)[0]
    assert np.allclose(row, [1.0, math.sin(1), math.cos(1), math.sin(1)], atol=1e-15)


def test_embed_matches_loop(rng):
    lam = rng.uniform(-1, 1, 9)
    assert np.abs(eigen_embed(lam, 12, 37.0) - embed_loop(lam, 12, 37.0)).max() < 1e-12


def test_embed_distinct_values_give_distinct_rows(rng):
    Z = eigen_embed(np.array([0.1, 0.2, -0.5]), 6, 100.0)
    assert len({tuple(r) for r in Z}) == 3


@pytest.mark.parametrize("D", [3, 0])
def test_embed_bad_width(D):
    with pytest.raises(ValueError):
        eigen_embed([0.5], D, 1.0)


# -- masks ------------------------------------------------------------------

@pytest.mark.parametrize("strategy", ["random", "low_band", "high_band", "mid_band"])
def test_mask_extremes(strategy):
    assert build_mask(10, 0.0, strategy).sum() == 0
    assert build_mask(10, 1.0, strategy).sum() == 10


def test_mask_bands():
    assert np.flatnonzero(build_mask(10, 0.3, "low_band")).tolist() == [0, 1, 2]
    assert np.flatnonzero(build_mask(10, 0.3, "high_band")).tolist() == [7, 8, 9]
    assert np.flatnonzero(build_mask(10, 0.3, "mid_band")).tolist() == [3, 4, 5]


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 300), st.floats(0, 1), st.sampled_from(["random", "low_band", "high_band", "mid_band"]))
def test_mask_count_property(n, ratio, strategy):
    m = build_mask(n, ratio, strategy, seed=n)
    assert m.sum() == round(ratio * n) and set(np.unique(m)) <= {0.0, 1.0}


def test_mask_errors():
    with pytest.raises(ValueError):
        build_mask(10, 0.2, "top")
    with pytest.raises(ValueError):
        build_mask(10, 1.2)


# -- forward ----------------------------------------------------------------

def _setup(n=12, D=8, H=2, L=1, ratio=0.5, seed=0):
    r = np.random.default_rng(seed)
    lam = np.sort(r.uniform(-1, 1, n))
    params = init_mta(build_mask(n, ratio, "random", seed), D, H, L, 10.0, seed)
    return eigen_embed(lam, D, 10.0), params, lam


@pytest.mark.parametrize("H,L", [(1, 1), (2, 1), (4, 2), (1, 2)])
def test_forward_matches_reference(H, L):
    Z, params, lam = _setup(n=15, D=16, H=H, L=L, ratio=0.4, seed=H * 10 + L)
    out = mta_forward(Z, params, lam).data
    assert np.abs(out - reference_forward(Z, params, lam)).max() < 1e-12


def test_zero_mask_returns_input_exactly():
    Z, params, lam = _setup(ratio=0.0)
    assert np.array_equal(mta_forward(Z, params, lam).data, lam)


def test_zero_weights_collapse():
    Z, params, lam = _setup(H=1, ratio=0.5)
    for block in params.layers[0]:
        for k in ("wq", "wk", "wv", "wo", "w1", "b1", "w2", "b2"):
            block[k].data[...] = 0.0
    params.decoders[0].data[...] = 0.0
    out = mta_forward(Z, params, lam).data
    assert np.array_equal(out, (1 - params.mask) * lam)


def test_full_mask_bounded():
    Z, params, lam = _setup(n=30, ratio=1.0, seed=5)
    for p in params.parameters():
        p.data *= 20.0
    assert np.abs(mta_forward(Z, params, lam).data).max() <= 1.0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 1))
def test_masked_identity_bitwise(seed, ratio):
    Z, params, lam = _setup(n=10, ratio=ratio, seed=seed)
    out = mta_forward(Z, params, lam).data
    keep = params.mask == 0
    assert np.array_equal(out[keep], lam[keep])


def test_permutation_covariance():
    Z, params, lam = _setup(n=14, D=8, H=2, L=2, ratio=0.5, seed=3)
    perm = np.random.default_rng(1).permutation(14)
    out = mta_forward(Z, params, lam).data
    params.mask = params.mask[perm]
    out_p = mta_forward(Z[perm], params, lam[perm]).data
    assert np.abs(out_p - out[perm]).max() < 1e-12


def test_gradients_of_all_weights():
    for seed in range(3):
        Z, params, lam = _setup(n=7, D=8, H=2, L=2, ratio=0.6, seed=seed)
        ps = params.parameters()
        assert gradcheck(lambda: mta_forward(Z, params, lam).sum(), ps) < 1e-4


def test_contract_errors():
    Z, params, lam = _setup()
    with pytest.raises(ShapeError):
        mta_forward(Z[:, :6], params, lam)
    with pytest.raises(ShapeError):
        mta_forward(Z[:5], params, lam[:5])
    with pytest.raises(ValueError):
        init_mta(np.zeros(4), D=8, H=3)
    with pytest.raises(ValueError):
        MtaParams(8, 2, 1, 1.0, [], [], np.array([0.0, 0.5]))


def test_init_deterministic():
    a = init_mta(np.ones(5), 8, 2, 1, 1.0, 4)
    b = init_mta(np.ones(5), 8, 2, 1, 1.0, 4)
    assert all(np.array_equal(x.data, y.data) for x, y in zip(a.parameters(), b.parameters()))
