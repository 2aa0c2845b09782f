import math
import struct

import numpy as np
import pytest

from uwdiff.nn import (
    AvgPool2,
    ChannelAttention,
    CheckpointError,
    Conv2d,
    Denoiser,
    DenoiserConfig,
    LayerNorm,
    Params,
    Pointwise,
    SiLU,
    Stem,
    TransformerBlock,
    Upsample2,
    load_denoiser,
    read_params,
    save_denoiser,
    sinusoidal_embedding,
    write_params,
)
from uwdiff.nn.checkpoint import MAGIC

H = 1e-4
TOL = 1e-4


def rel_err(a, n):
    a, n = np.asarray(a, np.float64), np.asarray(n, np.float64)
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8), initial=0.0))


def numeric_grad(f, arr, idx_iter):
    out = {}
    for idx in idx_iter:
        old = arr[idx]
        arr[idx] = old + H
        up = f()
        arr[idx] = old - H
        down = f()
        arr[idx] = old
        out[idx] = (up - down) / (2 * H)
    return out


def all_indices(arr):
    return list(np.ndindex(arr.shape))


def check_layer(layer, params, x, rng):
    """Gradient check of ``sum(R * layer(x))`` w.r.t. input and every parameter."""
    R = rng.standard_normal(layer.forward(x).shape)
    layer._cache = None

    def loss():
        y = layer.forward(x)
        layer._cache = None
        return float(np.sum(R * y))

    layer.forward(x)
    params.zero_grad()
    dx = layer.backward(R)
    num = numeric_grad(loss, x, all_indices(x))
    worst = rel_err([dx[i] for i in num], list(num.values()))
    for name, arr in params.items():
        num = numeric_grad(loss, arr, all_indices(arr))
        worst = max(worst, rel_err([params.grads[name][i] for i in num], list(num.values())))
    assert worst < TOL
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def test_conv_gradients(rng):
    p = Params(np.float64)
    layer = Conv2d(p, "c", 2, 3, rng=rng)
    p["c.b"] = rng.standard_normal(3)
    check_layer(layer, p, rng.standard_normal((2, 4, 5, 2)), rng)


def test_conv_k1_and_bias_free(rng):
    p = Params(np.float64)
    layer = Conv2d(p, "c", 3, 2, k=1, bias=False, rng=rng)
    assert "c.b" not in p
    check_layer(layer, p, rng.standard_normal((1, 3, 3, 3)), rng)


def test_pointwise_gradients(rng):
    p = Params(np.float64)
    layer = Pointwise(p, "d", 4, 3, rng=rng)
    p["d.b"] = rng.standard_normal(3)
    check_layer(layer, p, rng.standard_normal((2, 3, 2, 4)), rng)
    p2 = Params(np.float64)
    check_layer(Pointwise(p2, "e", 5, 2, rng=rng), p2, rng.standard_normal((3, 5)), rng)


def test_layernorm_gradients(rng):
    p = Params(np.float64)
    layer = LayerNorm(p, "ln", 5)
    p["ln.g"] = rng.uniform(0.5, 1.5, 5)
    p["ln.b"] = rng.standard_normal(5)
    check_layer(layer, p, rng.standard_normal((2, 3, 3, 5)), rng)


@pytest.mark.parametrize("gate", ["add", "mul"])
@pytest.mark.parametrize("k", [1, 3, 5])
def test_channel_attention_gradients(rng, gate, k):
    p = Params(np.float64)
    layer = ChannelAttention(p, "a", k=k, gate=gate, rng=rng)
    p["a.b"] = [0.3]
    check_layer(layer, p, rng.standard_normal((2, 3, 4, 6)), rng)


def test_elementwise_layer_gradients(rng):
    for layer, shape in [(SiLU(), (2, 3, 3, 2)), (AvgPool2(), (2, 4, 6, 3)), (Upsample2(), (1, 2, 3, 2))]:
        check_layer(layer, Params(np.float64), rng.standard_normal(shape), rng)


def test_transformer_block_gradients(rng):
    p = Params(np.float64)
    blk = TransformerBlock(p, "blk", 4, DenoiserConfig(), rng)
    for name, arr in p.items():
        arr[...] = rng.standard_normal(arr.shape) * 0.5 + (1.0 if name.endswith(".g") else 0.0)
    check_layer(blk, p, rng.standard_normal((2, 2, 2, 4)), rng)


def test_full_denoiser_gradient_check():
    rng = np.random.default_rng(1)
    cfg = DenoiserConfig(width=4)
    model = Denoiser(cfg, seed=2, dtype=np.float64)
    for name, arr in model.params.items():
        if name.startswith("head") or name.endswith(".b"):
            arr[...] = rng.standard_normal(arr.shape) * 0.3
    x = rng.uniform(-1, 1, (1, 8, 8, 3))
    c = rng.uniform(-1, 1, (1, 8, 8, 3))
    R = rng.standard_normal(x.shape)

    def loss():
        y = model.forward(x, c, 321)
        model._squeeze = None
        return float(np.sum(R * y))

    model.forward(x, c, 321)
    model.params.zero_grad()
    grads = model.backward(R)
    worst = 0.0
    for name, arr in model.params.items():
        flat = list(np.ndindex(arr.shape))
        pick = [flat[i] for i in rng.choice(len(flat), size=min(len(flat), 12), replace=False)]
        num = numeric_grad(loss, arr, pick)
        worst = max(worst, rel_err([grads[name][i] for i in pick], [num[i] for i in pick]))
    assert worst < TOL


def test_layernorm_statistics(rng):
    ln = LayerNorm(Params(np.float64), "ln", 7)
    x = rng.standard_normal((3, 5, 5, 7)) * 4 + 2
    xhat, _ = ln.normalize(x)
    assert np.abs(xhat.mean(axis=-1)).max() <= 1e-9
    assert np.abs(xhat.var(axis=-1) - 1).max() <= 1e-6
    const, _ = ln.normalize(np.full((1, 2, 2, 7), 3.3))
    assert np.abs(const).max() <= 1e-9


def brute_force_attention(F, w, b, gate="add"):
    n, h, wd, c = F.shape
    k = len(w)
    out = np.empty_like(F)
    for i in range(n):
        pooled = [sum(F[i, y, x, ch] for y in range(h) for x in range(wd)) / (h * wd) for ch in range(c)]
        for ch in range(c):
            acc = b
            for j in range(k):
                src = ch + j - k // 2
                if 0 <= src < c:
                    acc += w[j] * pooled[src]
            s = 1.0 / (1.0 + math.exp(-acc))
            for y in range(h):
                for x in range(wd):
                    out[i, y, x, ch] = F[i, y, x, ch] + s if gate == "add" else F[i, y, x, ch] * s
    return out


@pytest.mark.parametrize("gate", ["add", "mul"])
def test_channel_attention_brute_force(rng, gate):
    p = Params(np.float64)
    att = ChannelAttention(p, "a", k=3, gate=gate, rng=rng)
    p["a.b"] = [-0.2]
    F = rng.standard_normal((2, 3, 4, 5))
    want = brute_force_attention(F, p["a.w"].tolist(), -0.2, gate)
    np.testing.assert_allclose(att(F), want, rtol=1e-12, atol=1e-12)


def test_channel_attention_zero_weights_adds_half():
    att = ChannelAttention(Params(np.float64), "a")
    F = np.broadcast_to(np.arange(4.0), (1, 3, 3, 4)).copy()
    assert np.array_equal(att(F), F + 0.5)
    assert np.array_equal(F.mean(axis=(1, 2))[0], np.arange(4.0))


def test_transformer_block_hand_case():
    p = Params(np.float64)
    blk = TransformerBlock(p, "blk", 2, DenoiserConfig(), rng=None)
    for name in p:
        p[name] = np.zeros(p[name].shape)
    p["blk.ff1.b"] = [0.7, -1.1, 0.2, 0.0]
    p["blk.ff2.b"] = [0.1, -0.2]
    F = np.array([[[[1.5, -3.0]]]])
    # LN with zero scale gives 0; sigmoid(0) = 0.5; FF reduces to its output bias
    np.testing.assert_allclose(blk(F), [[[[1.5 + 0.5 + 0.1, -3.0 + 0.5 - 0.2]]]], atol=1e-15)


def test_transformer_block_shape_and_width_check(rng):
    blk = TransformerBlock(Params(), "blk", 8, DenoiserConfig(), rng)
    x = rng.standard_normal((2, 4, 4, 8)).astype(np.float32)
    assert blk(x).shape == x.shape
    with pytest.raises(ValueError):
        blk(rng.standard_normal((1, 4, 4, 6)))


def test_stem_zero_weights_give_zero():
    p = Params(np.float64)
    stem = Stem(p, DenoiserConfig(width=5), rng=None)
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 4, 4, 3))
    assert np.array_equal(stem.forward(x, x, np.array([5, 900])), np.zeros((2, 4, 4, 5)))


def test_stem_identity_kernel_reproduces_input():
    p = Params(np.float64)
    stem = Stem(p, DenoiserConfig(width=6), rng=None)
    w = np.zeros((3, 3, 6, 6))
    w[1, 1] = np.eye(6)
    p["stem.conv.w"] = w
    rng = np.random.default_rng(4)
    x, c = rng.standard_normal((2, 1, 4, 4, 3))
    np.testing.assert_array_equal(stem.forward(x, c, 10), np.concatenate([x, c], axis=-1))


def test_stem_shape_mismatch():
    stem = Stem(Params(), DenoiserConfig(), rng=None)
    with pytest.raises(ValueError):
        stem.forward(np.zeros((1, 4, 4, 3)), np.zeros((1, 4, 8, 3)), 1)


def test_stem_golden_checksum():
    m = Denoiser(DenoiserConfig(), seed=0)
    rng = np.random.default_rng(123)
    x = rng.uniform(-1, 1, (1, 8, 8, 3)).astype(np.float32)
    c = rng.uniform(-1, 1, (1, 8, 8, 3)).astype(np.float32)
    f = m.stem.forward(x, c, np.array([777])).astype(np.float64)
    assert f.sum() == pytest.approx(249.55478935316205, rel=1e-5)
    assert np.abs(f).sum() == pytest.approx(616.7863359861076, rel=1e-6)


def expected_param_count(C, time_dim=64, ff=2):
    def block(ch):
        return 2 * ch + (3 + 1) + 2 * ch + (ch * ff * ch + ff * ch) + (ff * ch * ch + ch)

    stem = 3 * 3 * 6 * C + C + time_dim * C + C
    blocks = 3 * block(C) + 2 * block(2 * C) + 3 * block(4 * C)
    links = (C * 2 * C + 2 * C) + (2 * C * 4 * C + 4 * C) + (4 * C * 2 * C + 2 * C) + (2 * C * C + C)
    head = 3 * 3 * C * 3
    return stem + blocks + links + head


@pytest.mark.parametrize("width", [4, 8, 16])
def test_parameter_count(width):
    assert Denoiser(DenoiserConfig(width=width)).params.count() == expected_param_count(width)
    if width == 16:
        assert expected_param_count(16) == 70192


@pytest.mark.parametrize("hw", [(4, 4), (8, 12), (16, 8), (20, 4)])
def test_output_shape_and_zero_head(hw):
    m = Denoiser(DenoiserConfig(width=4), seed=1)
    x = np.random.default_rng(0).standard_normal((*hw, 3))
    out = m(x, x, 50)
    assert out.shape == x.shape
    assert not out.any()


@pytest.mark.parametrize("hw", [(6, 8), (8, 10), (2, 4)])
def test_rejects_bad_size(hw):
    m = Denoiser(DenoiserConfig(width=4))
    with pytest.raises(ValueError):
        m(np.zeros((*hw, 3)), np.zeros((*hw, 3)), 1)


def randomized_model(seed=0, width=8):
    m = Denoiser(DenoiserConfig(width=width), seed=seed)
    m.params["head.w"] = np.random.default_rng(seed + 100).standard_normal(m.params["head.w"].shape) * 0.1
    return m


def test_forward_deterministic():
    x = np.random.default_rng(5).uniform(-1, 1, (2, 8, 8, 3))
    a = randomized_model(3)(x, x, [10, 20])
    b = randomized_model(3)(x, x, [10, 20])
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, randomized_model(4)(x, x, [10, 20]))


def test_backward_before_forward():
    m = Denoiser(DenoiserConfig(width=4))
    with pytest.raises(RuntimeError):
        m.backward(np.zeros((1, 4, 4, 3)))
    with pytest.raises(RuntimeError):
        Conv2d(Params(), "c", 1, 1).backward(np.zeros((1, 1, 1, 1)))


def test_zero_upstream_gives_zero_grads():
    m = randomized_model(0, 4)
    x = np.random.default_rng(6).uniform(-1, 1, (8, 8, 3))
    m(x, x, 5)
    m.params.zero_grad()
    grads = m.backward(np.zeros((8, 8, 3)))
    assert all(not g.any() for g in grads.values())


def test_l1_gradient_signs():
    rng = np.random.default_rng(7)
    pred, target = rng.standard_normal((2, 3, 4, 4, 3))
    target[0, 0, 0] = pred[0, 0, 0]
    g = np.sign(pred - target) / pred.size
    assert set(np.unique(g * pred.size)) <= {-1.0, 0.0, 1.0}
    assert g[0, 0, 0].tolist() == [0.0, 0.0, 0.0]


def test_sinusoidal_embedding():
    e = sinusoidal_embedding([0, 5], 8)
    assert e.shape == (2, 8)
    assert e[0].tolist() == [0, 0, 0, 0, 1, 1, 1, 1]
    assert e[1, 0] == pytest.approx(math.sin(5.0))
    with pytest.raises(ValueError):
        sinusoidal_embedding(1, 7)


def test_params_store():
    p = Params()
    p.add("a", np.zeros(3))
    with pytest.raises(KeyError):
        p.add("a", np.zeros(3))
    with pytest.raises(ValueError):
        p["a"] = np.zeros(4)
    assert p.count() == 3 and p.grads["a"].shape == (3,)


def test_checkpoint_round_trip(tmp_path):
    m = randomized_model(1)
    path = tmp_path / "m.ckpt"
    save_denoiser(m, path)
    back = load_denoiser(path)
    assert back.cfg == m.cfg
    for k, v in m.params.items():
        assert back.params[k].tobytes() == v.tobytes()
    x = np.random.default_rng(8).uniform(-1, 1, (8, 8, 3))
    assert back(x, x, 99).tobytes() == m(x, x, 99).tobytes()
    assert list(read_params(path)) == list(m.params)


def test_checkpoint_layout(tmp_path):
    path = tmp_path / "tiny.ckpt"
    write_params({"w": np.array([[1.0, 2.0]], np.float32)}, path)
    raw = path.read_bytes()
    want = MAGIC + struct.pack("<III", 1, 1, 1) + b"w" + struct.pack("<III", 2, 1, 2) + struct.pack("<2f", 1.0, 2.0)
    assert raw == want


def test_checkpoint_rejections(tmp_path):
    good = tmp_path / "g.ckpt"
    write_params({"w": np.ones((2, 2), np.float32)}, good)
    raw = good.read_bytes()
    cases = {
        "magic": b"XXXX" + raw[4:],
        "version": raw[:4] + struct.pack("<I", 2) + raw[8:],
        "truncated": raw[:-3],
        "trailing": raw + b"\0",
        "empty": b"",
    }
    for label, data in cases.items():
        p = tmp_path / f"{label}.ckpt"
        p.write_bytes(data)
        with pytest.raises(CheckpointError):
            read_params(p)
    with pytest.raises(CheckpointError):
        load_denoiser(good)
