import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rnnt_tts.numerics import (
    AdamWState,
    ConditionalLayerNorm,
    ConfigError,
    KVCache,
    LayerNorm,
    Linear,
    LrSchedule,
    Module,
    MultiHeadAttention,
    NonFiniteGradient,
    Param,
    Tensor,
    TransformerStack,
    adamw_step,
    affine,
    clip_grad_norm,
    conditional_layer_norm,
    cross_entropy,
    grad_check,
    lr_at,
    multi_head_attention,
    no_grad,
)
from rnnt_tts.numerics import tensor as T
from rnnt_tts.numerics.layers import GRU, Conv1d, Embedding, FeedForward


def fd_grad(f, x, h=1e-5):
    g = np.zeros_like(x)
    for k in range(x.size):
        old = x.flat[k]
        x.flat[k] = old + h
        up = f(x)
        x.flat[k] = old - h
        down = f(x)
        x.flat[k] = old
        g.flat[k] = (up - down) / (2 * h)
    return g


# affine -----------------------------------------------------------------------

def test_affine_identity():
    out = affine(np.array([3.0, -1.0]), Param(np.eye(2)), Param(np.zeros(2)))
    np.testing.assert_array_equal(out.data, [3.0, -1.0])


def test_affine_hand_matrix():
    out = affine(np.array([1.0, 1.0]), Param(np.array([[1.0, 1.0], [0.0, 2.0]])), Param(np.array([1.0, 0.0])))
    np.testing.assert_array_equal(out.data, [3.0, 2.0])


def test_affine_input_gradient_matches_finite_difference():
    W = Param(np.array([[1.0, 1.0], [0.0, 2.0]]))
    b = Param(np.array([1.0, 0.0]))
    x = Tensor(np.array([0.3, -0.7]), requires_grad=True)
    affine(x, W, b).sum().backward()
    np.testing.assert_allclose(x.grad, [1.0, 3.0], atol=1e-12)
    numeric = fd_grad(lambda v: float(affine(v, W, b).data.sum()), np.array([0.3, -0.7]))
    np.testing.assert_allclose(numeric, [1.0, 3.0], atol=1e-8)


def test_affine_accumulates_weight_and_bias_grads():
    W = Param(np.array([[1.0, 1.0], [0.0, 2.0]]))
    b = Param(np.array([1.0, 0.0]))
    affine(np.array([2.0, 5.0]), W, b).sum().backward()
    np.testing.assert_array_equal(W.grad, [[2.0, 5.0], [2.0, 5.0]])
    np.testing.assert_array_equal(b.grad, [1.0, 1.0])


def test_affine_shape_mismatch():
    with pytest.raises(ValueError):
        affine(np.ones(3), Param(np.ones((2, 2))), Param(np.zeros(2)))


# conditional layer norm ---------------------------------------------------------

def test_cln_zero_init_is_plain_layer_norm():
    rng = np.random.default_rng(0)
    cln = ConditionalLayerNorm(2, 4, rng)
    out = cln(Tensor(np.array([1.0, 3.0])), Tensor(rng.standard_normal(4)))
    np.testing.assert_allclose(out.data, [-1.0, 1.0], atol=1e-4)


def test_cln_shift_only():
    rng = np.random.default_rng(1)
    cln = ConditionalLayerNorm(3, 2, rng)
    cln.beta.bias.data = np.full(3, 0.7)
    x = Tensor(np.array([1.0, 2.0, 4.0]))
    plain = T.layer_norm(x).data
    np.testing.assert_allclose(cln(x, Tensor(np.ones(2))).data, plain + 0.7, atol=1e-12)


@given(st.integers(2, 16), st.integers(0, 10_000))
def test_cln_normalized_mean_is_zero(d, seed):
    rng = np.random.default_rng(seed)
    x = Tensor(rng.standard_normal((5, d)) * 3 + 1)
    xhat = T.layer_norm(x).data
    assert np.all(np.abs(xhat.mean(axis=-1)) < 1e-5)
    cln = ConditionalLayerNorm(d, 3, rng)
    # zero-initialized conditioning gives plain LayerNorm for any speaker
    np.testing.assert_allclose(cln(x, Tensor(rng.standard_normal(3))).data, xhat, atol=1e-6)


def test_cln_constant_input_is_guarded():
    rng = np.random.default_rng(0)
    out = conditional_layer_norm(Tensor(np.full(4, 2.0)), Tensor(np.ones(3)), Linear(3, 4, rng, zero_init=True),
                                 Linear(3, 4, rng, zero_init=True))
    assert np.all(np.isfinite(out.data))
    np.testing.assert_allclose(out.data, 0.0)


def test_cln_needs_two_features():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        conditional_layer_norm(Tensor(np.ones(1)), Tensor(np.ones(2)), Linear(2, 1, rng), Linear(2, 1, rng))


# attention ----------------------------------------------------------------------

def test_attention_single_position_returns_value():
    v = np.array([[0.3, -2.0, 5.0]])
    out = multi_head_attention(Tensor(np.array([[1.0, 2.0, 3.0]])), Tensor(np.array([[0.5, 0.1, 0.0]])),
                               Tensor(v), heads=1)
    np.testing.assert_allclose(out.data, v)


def test_attention_causal_position_zero_ignores_future():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 4))
    y = x.copy()
    y[1] += 10.0
    a = multi_head_attention(Tensor(x), Tensor(x), Tensor(x), heads=2, causal=True).data
    b = multi_head_attention(Tensor(y), Tensor(y), Tensor(y), heads=2, causal=True).data
    np.testing.assert_array_equal(a[0], b[0])
    assert not np.allclose(a[1], b[1])


def test_attention_heads_must_divide_dim():
    with pytest.raises(ConfigError):
        multi_head_attention(Tensor(np.ones((2, 5))), Tensor(np.ones((2, 5))), Tensor(np.ones((2, 5))), heads=2)
    with pytest.raises(ConfigError):
        MultiHeadAttention(6, 4, np.random.default_rng(0))


def test_attention_cache_matches_recompute():
    rng = np.random.default_rng(3)
    stack = TransformerStack(2, 8, 2, 16, rng, causal=True)
    x = rng.standard_normal((5, 8))
    full = stack(Tensor(x)).data
    caches = stack.new_caches()
    with no_grad():
        steps = np.concatenate([stack(Tensor(x[j:j + 1]), caches=caches).data for j in range(5)])
    assert np.max(np.abs(steps - full)) < 1e-5
    np.testing.assert_allclose(steps, full, rtol=1e-5, atol=1e-12)


@given(st.integers(0, 10_000), st.integers(1, 5))
def test_causal_attention_invariant_to_suffix(seed, j):
    rng = np.random.default_rng(seed)
    attn = MultiHeadAttention(8, 2, rng)
    x = rng.standard_normal((6, 8))
    y = x.copy()
    y[j:] += rng.standard_normal((6 - j, 8))
    a = attn(Tensor(x), causal=True).data
    b = attn(Tensor(y), causal=True).data
    np.testing.assert_allclose(a[:j], b[:j], rtol=0, atol=1e-12)


def test_kv_cache_grows():
    cache = KVCache()
    assert cache.length == 0
    multi_head_attention(Tensor(np.ones((1, 4))), Tensor(np.ones((1, 4))), Tensor(np.ones((1, 4))), 2, cache=cache)
    multi_head_attention(Tensor(np.ones((1, 4))), Tensor(np.ones((1, 4))), Tensor(np.ones((1, 4))), 2, cache=cache)
    assert cache.length == 2


# cross entropy ------------------------------------------------------------------

def test_cross_entropy_uniform():
    for target in range(4):
        assert float(cross_entropy(Tensor(np.zeros((1, 4))), [target]).data) == pytest.approx(math.log(4), abs=1e-12)


def test_cross_entropy_confident():
    assert float(cross_entropy(Tensor(np.array([[10.0, 0.0]])), [0]).data) == pytest.approx(4.5398899e-5, rel=1e-6)


def test_cross_entropy_gradient_is_softmax_minus_onehot():
    rng = np.random.default_rng(0)
    z = rng.standard_normal(7)
    logits = Tensor(z[None], requires_grad=True)
    cross_entropy(logits, [3]).backward()
    p = np.exp(z - z.max())
    p /= p.sum()
    p[3] -= 1
    np.testing.assert_allclose(logits.grad[0], p, atol=1e-12)
    numeric = fd_grad(lambda v: float(cross_entropy(Tensor(v[None]), [3]).data), z.copy())
    assert np.linalg.norm(numeric - logits.grad[0]) / np.linalg.norm(numeric) < 1e-4


def test_cross_entropy_target_out_of_range():
    with pytest.raises(IndexError):
        cross_entropy(Tensor(np.zeros((1, 4))), [4])


# optimizer and schedule ---------------------------------------------------------

def _scalar(value, grad, name="w"):
    p = Param(np.array([value]), name)
    p.grad = np.array([grad])
    return p


def test_adamw_zero_grad_no_decay_keeps_params():
    p = _scalar(0.5, 0.0)
    adamw_step([p], AdamWState(weight_decay=0.0), lr=0.1)
    assert p.data[0] == 0.5


def test_adamw_hand_update():
    p = _scalar(1.0, 1.0)
    adamw_step([p], AdamWState(beta1=0.0, beta2=0.0, weight_decay=0.0), lr=0.1)
    assert p.data[0] == pytest.approx(1.0 - 0.1 / (1.0 + 1e-8), abs=1e-15)
    assert p.grad[0] == 0.0


def test_adamw_decoupled_decay():
    p = _scalar(1.0, 0.0)
    adamw_step([p], AdamWState(weight_decay=0.01), lr=0.1)
    assert p.data[0] == pytest.approx(0.999, abs=1e-15)


def test_adamw_nonfinite_names_param():
    p = _scalar(1.0, float("nan"), name="encoder.w")
    state = AdamWState()
    with pytest.raises(NonFiniteGradient, match="encoder.w"):
        adamw_step([p], state, lr=0.1)
    assert state.step == 0 and p.data[0] == 1.0


def test_adamw_state_shapes_and_step_counter():
    p = Param(np.ones((2, 3)), "w")
    state = AdamWState()
    for expected in (1, 2, 3):
        p.grad = np.ones((2, 3))
        adamw_step([p], state, lr=1e-2)
        assert state.step == expected
    assert state.m["w"].shape == state.v["w"].shape == (2, 3)


def test_clip_grad_norm():
    a, b = _scalar(0.0, 3.0, "a"), _scalar(0.0, 4.0, "b")
    assert clip_grad_norm([a, b], 1.0) == pytest.approx(5.0)
    assert math.hypot(a.grad[0], b.grad[0]) == pytest.approx(1.0)


def test_lr_schedule_points():
    s = LrSchedule(warmup_steps=100, max_lr=1e-3, total_steps=200, min_lr=0.0)
    assert lr_at(s, 0) == 0.0
    assert lr_at(s, 100) == pytest.approx(1e-3)
    assert lr_at(s, 150) == pytest.approx(5e-4)
    assert lr_at(s, 200) == 0.0 and lr_at(s, 10_000) == 0.0


def test_lr_schedule_validation():
    with pytest.raises(ValueError):
        LrSchedule(warmup_steps=10, total_steps=5)
    with pytest.raises(ValueError):
        LrSchedule(max_lr=1e-4, min_lr=1e-3)


@given(st.integers(1, 500), st.integers(0, 500), st.floats(0, 1e-4))
def test_lr_schedule_continuous_then_non_increasing(warmup, extra, min_lr):
    s = LrSchedule(warmup_steps=warmup, max_lr=1e-3, total_steps=warmup + extra, min_lr=min_lr)
    assert abs(lr_at(s, warmup - 1) - lr_at(s, warmup)) <= 1e-3 / warmup + 1e-12
    values = [lr_at(s, k) for k in range(warmup, warmup + extra + 5)]
    assert all(b <= a + 1e-18 for a, b in zip(values, values[1:]))


# gradient checking --------------------------------------------------------------

def test_grad_check_linear_regression():
    rng = np.random.default_rng(0)
    X, y = rng.standard_normal((20, 3)), rng.standard_normal((20, 1))
    W, b = Param(rng.standard_normal((1, 3)), "W"), Param(np.zeros(1), "b")

    def loss():
        r = T.linear(Tensor(X), W, b) - Tensor(y)
        return (r * r).mean()

    report = grad_check(loss, [W, b], tolerance=1e-6)
    assert report.passed and report.max_relative_error < 1e-6


def test_grad_check_skips_frozen():
    W, frozen = Param(np.ones((1, 2)), "W"), Param(np.ones(1), "frozen")
    frozen.requires_grad = False
    report = grad_check(lambda: (T.linear(Tensor(np.ones((3, 2))), W, frozen) * 2.0).sum(), [W, frozen])
    assert "frozen" not in report.relative_errors and "W" in report.relative_errors


LAYER_CASES = {
    "linear": lambda rng: (Linear(5, 3, rng), lambda m, x: m(x), (4, 5)),
    "layer_norm": lambda rng: (LayerNorm(6), lambda m, x: m(x) * Tensor(np.arange(6.0)), (3, 6)),
    "conditional_layer_norm": lambda rng: (ConditionalLayerNorm(6, 4, rng),
                                           lambda m, x: m(x, Tensor(np.linspace(-1, 1, 4))) * Tensor(np.arange(6.0)),
                                           (3, 6)),
    "attention": lambda rng: (MultiHeadAttention(8, 2, rng), lambda m, x: m(x, causal=True), (4, 8)),
    "feed_forward": lambda rng: (FeedForward(6, 12, rng, kernel=3), lambda m, x: m(x), (5, 6)),
    "conv1d": lambda rng: (Conv1d(3, 4, 3, rng, stride=2), lambda m, x: m(x), (9, 3)),
    "gru": lambda rng: (GRU(3, 5, rng), lambda m, x: m(x), (6, 3)),
    "transformer": lambda rng: (TransformerStack(1, 8, 2, 16, rng, cond_dim=3),
                                lambda m, x: m(x, Tensor(np.array([0.5, -1.0, 2.0]))), (4, 8)),
}


@pytest.mark.parametrize("name", sorted(LAYER_CASES))
def test_layer_gradients_match_finite_differences(name):
    rng = np.random.default_rng(11)
    module, apply, shape = LAYER_CASES[name](rng)
    module.assign_names()
    for p in module.parameters():  # move zero-initialized projections off the origin
        p.data = p.data + 0.1 * rng.standard_normal(p.shape)
    x = Param(rng.standard_normal(shape), "input")
    weights = rng.standard_normal(apply(module, x).shape)
    report = grad_check(lambda: (apply(module, x) * Tensor(weights)).sum(), module.parameters() + [x], tolerance=1e-4)
    assert report.passed, report.relative_errors


def test_module_parameter_names_unique_and_state_round_trip():
    class Two(Module):
        def __init__(self):
            rng = np.random.default_rng(0)
            self.a = Linear(2, 2, rng)
            self.b = [Linear(2, 3, rng), Embedding(4, 2, rng)]

    m = Two()
    m.assign_names()
    names = [n for n, _ in m.named_parameters()]
    assert names == ["a.weight", "a.bias", "b.0.weight", "b.0.bias", "b.1.weight"]
    assert all(p.grad.shape == p.shape for p in m.parameters())
    state = {k: v + 1 for k, v in m.state_dict().items()}
    m.load_state_dict(state)
    np.testing.assert_array_equal(m.a.weight.data, state["a.weight"])
    with pytest.raises(KeyError):
        m.load_state_dict({"a.weight": state["a.weight"]})


def test_embedding_out_of_range():
    with pytest.raises(IndexError):
        Embedding(4, 2, np.random.default_rng(0))([4])
