import numpy as np
import pytest

from driftlab.activations import (ClippedReLUSquared, NoisyReLU, SugarBSiLU,
                                  TopKConfig, make_activation, mask_sparsity,
                                  topk_apply)
from driftlab.rng import RngStream

from conftest import central_diff


def test_make_activation_by_name():
    for name in ("relu", "gelu", "silu", "relu2", "gelu2", "sugar_bsilu"):
        act = make_activation(name)
        assert act.name == name
    clip = make_activation("relu2_clip50")
    assert isinstance(clip, ClippedReLUSquared)
    assert clip.threshold == 50.0
    assert clip.name == "relu2_clip50"
    assert make_activation("gelu2_clip15").threshold == 15.0


def test_make_activation_rejects_unknown():
    with pytest.raises(ValueError):
        make_activation("swish")
    with pytest.raises(ValueError):
        make_activation("relu2_clipXL")


def test_clip_threshold_must_be_positive():
    with pytest.raises(ValueError):
        ClippedReLUSquared(0.0)
    with pytest.raises(ValueError):
        ClippedReLUSquared(-3.0)


def test_forward_mode_invariance_for_stateless_activations():
    rng = RngStream(0)
    x = rng.normal((4, 6))
    for name in ("relu", "gelu", "silu", "relu2", "gelu2", "relu2_clip15"):
        act = make_activation(name)
        yt, _ = act.forward(x, mode="train")
        ye, _ = act.forward(x, mode="eval")
        assert np.array_equal(yt, ye), name


def test_sugar_bsilu_forward_is_relu_bitwise():
    rng = RngStream(1)
    x = rng.normal((8, 8)) * 4
    y, _ = SugarBSiLU().forward(x)
    assert np.array_equal(y, np.maximum(x, 0.0))


def test_sugar_bsilu_backward_at_zero():
    dx, _ = SugarBSiLU().backward(np.array([[0.0]]), np.array([[1.0]]))
    assert abs(dx[0, 0] - 0.9175) < 1e-12


def test_noisy_relu_eval_is_relu():
    rng = RngStream(2)
    x = rng.normal((5, 5))
    act = NoisyReLU(rng=RngStream(3))
    y, aux = act.forward(x, mode="eval")
    assert aux is None
    assert np.array_equal(y, np.maximum(x, 0.0))


def test_noisy_relu_train_above_relu_and_exact_on_nonnegative():
    rng = RngStream(4)
    x = rng.normal((6, 6))
    act = NoisyReLU(v_init=0.9)
    y, aux = act.forward(x, mode="train", rng=RngStream(5))
    relu = np.maximum(x, 0.0)
    # noise bump is (envelope >= 0) * |normal| >= 0, applied only where x < 0
    assert np.all(y >= relu)
    assert np.array_equal(y[x >= 0], relu[x >= 0])
    assert aux.shape == x.shape


def test_noisy_relu_train_requires_rng():
    act = NoisyReLU(v_init=1.0)
    with pytest.raises(ValueError):
        act.forward(np.zeros((2, 2)), mode="train")


def test_noisy_relu_backward_requires_noise_aux():
    act = NoisyReLU(v_init=1.0)
    with pytest.raises(ValueError):
        act.backward(np.zeros((2, 2)), np.ones((2, 2)), mode="train", aux=None)


def test_noisy_relu_v_gradient_matches_replay_finite_difference():
    x = RngStream(6).normal((4, 8))
    g = RngStream(7).normal((4, 8))
    noise = np.abs(RngStream(8).normal((4, 8)))

    def loss_at(v):
        act = NoisyReLU(v_init=float(v[0]))
        y, _ = act.forward(x, mode="train", noise=noise)
        return float(np.sum(g * y))

    act = NoisyReLU(v_init=0.8)
    _, dparams = act.backward(x, g, mode="train", aux=noise)
    fd = central_diff(loss_at, np.array([0.8]))[0]
    assert abs(dparams["v"][0] - fd) < 1e-6


def test_noisy_relu_x_gradient_ignores_noise_term():
    x = np.array([[-3.0, -0.2, 0.4]])
    g = np.ones_like(x)
    act = NoisyReLU(v_init=1.0)
    dx, _ = act.backward(x, g, mode="train", aux=np.ones_like(x))
    assert np.allclose(dx, [[0.0, 0.0, 1.0]])


def test_noisy_relu_v_init_from_rng_is_deterministic():
    a = NoisyReLU(rng=RngStream(11))
    b = NoisyReLU(rng=RngStream(11))
    assert a.v[0] == b.v[0]


# ------------------------------------------------------------------ top-k --


def test_topk_config_validation():
    with pytest.raises(ValueError):
        TopKConfig(k=0.0)
    with pytest.raises(ValueError):
        TopKConfig(k=1.5)
    with pytest.raises(ValueError):
        TopKConfig(k=0.5, granularity="per_column")


def test_topk_keeps_largest_magnitudes_per_row():
    y = np.array([[1.0, -5.0, 3.0, 0.5],
                  [-2.0, 2.0, -0.1, 0.0]])
    masked, mask = topk_apply(y, TopKConfig(k=0.5))
    assert np.array_equal(mask, [[0, 1, 1, 0], [1, 1, 0, 0]])
    assert np.array_equal(masked, y * mask)


def test_topk_tie_break_keeps_lower_index():
    y = np.array([[2.0, -2.0, 2.0, 1.0]])
    _, mask = topk_apply(y, TopKConfig(k=0.5))
    assert np.array_equal(mask, [[1, 1, 0, 0]])


def test_topk_ceil_keep_count():
    # k*n = 0.10 * 4 = 0.4 -> ceil -> keep 1
    y = np.array([[1.0, 2.0, 3.0, 4.0]])
    _, mask = topk_apply(y, TopKConfig(k=0.10))
    assert mask.sum() == 1
    assert mask_sparsity(TopKConfig(k=0.10), 4) == pytest.approx(0.75)


def test_topk_per_tensor_budget():
    y = np.array([[10.0, 0.1], [0.2, 9.0]])
    masked, mask = topk_apply(y, TopKConfig(k=0.5, granularity="per_tensor"))
    assert mask.sum() == 2
    assert mask[0, 0] == 1 and mask[1, 1] == 1


def test_topk_k_one_keeps_everything():
    y = RngStream(12).normal((3, 7))
    masked, mask = topk_apply(y, TopKConfig(k=1.0))
    assert np.all(mask == 1.0)
    assert np.array_equal(masked, y)


def test_topk_observed_sparsity_matches_formula():
    rng = RngStream(13)
    y = rng.normal((16, 33))
    for k in (0.1, 0.25, 0.75):
        cfg = TopKConfig(k=k)
        masked, mask = topk_apply(y, cfg)
        observed = float(np.mean(mask == 0.0))
        assert observed == pytest.approx(mask_sparsity(cfg, 33), abs=1e-12)
