import numpy as np
import pytest

from driftlab.errors import NumericError
from driftlab.optim import Adam, AdamW, SGD, SGDMomentum, make_optimizer


def _params(w=0.0):
    return {"w": np.array([float(w)])}


def test_sgd_step():
    p = _params(1.0)
    SGD(p, lr=0.1).step({"w": np.array([2.0])})
    assert p["w"][0] == pytest.approx(0.8)


def test_sgd_momentum_two_step_hand_values():
    # constant unit gradient, lr 0.1, mu 0.9:
    # v1 = 1, w1 = -0.1; v2 = 1.9, w2 = -0.1 - 0.19 = -0.29
    p = _params(0.0)
    opt = SGDMomentum(p, lr=0.1, momentum=0.9)
    g = {"w": np.array([1.0])}
    opt.step(g)
    assert p["w"][0] == pytest.approx(-0.1)
    opt.step(g)
    assert p["w"][0] == pytest.approx(-0.29)


def test_momentum_zero_matches_sgd():
    p1, p2 = _params(0.3), _params(0.3)
    g = {"w": np.array([0.7])}
    SGD(p1, lr=0.05).step(g)
    SGDMomentum(p2, lr=0.05, momentum=0.0).step(g)
    assert p1["w"][0] == p2["w"][0]


def test_adam_first_step_size_is_about_lr():
    # bias correction makes |step 1| = lr * g/(|g| + ~0) regardless of g scale
    for g0 in (1e-4, 1.0, 1e4):
        p = _params(0.0)
        Adam(p, lr=0.001).step({"w": np.array([g0])})
        assert p["w"][0] == pytest.approx(-0.001, rel=1e-3)


def test_adam_bias_correction_hand_values():
    p = _params(0.0)
    opt = Adam(p, lr=0.01, betas=(0.9, 0.999), eps=1e-8)
    g1, g2 = 1.0, 0.5
    opt.step({"w": np.array([g1])})
    opt.step({"w": np.array([g2])})
    m = 0.9 * ((1 - 0.9) * g1) + (1 - 0.9) * g2
    v = 0.999 * ((1 - 0.999) * g1 * g1) + (1 - 0.999) * g2 * g2
    mhat = m / (1 - 0.9**2)
    vhat = v / (1 - 0.999**2)
    w1 = -0.01 * 1.0 / (1.0 + 1e-8)  # first step with g=1
    expect = w1 - 0.01 * mhat / (np.sqrt(vhat) + 1e-8)
    assert p["w"][0] == pytest.approx(expect, rel=1e-12)


def test_adam_coupled_weight_decay_enters_gradient():
    p = _params(10.0)
    opt = Adam(p, lr=0.001, weight_decay=0.1)
    opt.step({"w": np.array([0.0])})
    # effective gradient is wd*w = 1 > 0, so the step is about -lr
    assert p["w"][0] == pytest.approx(10.0 - 0.001, rel=1e-3)


def test_adamw_decay_is_decoupled_and_applied_first():
    p = _params(10.0)
    opt = AdamW(p, lr=0.001, weight_decay=0.1)
    opt.step({"w": np.array([0.0])})
    # zero gradient: moments stay zero, update term is 0/(0+eps)=0;
    # only the decoupled shrink w *= (1 - lr*wd) applies
    assert p["w"][0] == pytest.approx(10.0 * (1 - 0.001 * 0.1))


def test_adamw_differs_from_adam_under_decay():
    pa, pw = _params(5.0), _params(5.0)
    g = {"w": np.array([1.0])}
    Adam(pa, lr=0.01, weight_decay=0.5).step(g)
    AdamW(pw, lr=0.01, weight_decay=0.5).step(g)
    assert pa["w"][0] != pw["w"][0]


def test_nonfinite_gradients_leave_params_untouched():
    for cls in (SGD, SGDMomentum, Adam, AdamW):
        p = {"a": np.array([1.0]), "b": np.array([2.0])}
        opt = cls(p, lr=0.1) if cls in (SGD, SGDMomentum) else cls(p, lr=0.1)
        with pytest.raises(NumericError):
            opt.step({"a": np.array([1.0]), "b": np.array([np.nan])})
        assert p["a"][0] == 1.0 and p["b"][0] == 2.0
        assert opt.t == 0


def test_missing_gradient_raises():
    opt = SGD(_params(), lr=0.1)
    with pytest.raises(ValueError):
        opt.step({})


def test_updates_happen_in_place():
    p = _params(1.0)
    view = p["w"]
    SGD(p, lr=0.5).step({"w": np.array([1.0])})
    assert view[0] == pytest.approx(0.5)


def test_make_optimizer_dispatch_and_validation():
    p = _params()
    assert isinstance(make_optimizer("sgd", p, lr=0.1), SGD)
    assert isinstance(make_optimizer("sgd_momentum", p, lr=0.1), SGDMomentum)
    assert isinstance(make_optimizer("adam", p, lr=0.1), Adam)
    assert isinstance(make_optimizer("adamw", p, lr=0.1), AdamW)
    with pytest.raises(ValueError):
        make_optimizer("rmsprop", p, lr=0.1)
    with pytest.raises(ValueError):
        make_optimizer("sgd", p, lr=0.0)
    with pytest.raises(ValueError):
        SGDMomentum(p, lr=0.1, momentum=1.0)
    with pytest.raises(ValueError):
        Adam(p, lr=0.1, betas=(1.0, 0.999))
