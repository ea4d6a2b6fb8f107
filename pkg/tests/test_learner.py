import io
import math

import numpy as np
import pytest

from sada.errors import DimensionError, LabelIndexError
from sada.learner import (
    Arch,
    ParamVector,
    batch_grad_sum,
    ce_loss,
    ce_losses,
    exact_projection,
    forward,
    forward_batch,
    init_model,
    load_checkpoint,
    per_sample_grad,
    per_sample_grads,
    predict,
    save_checkpoint,
    sgd_step,
    taylor_residual,
    zero_model,
)


def pv(values):
    values = np.asarray(values, dtype=float)
    return ParamVector(values, (("w", (values.size,)),))


def fd_grad(model, x, label, h=1e-5):
    """Central differences of the loss w.r.t. every parameter."""
    theta = model.params.values
    out = np.empty_like(theta)
    for j in range(theta.size):
        up, dn = theta.copy(), theta.copy()
        up[j] += h
        dn[j] -= h
        lu = -math.log(forward(model.with_params(ParamVector(up, model.params.layout)), x)[label])
        ld = -math.log(forward(model.with_params(ParamVector(dn, model.params.layout)), x)[label])
        out[j] = (lu - ld) / (2 * h)
    return out


# -- forward / loss -------------------------------------------------------------

@pytest.mark.parametrize("arch", list(Arch))
def test_zero_model_uniform(arch, rng):
    m = zero_model(arch, 6, 4, hidden=5)
    np.testing.assert_allclose(forward(m, rng.normal(size=6)), 0.25, atol=1e-15)


def test_two_class_logistic():
    t = 1.7
    m = zero_model(Arch.LINEAR, 1, 2)
    theta = m.params.values.copy()
    theta[0] = t  # W[0, 0]
    p = forward(m.with_params(ParamVector(theta, m.params.layout)), [1.0])
    sig = 1.0 / (1.0 + math.exp(-t))
    np.testing.assert_allclose(p, [sig, 1 - sig], atol=1e-15)


def test_forward_on_simplex(rng):
    for i in range(1000):
        arch = Arch.LINEAR if i % 2 else Arch.MLP
        m = init_model(arch, 5, 7, rng, hidden=8)
        p = forward(m, rng.normal(scale=10.0, size=5))
        assert abs(p.sum() - 1.0) < 1e-9 and np.all(p >= 0)


def test_forward_dimension_mismatch(rng):
    m = init_model(Arch.LINEAR, 4, 3, rng)
    with pytest.raises(DimensionError):
        forward(m, np.zeros(5))
    with pytest.raises(DimensionError):
        forward_batch(m, np.zeros((2, 3)))


def test_ce_loss_examples():
    assert ce_loss(np.array([0.0, 1.0]), 1) == 0.0
    assert ce_loss(np.full(10, 0.1), 3) == pytest.approx(math.log(10), abs=1e-12)
    assert ce_loss(np.array([0.5, 0.5]), 0) == pytest.approx(math.log(2), abs=1e-12)
    assert math.isfinite(ce_loss(np.array([1.0, 0.0]), 1))
    with pytest.raises(LabelIndexError):
        ce_loss(np.array([0.5, 0.5]), 2)
    np.testing.assert_allclose(ce_losses(np.array([[0.5, 0.5], [0.1, 0.9]]), [0, 1]),
                               [math.log(2), -math.log(0.9)])


# -- gradients ------------------------------------------------------------------

def test_gradient_zero_at_onehot():
    m = zero_model(Arch.LINEAR, 2, 3)
    theta = m.params.values.copy()
    theta[-3:] = [0.0, 800.0, 0.0]  # bias drives the softmax to one-hot at class 1
    m = m.with_params(ParamVector(theta, m.params.layout))
    assert np.all(per_sample_grad(m, [0.3, -0.2], 1) == 0.0)


def test_linear_closed_form(rng):
    m = init_model(Arch.LINEAR, 4, 3, rng)
    x = rng.normal(size=4)
    y = 2
    p = forward(m, x)
    g = per_sample_grad(m, x, y)
    resid = p - np.eye(3)[y]
    np.testing.assert_allclose(g[:12].reshape(4, 3), np.outer(x, resid), atol=1e-15)
    np.testing.assert_allclose(g[12:], resid, atol=1e-15)


@pytest.mark.parametrize("arch", list(Arch))
def test_gradient_matches_finite_differences(arch, rng):
    worst = 0.0
    for _ in range(25):
        m = init_model(arch, 4, 3, rng, hidden=6)
        x = rng.normal(size=4)
        y = int(rng.integers(3))
        g = per_sample_grad(m, x, y)
        fd = fd_grad(m, x, y)
        worst = max(worst, np.abs(g - fd).max() / max(np.abs(fd).max(), 1e-8))
    assert worst < 1e-4


@pytest.mark.parametrize("arch", list(Arch))
def test_batch_sum_equals_sum_of_rows(arch, rng):
    m = init_model(arch, 5, 4, rng, hidden=7)
    x = rng.normal(size=(9, 5))
    y = rng.integers(4, size=9)
    g, probs = batch_grad_sum(m, x, y)
    np.testing.assert_allclose(g, per_sample_grads(m, x, y).sum(axis=0), atol=1e-12)
    np.testing.assert_allclose(probs, forward_batch(m, x), atol=0)


def test_gradient_label_error(rng):
    m = init_model(Arch.MLP, 3, 2, rng, hidden=4)
    with pytest.raises(LabelIndexError):
        per_sample_grad(m, np.zeros(3), 5)


# -- sgd / projection -------------------------------------------------------------

def test_sgd_examples():
    theta = pv([1.0, 1.0])
    np.testing.assert_allclose(sgd_step(theta, [0.5, -0.5], 0.1).values, [0.95, 1.05], atol=1e-15)
    assert np.array_equal(sgd_step(theta, [0.0, 0.0], 0.1).values, theta.values)
    assert np.array_equal(sgd_step(theta, [3.0, 4.0], 0.0).values, theta.values)
    assert theta.values.tolist() == [1.0, 1.0]
    with pytest.raises(DimensionError):
        sgd_step(theta, [1.0], 0.1)


def test_projection_examples():
    assert exact_projection([1.0, 2.0], pv([3.0, 4.0]), pv([0.0, 0.0])) == 11.0
    assert exact_projection([1.0, 1.0], pv([1.0, -1.0]), pv([0.0, 0.0])) == 0.0
    assert exact_projection([0.0, 0.0], pv([1.0, 2.0]), pv([0.0, 0.0])) == 0.0
    with pytest.raises(DimensionError):
        exact_projection([1.0, 2.0], pv([1.0, 2.0]), pv([1.0, 2.0, 3.0]))


def test_projection_bilinear(rng):
    for _ in range(100):
        g = rng.normal(size=6)
        a = rng.normal() * 5
        t0, t1 = pv(rng.normal(size=6)), pv(rng.normal(size=6))
        assert exact_projection(a * g, t0, t1) == pytest.approx(abs(a) * exact_projection(g, t0, t1),
                                                                rel=1e-12, abs=1e-12)


# -- taylor record ------------------------------------------------------------------

def _taylor_instance(rng, eta):
    m = init_model(Arch.LINEAR, 10, 3, rng)
    x = rng.normal(size=(32, 10))
    y = rng.integers(3, size=32)
    g, _ = batch_grad_sum(m, x, y)
    theta_next = sgd_step(m.params, g, eta)
    return m, x[0], int(y[0]), theta_next


def test_taylor_no_update(rng):
    m = init_model(Arch.LINEAR, 4, 3, rng)
    rec = taylor_residual(m, np.ones(4), 1, m.params, m.params, 0.1)
    assert (rec.alpha_exact, rec.taylor_value, rec.residual) == (0.0, 0.0, 0.0)


def test_taylor_residual_second_order():
    ratios = []
    for seed in range(100):
        res = []
        for eta in (1e-3, 1e-4):
            m, x, y, nxt = _taylor_instance(np.random.default_rng(seed), eta)
            res.append(taylor_residual(m, x, y, m.params, nxt, eta).residual)
        ratios.append(res[0] / max(res[1], 1e-300))
    assert np.median(ratios) >= 25


def test_taylor_tiny_step_relative_residual():
    rel = []
    for seed in range(20):
        m, x, y, nxt = _taylor_instance(np.random.default_rng(seed), 1e-6)
        rec = taylor_residual(m, x, y, m.params, nxt, 1e-6)
        rel.append(rec.residual / (1e-6 * rec.alpha_exact))
        assert rec.alpha_exact >= 0
    assert np.median(rel) < 1e-2


# -- training properties ----------------------------------------------------------

def test_full_batch_step_decreases_loss():
    for seed in range(50):
        rng = np.random.default_rng(seed)
        m = init_model(Arch.LINEAR, 4, 2, rng)
        y = rng.integers(2, size=40)
        x = rng.normal(scale=0.3, size=(40, 4)) + np.where(y[:, None] == 1, 1.0, -1.0)
        before = ce_losses(forward_batch(m, x), y).mean()
        g, _ = batch_grad_sum(m, x, y)
        m2 = m.with_params(sgd_step(m.params, g / len(y), 1e-3))
        assert ce_losses(forward_batch(m2, x), y).mean() < before


def test_predict_tie_goes_to_lowest(rng):
    m = zero_model(Arch.MLP, 3, 4, hidden=2)
    assert predict(m, rng.normal(size=(5, 3))).tolist() == [0] * 5


@pytest.mark.parametrize("arch", list(Arch))
def test_checkpoint_round_trip(arch, rng, tmp_path):
    m = init_model(arch, 6, 3, rng, hidden=5)
    path = tmp_path / "m.ckpt"
    save_checkpoint(m, path)
    data = path.read_bytes()
    assert data.startswith(b"SADA-CKPT1\n")
    back = load_checkpoint(path)
    assert back.arch is m.arch and back.hidden == m.hidden
    assert back.params.layout == m.params.layout
    assert np.array_equal(back.params.values, m.params.values)
    buf = io.BytesIO()
    save_checkpoint(back, buf)
    assert buf.getvalue() == data


def test_checkpoint_rejects_garbage(tmp_path):
    p = tmp_path / "bad.ckpt"
    p.write_bytes(b"NOPE\nlinear\n")
    with pytest.raises(ValueError):
        load_checkpoint(p)


def test_init_deterministic():
    a = init_model(Arch.MLP, 5, 3, np.random.default_rng(4), hidden=6)
    b = init_model(Arch.MLP, 5, 3, np.random.default_rng(4), hidden=6)
    assert np.array_equal(a.params.values, b.params.values)
    bound = 1 / math.sqrt(5)
    assert np.abs(a.params.views()["W1"]).max() <= bound
