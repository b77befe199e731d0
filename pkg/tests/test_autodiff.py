"""Tape engine checks: every op against the finite-difference oracle."""

import numpy as np
import pytest

from poemrl import autodiff as ad
from poemrl.autodiff import Tensor

from conftest import central_diff, max_rel_err


def grad_of(build, x0):
    """Gradient of scalar build(Tensor) at x0, via the tape."""
    leaf = Tensor(x0)
    out = build(leaf)
    out.backward()
    return leaf.grad


def fd_of(build, x0, shape):
    def f(flat):
        return float(build(Tensor(flat.reshape(shape))).data)

    return central_diff(f, np.asarray(x0).ravel()).reshape(shape)


CASES = [
    ("add_mul", lambda t: ad.tsum(ad.mul(ad.add(t, 2.0), t))),
    ("div", lambda t: ad.tsum(ad.div(1.0, ad.add(ad.square(t), 1.0)))),
    ("tanh_exp", lambda t: ad.tsum(ad.exp(ad.tanh(t)))),
    ("log", lambda t: ad.tsum(ad.log(ad.add(ad.square(t), 0.5)))),
    ("mean_axis", lambda t: ad.tsum(ad.tmean(ad.square(t), axis=0))),
    ("clip", lambda t: ad.tsum(ad.square(ad.clip(t, -0.5, 0.5)))),
    ("minimum", lambda t: ad.tsum(ad.minimum(t, ad.square(t)))),
]


@pytest.mark.parametrize("name,build", CASES, ids=[c[0] for c in CASES])
def test_ops_match_finite_differences(name, build, rng):
    x0 = rng.normal(size=(3, 4))
    g = grad_of(build, x0)
    fd = fd_of(build, x0, x0.shape)
    assert max_rel_err(g, fd) < 1e-6


def test_matmul_gradients(rng):
    a0 = rng.normal(size=(3, 4))
    b0 = rng.normal(size=(4, 2))
    a, b = Tensor(a0), Tensor(b0)
    out = ad.tsum(ad.square(ad.matmul(a, b)))
    out.backward()

    fd_a = central_diff(
        lambda f: float(ad.tsum(ad.square(ad.matmul(Tensor(f.reshape(3, 4)), Tensor(b0)))).data),
        a0.ravel(),
    ).reshape(3, 4)
    fd_b = central_diff(
        lambda f: float(ad.tsum(ad.square(ad.matmul(Tensor(a0), Tensor(f.reshape(4, 2))))).data),
        b0.ravel(),
    ).reshape(4, 2)
    assert max_rel_err(a.grad, fd_a) < 1e-6
    assert max_rel_err(b.grad, fd_b) < 1e-6


def test_broadcasting_bias_gradient(rng):
    x = rng.normal(size=(5, 3))
    b0 = rng.normal(size=3)
    b = Tensor(b0)
    out = ad.tsum(ad.square(ad.add(ad.constant(x), b)))
    out.backward()
    fd = central_diff(lambda f: float(np.sum((x + f) ** 2)), b0)
    assert max_rel_err(b.grad, fd) < 1e-6


def test_gather_rows_routes_gradient():
    t = Tensor(np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]))
    idx = np.array([1, 0, 1])
    out = ad.tsum(ad.mul(ad.gather_rows(t, idx), np.array([10.0, 20.0, 30.0])))
    assert np.allclose(out.data, 2 * 10 + 3 * 20 + 6 * 30)
    out.backward()
    expected = np.array([[0.0, 10.0], [20.0, 0.0], [0.0, 30.0]])
    assert np.array_equal(t.grad, expected)


def test_logsumexp_matches_softmax_gradient(rng):
    x0 = rng.normal(size=(4, 3)) * 5
    t = Tensor(x0)
    out = ad.tsum(ad.logsumexp_rows(t))
    np_lse = np.log(np.exp(x0 - x0.max(1, keepdims=True)).sum(1, keepdims=True)) + x0.max(
        1, keepdims=True
    )
    assert np.allclose(out.data, np_lse.sum())
    out.backward()
    softmax = np.exp(x0 - np_lse)
    assert max_rel_err(t.grad, softmax) < 1e-12


def test_minimum_tie_prefers_first_argument():
    a, b = Tensor(np.array([1.0])), Tensor(np.array([1.0]))
    ad.tsum(ad.minimum(a, b)).backward()
    assert a.grad[0] == 1.0 and b.grad[0] == 0.0


def test_clip_gradient_zero_outside_interval():
    t = Tensor(np.array([-2.0, 0.0, 2.0]))
    ad.tsum(ad.clip(t, -1.0, 1.0)).backward()
    assert np.array_equal(t.grad, np.array([0.0, 1.0, 0.0]))


def test_grad_accumulates_over_reused_nodes(rng):
    x0 = rng.normal(size=3)
    t = Tensor(x0)
    y = ad.add(ad.mul(t, t), ad.mul(t, 3.0))  # x^2 + 3x
    ad.tsum(y).backward()
    assert np.allclose(t.grad, 2 * x0 + 3)


def test_backward_requires_scalar():
    with pytest.raises(ValueError):
        Tensor(np.zeros(3)).backward()
