import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from flownovel import ad
from flownovel.ad import Adam, AdamState, Tensor, adam_step, backward, build_tape, grad, no_grad
from flownovel.errors import ContractError, DimensionError, DomainError

from conftest import central_diff, param, rel_err


def test_matmul_identity_and_hand_values():
    M = np.arange(12.0).reshape(3, 4)
    assert np.array_equal((Tensor(np.eye(3)) @ Tensor(M)).data, M)
    out = Tensor([[1.0, 2.0], [3.0, 4.0]]) @ Tensor([[1.0], [1.0]])
    assert np.array_equal(out.data, [[3.0], [7.0]])


def test_matmul_grad_is_ones_times_b_transpose(rng):
    a, b = param(rng.normal(size=(4, 5))), Tensor(rng.normal(size=(5, 2)))
    backward((a @ b).sum())
    assert np.allclose(a.grad, np.ones((4, 2)) @ b.data.T)
    fd = central_diff(lambda v: float((v @ b.data).sum()), a.data, h=1e-6)
    assert rel_err(a.grad, fd) < 1e-5


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))


def test_elementwise_examples():
    assert ad.tanh(Tensor(0.0)).item() == 0.0
    x = np.array([0.1, 1.0, 7.5])
    assert np.allclose(ad.exp(ad.log(Tensor(x))).data, x)
    p = param(0.5)
    backward(ad.tanh(p))
    fd = central_diff(lambda v: math.tanh(float(v)), np.array(0.5))
    assert abs(float(p.grad) - 0.78644773) < 1e-7
    assert abs(float(p.grad) - float(fd)) < 1e-8


def test_domain_errors():
    with pytest.raises(DomainError):
        ad.log(Tensor([1.0, 0.0]))
    with pytest.raises(DomainError):
        Tensor([1.0]) / Tensor([0.0])


def test_backward_examples():
    p = param([1.0, 2.0, 3.0])
    backward(p.sum())
    assert np.array_equal(p.grad, np.ones(3))
    p = param([1.0, 2.0, 3.0])
    backward(ad.square(p).sum())
    assert np.array_equal(p.grad, [2.0, 4.0, 6.0])


def test_backward_needs_scalar():
    with pytest.raises(ContractError):
        backward(param([1.0, 2.0]) * 2.0)


def _mlp_loss(W1, b1, W2, b2, x):
    h = ad.tanh(x @ W1 + b1)
    return ad.square(h @ W2 + b2).mean()


def test_two_layer_mlp_matches_finite_differences(rng):
    x = Tensor(rng.normal(size=(6, 3)))
    raw = [rng.normal(size=(3, 5)), rng.normal(size=5), rng.normal(size=(5, 2)), rng.normal(size=2)]
    ps = [param(v) for v in raw]
    gs = grad(_mlp_loss(*ps, x), ps)
    for i, g in enumerate(gs):
        def f(v, i=i):
            vals = [Tensor(r) for r in raw]
            vals[i] = Tensor(v)
            return _mlp_loss(*vals, x).item()
        assert rel_err(g, central_diff(f, raw[i])) < 1e-4


UNARY = {
    "tanh": (ad.tanh, np.tanh),
    "exp": (ad.exp, np.exp),
    "log": (ad.log, np.log),
    "neg": (ad.neg, np.negative),
    "square": (ad.square, np.square),
}
BINARY = {
    "add": (ad.add, np.add),
    "sub": (ad.sub, np.subtract),
    "mul": (ad.mul, np.multiply),
    "div": (ad.div, np.divide),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_gradient_check(name):
    op, ref = UNARY[name]
    r = np.random.default_rng(hash(name) % 2**32)
    for _ in range(20):
        x = r.uniform(0.2, 2.0, size=4)
        w = r.normal(size=4)
        p = param(x)
        backward((op(p) * w).sum())
        fd = central_diff(lambda v: float(np.sum(ref(v) * w)), x)
        assert rel_err(p.grad, fd) < 1e-4


@pytest.mark.parametrize("name", sorted(BINARY))
def test_binary_gradient_check_with_broadcast(name):
    op, ref = BINARY[name]
    r = np.random.default_rng(len(name))
    for _ in range(20):
        a, b = r.uniform(0.5, 2.0, size=(3, 4)), r.uniform(0.5, 2.0, size=4)
        pa, pb = param(a), param(b)
        backward(op(pa, pb).sum())
        assert rel_err(pa.grad, central_diff(lambda v: float(ref(v, b).sum()), a)) < 1e-4
        assert rel_err(pb.grad, central_diff(lambda v: float(ref(a, v).sum()), b)) < 1e-4


def test_structural_ops_gradients(rng):
    x = rng.normal(size=(3, 4))
    w = rng.normal(size=(3, 4))
    for fn, ref in [
        (lambda t: ad.flip(t, axis=1), lambda v: v[:, ::-1]),
        (lambda t: ad.concat([t, t * 2.0], axis=1)[:, 2:6], lambda v: np.concatenate([v, 2 * v], 1)[:, 2:6]),
        (lambda t: ad.tsum(t, axis=0) * Tensor(w[0]), lambda v: v.sum(0) * w[0]),
        (lambda t: ad.mean(t, axis=1), lambda v: v.mean(1)),
    ]:
        p = param(x)
        out = fn(p)
        backward(out.sum())
        assert rel_err(p.grad, central_diff(lambda v: float(ref(v).sum()), x)) < 1e-4


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (3,), elements=st.floats(-2, 2)), arrays(np.float64, (3,), elements=st.floats(-2, 2)))
def test_composite_expression_gradients(a, b):
    def f(u):
        return float(np.sum(np.tanh(u * b) * np.exp(-u ** 2) + u / (1.5 + u ** 2)))
    p = param(a)
    bt = Tensor(b)
    backward((ad.tanh(p * bt) * ad.exp(-ad.square(p)) + p / (ad.square(p) + 1.5)).sum())
    assert np.allclose(p.grad, central_diff(f, a), rtol=1e-4, atol=1e-7)


def test_tape_is_topological_and_visits_once(rng):
    p = param(rng.normal(size=3))
    shared = ad.tanh(p)
    loss = (shared * shared + shared).sum()
    tape = build_tape(loss)
    assert len(tape) == len({id(n) for n in tape})
    pos = {id(n): i for i, n in enumerate(tape)}
    for node in tape:
        for parent in node._parents:
            assert pos[id(parent)] < pos[id(node)]


def test_tape_determinism(rng):
    x = rng.normal(size=(5, 3))

    def run():
        p = param(np.linspace(-1, 1, 6).reshape(3, 2))
        loss = ad.tanh(Tensor(x) @ p).sum()
        backward(loss)
        return loss.item(), p.grad.copy()

    (l1, g1), (l2, g2) = run(), run()
    assert l1 == l2 and np.array_equal(g1, g2)


def test_no_gradient_leakage():
    used, unused = param([1.0, 2.0]), param([3.0])
    g_used, g_unused = grad((used * 3.0).sum(), [used, unused])
    assert np.array_equal(g_used, [3.0, 3.0])
    assert np.array_equal(g_unused, [0.0])


def test_no_grad_records_nothing():
    p = param([1.0])
    with no_grad():
        out = p * 2.0
    assert not out.requires_grad


def test_adam_zero_grads_no_decay_is_noop():
    p = param([1.0, -2.0])
    state = AdamState(weight_decay=0.0)
    adam_step(state, [p], [np.zeros(2)])
    assert np.array_equal(p.data, [1.0, -2.0])
    assert state.step_count == 1


def test_adam_first_step_is_lr_sign():
    # oracle: m=0.1, v=0.001, mhat=1, vhat=1 -> step lr/(1+eps)
    p = param(0.0)
    adam_step(AdamState(learning_rate=0.01, weight_decay=0.0), [p], [np.array(1.0)])
    assert abs(float(p.data) - (-0.01 / (1 + 1e-8))) < 1e-15


def test_adam_weight_decay_is_l2_gradient():
    p = param(2.0)
    adam_step(AdamState(learning_rate=0.01, weight_decay=0.5), [p], [np.array(0.0)])
    assert float(p.data) < 2.0  # effective gradient 0.5 * 2 > 0


def _oracle_adam_quadratic(lr, steps, b1=0.9, b2=0.999, eps=1e-8):
    p = m = v = 0.0
    for t in range(1, steps + 1):
        g = 2 * (p - 3.0)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
    return p


def test_adam_converges_on_quadratic():
    # at lr 0.01 Adam moves about lr per step, so 100 steps cannot cover a distance of 3
    p = param(0.0)
    opt = Adam([p], lr=0.1, weight_decay=0.0)
    for _ in range(100):
        opt.zero_grad()
        backward(ad.square(p - 3.0))
        opt.step()
    assert abs(float(p.data) - 3.0) < 0.5
    assert abs(float(p.data) - _oracle_adam_quadratic(0.1, 100)) < 1e-12


def test_adam_moments_match_shapes():
    ps = [param(np.ones((2, 3))), param(np.ones(4))]
    state = AdamState()
    adam_step(state, ps, [np.ones((2, 3)), np.ones(4)])
    adam_step(state, ps, [np.ones((2, 3)), np.ones(4)])
    assert state.step_count == 2
    assert [m.shape for m in state.first_moment] == [(2, 3), (4,)]
    assert [v.shape for v in state.second_moment] == [(2, 3), (4,)]
