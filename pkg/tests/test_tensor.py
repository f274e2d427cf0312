"""Autodiff core: primitive values, finite-difference gradients, optimizers."""

import numpy as np
import pytest

import symgnn.tensor as T
from symgnn.tensor import Tensor, gradient_check, gradients
from symgnn.nn import BatchNorm, Dropout, GRUCell, Linear, Module, Parameter
from symgnn.optim import adam_step, sgd_step


def t(x, grad=False):
    return Tensor(np.asarray(x, dtype=np.float64), requires_grad=grad)


# -- forward values -----------------------------------------------------------

def test_matmul_value():
    a = np.arange(6.0).reshape(2, 3)
    b = np.arange(12.0).reshape(3, 4)
    out = T.matmul(t(a), t(b))
    np.testing.assert_array_equal(out.data, a @ b)


def test_relu_value():
    out = T.relu(t([-1.0, 0.0, 2.0]))
    np.testing.assert_array_equal(out.data, [0.0, 0.0, 2.0])


def test_softmax_uniform_row():
    out = T.softmax(t([[5.0, 5.0, 5.0]]))
    np.testing.assert_allclose(out.data, [[1 / 3, 1 / 3, 1 / 3]], atol=1e-15)


def test_softmax_shift_invariance():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((4, 6))
    shifted = x + rng.standard_normal((4, 1))
    np.testing.assert_allclose(T.softmax(t(x)).data, T.softmax(t(shifted)).data,
                               atol=1e-12)


def test_shape_mismatch_reports_both_shapes():
    with pytest.raises(T.ShapeError, match=r"\(2, 3\).*\(4, 2\)"):
        T.matmul(t(np.zeros((2, 3))), t(np.zeros((4, 2))))


def test_nonfinite_rejected():
    with pytest.raises(T.NonFiniteError):
        T.log(t([0.0, 1.0]))


# -- simple backward cases ----------------------------------------------------

def test_square_sum_gradient():
    x = t([3.0], grad=True)
    loss = T.reduce_sum(T.mul(x, x))
    loss.backward()
    np.testing.assert_allclose(x.grad, [6.0])


def test_relu_subgradient_zero_at_negative():
    x = t([-1.0, 2.0], grad=True)
    loss = T.reduce_sum(T.relu(x))
    loss.backward()
    np.testing.assert_array_equal(x.grad, [0.0, 1.0])


def test_backward_linearity():
    # gradient of (f + g) equals gradient of f plus gradient of g
    rng = np.random.default_rng(3)
    xv = rng.standard_normal((3, 3))

    def build(x):
        f = T.reduce_sum(T.relu(T.matmul(x, x)))
        g = T.reduce_sum(T.tanh(x))
        return f, g

    x = t(xv, grad=True)
    f, g = build(x)
    T.add(f, g).backward()
    combined = x.grad.copy()

    x1 = t(xv, grad=True)
    build(x1)[0].backward()
    x2 = t(xv, grad=True)
    build(x2)[1].backward()
    np.testing.assert_allclose(combined, x1.grad + x2.grad, atol=1e-12)


def test_gradients_requires_scalar_loss():
    p = Parameter(np.ones(3))
    p.name = "p"
    vec = T.mul(p.tensor, p.tensor)
    with pytest.raises(T.ShapeError):
        gradients(vec, [p])


def test_gradients_unreachable_param_gets_zeros():
    p = Parameter(np.ones((2, 2)))
    p.name = "used"
    q = Parameter(np.ones(3))
    q.name = "unused"
    loss = T.reduce_sum(p.tensor)
    grads = gradients(loss, [p, q])
    np.testing.assert_array_equal(grads["used"], np.ones((2, 2)))
    np.testing.assert_array_equal(grads["unused"], np.zeros(3))


# -- finite-difference checks over the primitive set --------------------------

PRIMITIVES = {
    "matmul": (lambda xs: T.matmul(xs[0], xs[1]), [(3, 4), (4, 2)]),
    "matmul_batched": (lambda xs: T.matmul(xs[0], xs[1]), [(2, 3, 4), (4, 2)]),
    "add": (lambda xs: T.add(xs[0], xs[1]), [(3, 4), (3, 4)]),
    "add_broadcast": (lambda xs: T.add(xs[0], xs[1]), [(3, 4), (4,)]),
    "sub": (lambda xs: T.sub(xs[0], xs[1]), [(3, 4), (3, 4)]),
    "mul": (lambda xs: T.mul(xs[0], xs[1]), [(3, 4), (3, 4)]),
    "scale": (lambda xs: T.scale(xs[0], -1.7), [(3, 4)]),
    "relu": (lambda xs: T.relu(xs[0]), [(5, 5)]),
    "sigmoid": (lambda xs: T.sigmoid(xs[0]), [(4, 3)]),
    "tanh": (lambda xs: T.tanh(xs[0]), [(4, 3)]),
    "exp": (lambda xs: T.exp(xs[0]), [(4, 3)]),
    "log": (lambda xs: T.log(T.add(T.mul(xs[0], xs[0]),
                                   Tensor(np.full((4, 3), 0.5)))), [(4, 3)]),
    "abs": (lambda xs: T.absolute(xs[0]), [(4, 3)]),
    "clip_min": (lambda xs: T.clip_min(xs[0], 0.25), [(4, 3)]),
    "pow_const": (lambda xs: T.pow_const(T.add(T.mul(xs[0], xs[0]),
                                               Tensor(np.ones((3, 3)))), -0.5),
                  [(3, 3)]),
    "softmax": (lambda xs: T.softmax(xs[0]), [(5, 5)]),
    "cat": (lambda xs: T.cat([xs[0], xs[1]], axis=1), [(3, 2), (3, 4)]),
    "take": (lambda xs: T.take(xs[0], [0, 2, 2, 1], axis=0), [(3, 4)]),
    "transpose": (lambda xs: T.transpose(xs[0], (1, 0, 2)), [(2, 3, 4)]),
    "reshape": (lambda xs: T.reshape(xs[0], (4, 6)), [(2, 3, 4)]),
    "sum_axis": (lambda xs: T.reduce_sum(xs[0], axis=1), [(3, 4, 2)]),
    "mean_axes": (lambda xs: T.reduce_mean(xs[0], axis=(0, 2)), [(3, 4, 2)]),
    "conv1d_time": (lambda xs: T.conv1d_time(xs[0], xs[1], stride=1),
                    [(1, 6, 2, 3), (4, 3, 3)]),
    "conv1d_time_strided": (lambda xs: T.conv1d_time(xs[0], xs[1], stride=2),
                            [(1, 7, 2, 3), (4, 5, 3)]),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradients_20_seeds(name):
    fn, shapes = PRIMITIVES[name]
    worst = max(gradient_check(fn, shapes, seed) for seed in range(20))
    assert worst < 1e-4, f"{name}: max relative error {worst:.3e}"


def test_gradient_check_named_examples():
    assert gradient_check(lambda xs: T.matmul(xs[0], xs[1]),
                          [(3, 4), (4, 2)], seed=0) < 1e-4
    assert gradient_check(lambda xs: T.softmax(xs[0]), [(5, 5)], seed=0) < 1e-4


def test_gru_cell_gradient():
    rng = np.random.default_rng(0)
    cell = GRUCell(3, 8, rng)
    cell.finalize()

    def fn(xs):
        return cell(xs[0], xs[1])

    worst = max(gradient_check(fn, [(2, 3), (2, 8)], seed) for seed in range(5))
    assert worst < 1e-4


def test_batch_norm_gradient_train_and_eval():
    rng = np.random.default_rng(0)
    for training in (True, False):
        bn = BatchNorm(4)
        bn.finalize()
        bn.train() if training else bn.eval()

        def fn(xs, bn=bn, training=training):
            if training:
                # keep running stats fixed so repeated evals are identical
                bn.set_buffer("running_mean", np.zeros(4))
                bn.set_buffer("running_var", np.ones(4))
            return bn(xs[0])

        assert gradient_check(fn, [(6, 4)], seed=1) < 1e-4


def test_dropout_gradient_with_frozen_stream():
    drop = Dropout(0.4, seed=7)
    drop.finalize()

    def fn(xs):
        drop.reseed(7)
        return drop(xs[0])

    assert gradient_check(fn, [(5, 6)], seed=2) < 1e-4


def test_dropout_deterministic_given_seed():
    x = t(np.ones((4, 4)))
    a = Dropout(0.5, seed=11)(x).data
    b = Dropout(0.5, seed=11)(x).data
    np.testing.assert_array_equal(a, b)
    assert set(np.unique(a)) <= {0.0, 2.0}


def test_eval_deterministic():
    rng = np.random.default_rng(5)
    lin = Linear(4, 3, rng)
    lin.finalize().eval()
    x = t(rng.standard_normal((6, 4)))
    np.testing.assert_array_equal(lin(x).data, lin(x).data)


# -- optimizers ---------------------------------------------------------------

def _param(value):
    p = Parameter(np.asarray(value, dtype=np.float64))
    p.name = "p"
    return p


def test_sgd_plain_step():
    p = _param([1.0])
    sgd_step([p], {"p": np.array([2.0])}, lr=0.1, momentum=0.0)
    np.testing.assert_allclose(p.data, [0.8])


def test_sgd_zero_gradient_no_move():
    p = _param([1.5])
    sgd_step([p], {"p": np.array([0.0])}, lr=0.1, momentum=0.9)
    np.testing.assert_allclose(p.data, [1.5])


def test_sgd_momentum_two_steps():
    # v1 = 1, p = 1 - 0.1 = 0.9; v2 = 0.9 + 1 = 1.9, p = 0.9 - 0.19 = 0.71
    p = _param([1.0])
    state = sgd_step([p], {"p": np.array([1.0])}, lr=0.1, momentum=0.9)
    np.testing.assert_allclose(p.data, [0.9])
    sgd_step([p], {"p": np.array([1.0])}, lr=0.1, momentum=0.9, state=state)
    np.testing.assert_allclose(p.data, [0.71])


def test_sgd_shape_mismatch():
    p = _param([1.0, 2.0])
    with pytest.raises(ValueError, match="shape"):
        sgd_step([p], {"p": np.zeros((3,))}, lr=0.1)


def test_adam_zero_gradient_no_move():
    p = _param([[1.0, -2.0]])
    adam_step([p], {"p": np.zeros((1, 2))}, lr=1e-3)
    np.testing.assert_allclose(p.data, [[1.0, -2.0]])


def test_adam_single_step_matches_formula():
    # t=1: m_hat = g = 1, v_hat = 1 -> p = -lr / (1 + eps)
    p = _param([0.0])
    adam_step([p], {"p": np.array([1.0])}, lr=1e-3)
    np.testing.assert_allclose(p.data, [-1e-3 / (1 + 1e-8)], rtol=1e-12)


def test_adam_moments_persist():
    # two sequential steps differ from two independent first steps
    def unrolled(g1, g2, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
        m = v = 0.0
        p = 0.0
        for i, g in enumerate((g1, g2), start=1):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            p -= lr * (m / (1 - b1 ** i)) / (np.sqrt(v / (1 - b2 ** i)) + eps)
        return p

    p = _param([0.0])
    state = adam_step([p], {"p": np.array([1.0])}, lr=1e-3)
    adam_step([p], {"p": np.array([2.0])}, lr=1e-3, state=state)
    np.testing.assert_allclose(p.data, [unrolled(1.0, 2.0)], rtol=1e-12)

    fresh = _param([0.0])
    adam_step([fresh], {"p": np.array([1.0])}, lr=1e-3)
    adam_step([fresh], {"p": np.array([2.0])}, lr=1e-3)  # fresh state: t resets
    assert not np.allclose(p.data, fresh.data)


# -- module plumbing ----------------------------------------------------------

def test_parameter_names_are_unique_dotted_paths():
    class Block(Module):
        def __init__(self, rng):
            super().__init__()
            self.lin = Linear(2, 2, rng)

    class Net(Module):
        def __init__(self):
            super().__init__()
            rng = np.random.default_rng(0)
            self.blocks = [Block(rng), Block(rng)]
            self.head = Linear(2, 1, rng)

    net = Net().finalize()
    names = [name for name, _ in net.named_parameters()]
    assert len(names) == len(set(names))
    assert "blocks.0.lin.W" in names and "head.bias" in names
