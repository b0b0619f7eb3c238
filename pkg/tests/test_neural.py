import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dib.errors import ConfigError, InvalidInputError, InvalidStateError, ShapeError, TrainingDivergedError
from dib.neural import (AdamState, NetworkParams, NetworkSpec, adam_step, backward, forward, init_network,
                        load_checkpoint, save_checkpoint, softmax)

from oracles import central_diff


def test_init_deterministic_and_shapes():
    spec = NetworkSpec([4, 8, 3], ["relu", "linear"], seed=7)
    a, b = init_network(spec), init_network(spec)
    for x, y in zip(a.arrays(), b.arrays()):
        assert x.tobytes() == y.tobytes()
    assert [w.shape for w in a.weights] == [(4, 8), (8, 3)]
    assert all(np.all(bias == 0) for bias in a.biases)


def test_init_bound_scales_with_fan_in():
    for fan_in in (16, 1024):
        W = init_network(NetworkSpec([fan_in, 32], ["linear"], seed=1)).weights[0]
        bound = 1 / np.sqrt(fan_in)
        assert np.max(np.abs(W)) <= bound
        assert np.max(np.abs(W)) > 0.9 * bound


@pytest.mark.parametrize("dims,acts", [
    ([4, 0, 3], ["relu", "linear"]),
    ([4], []),
    ([4, 3, 2], ["softmax", "linear"]),
    ([4, 3], ["tanh"]),
    ([4, 3, 2], ["relu"]),
])
def test_invalid_specs(dims, acts):
    with pytest.raises(ConfigError):
        NetworkSpec(dims, acts)


def test_spec_round_trip():
    spec = NetworkSpec([5, 4, 3], ["relu", "softmax"], seed=3)
    assert NetworkSpec.from_dict(spec.to_dict()) == spec


def test_identity_linear_layer():
    spec = NetworkSpec([3, 3], ["linear"])
    params = NetworkParams([np.eye(3)], [np.zeros(3)])
    X = np.random.default_rng(0).standard_normal((4, 3))
    out, cache = forward(spec, params, X)
    np.testing.assert_array_equal(out, X)
    up = np.random.default_rng(1).standard_normal((4, 3))
    _, gin = backward(spec, params, cache, up)
    np.testing.assert_array_equal(gin, up)


def test_softmax_zero_logits():
    spec = NetworkSpec([2, 2], ["softmax"])
    params = NetworkParams([np.zeros((2, 2))], [np.zeros(2)])
    out, _ = forward(spec, params, np.ones((3, 2)))
    np.testing.assert_array_equal(out, np.full((3, 2), 0.5))


def test_softmax_stable_for_large_logits():
    S = softmax(np.array([[1000.0, 0.0, -1000.0], [-800.0, -800.0, -800.0]]))
    assert np.all(np.isfinite(S))
    np.testing.assert_allclose(S.sum(axis=1), 1, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(0.1, 100))
def test_softmax_rows_on_simplex(seed, scale):
    S = softmax(scale * np.random.default_rng(seed).standard_normal((6, 5)))
    assert np.all(S >= 0)
    assert np.max(np.abs(S.sum(axis=1) - 1)) <= 1e-12


def test_relu_negative_preactivations():
    spec = NetworkSpec([2, 3], ["relu"])
    params = NetworkParams([-np.ones((2, 3))], [np.zeros(3)])
    X = np.abs(np.random.default_rng(0).standard_normal((4, 2))) + 0.1
    out, cache = forward(spec, params, X)
    assert np.all(out == 0)
    grads, gin = backward(spec, params, cache, np.ones((4, 3)))
    assert np.all(gin == 0) and np.all(grads.weights[0] == 0)


def test_forward_width_mismatch():
    spec = NetworkSpec([3, 2], ["linear"])
    with pytest.raises(ShapeError):
        forward(spec, init_network(spec), np.ones((4, 5)))


def test_stale_cache_detected():
    spec = NetworkSpec([3, 2], ["linear"])
    params = init_network(spec)
    _, cache = forward(spec, params, np.ones((2, 3)))
    adam_step(params, AdamState(), params.zeros_like())
    with pytest.raises(InvalidStateError):
        backward(spec, params, cache, np.ones((2, 2)))
    with pytest.raises(InvalidStateError):
        backward(spec, params.copy(), cache, np.ones((2, 2)))


@pytest.mark.parametrize("acts", [["relu", "relu", "linear"], ["relu", "linear", "softmax"]])
def test_backward_matches_finite_differences(acts):
    spec = NetworkSpec([4, 6, 5, 3], acts, seed=2)
    params = init_network(spec)
    rng = np.random.default_rng(3)
    X = rng.standard_normal((5, 4))
    weights = rng.standard_normal((5, 3))

    def loss(p, x):
        return float(np.sum(weights * forward(spec, p, x)[0]))

    out, cache = forward(spec, params, X)
    grads, gin = backward(spec, params, cache, weights)
    for li in range(3):
        for arr, g in ((params.weights[li], grads.weights[li]), (params.biases[li], grads.biases[li])):
            def f(a, arr=arr):
                saved = arr.copy()
                arr[...] = a
                val = loss(params, X)
                arr[...] = saved
                return val
            fd = central_diff(f, arr.copy())
            big = np.abs(g) > 1e-8
            assert np.all(np.abs(fd[~big]) < 1e-8)
            np.testing.assert_allclose(g[big], fd[big], rtol=1e-5)
    fd_x = central_diff(lambda x: loss(params, x), X)
    np.testing.assert_allclose(gin, fd_x, rtol=1e-5, atol=1e-9)


def test_adam_first_step_is_lr_sign():
    spec = NetworkSpec([3, 2], ["linear"], seed=0)
    params = init_network(spec)
    before = params.copy()
    g = NetworkParams([np.random.default_rng(5).standard_normal((3, 2))], [np.array([0.3, -2.0])])
    adam_step(params, AdamState(lr=3e-4), g)
    for p0, p1, gi in zip(before.arrays(), params.arrays(), g.arrays()):
        step = p0 - p1
        assert np.all(np.sign(step) == np.sign(gi))
        assert np.all(np.abs(step) <= 3e-4) and np.all(np.abs(step) >= 0.999 * 3e-4)
    assert params.version == 1


def test_adam_zero_grad_no_move():
    spec = NetworkSpec([3, 2], ["linear"], seed=0)
    params = init_network(spec)
    before = params.copy()
    state = AdamState()
    for _ in range(3):
        adam_step(params, state, params.zeros_like())
    for a, b in zip(before.arrays(), params.arrays()):
        np.testing.assert_array_equal(a, b)
    assert state.step == 3


def test_adam_rejects_nonfinite_and_shape():
    spec = NetworkSpec([3, 2], ["linear"])
    params = init_network(spec)
    bad = params.zeros_like()
    bad.weights[0][0, 0] = np.nan
    with pytest.raises(TrainingDivergedError):
        adam_step(params, AdamState(), bad)
    with pytest.raises(ShapeError):
        adam_step(params, AdamState(), NetworkParams([np.zeros((2, 2))], [np.zeros(2)]))


def _trajectory(seed):
    spec = NetworkSpec([4, 5, 2], ["relu", "linear"], seed=seed)
    params, state = init_network(spec), AdamState(lr=1e-2)
    X = np.random.default_rng(seed).standard_normal((8, 4))
    for _ in range(25):
        out, cache = forward(spec, params, X)
        grads, _ = backward(spec, params, cache, 2 * out)
        adam_step(params, state, grads)
    return params


def test_adam_trajectories_bit_identical():
    a, b = _trajectory(4), _trajectory(4)
    assert all(x.tobytes() == y.tobytes() for x, y in zip(a.arrays(), b.arrays()))


def test_checkpoint_round_trip(tmp_path):
    spec = NetworkSpec([4, 5, 2], ["relu", "softmax"], seed=9)
    params, state = init_network(spec), AdamState(lr=1e-3)
    out, cache = forward(spec, params, np.ones((3, 4)))
    adam_step(params, state, backward(spec, params, cache, out)[0])
    path = tmp_path / "ck.npz"
    save_checkpoint(path, {"net": (spec, params, state), "bare": (spec, params, None)}, {"k": 2})
    nets, meta = load_checkpoint(path)
    assert meta == {"k": 2}
    spec2, params2, state2 = nets["net"]
    assert spec2 == spec
    for a, b in zip(params.arrays(), params2.arrays()):
        assert a.tobytes() == b.tobytes()
    assert state2.hyper() == state.hyper()
    for a, b in zip(state.m + state.v, state2.m + state2.v):
        assert a.tobytes() == b.tobytes()
    assert nets["bare"][2] is None


def test_checkpoint_rejects_bad_name(tmp_path):
    spec = NetworkSpec([2, 2], ["linear"])
    with pytest.raises(InvalidInputError):
        save_checkpoint(tmp_path / "x.npz", {"a/b": (spec, init_network(spec), None)})
