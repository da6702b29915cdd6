"""Adam optimizer: hand-computed updates, determinism, gradient hygiene."""

import numpy as np
import pytest

from asht.nn import (
    NonFiniteGradientError,
    adam_init,
    adam_step,
    clip_grad_norm,
    global_grad_norm,
)


def reference_adam(params, grad_seq, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    """Scalar-loop Adam, written independently of the implementation."""
    out = {k: v.copy() for k, v in params.items()}
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(vv) for k, vv in params.items()}
    for t, grads in enumerate(grad_seq, start=1):
        for name in out:
            g = grads[name]
            m[name] = b1 * m[name] + (1 - b1) * g
            v[name] = b2 * v[name] + (1 - b2) * g * g
            m_hat = m[name] / (1 - b1 ** t)
            v_hat = v[name] / (1 - b2 ** t)
            out[name] = out[name] - lr * m_hat / (np.sqrt(v_hat) + eps)
    return out


class TestAdamStep:
    def test_first_step_hand_value(self):
        # unit gradient: m_hat = v_hat = 1, so the step is lr / (1 + eps)
        params = {"a": np.array([0.0])}
        state = adam_init(params, lr=1e-3)
        adam_step(params, {"a": np.array([1.0])}, state)
        assert params["a"][0] == pytest.approx(-1e-3 / (1.0 + 1e-8), abs=1e-18)
        assert state.step == 1

    def test_constant_unit_gradient_moves_lr_per_step(self):
        params = {"a": np.array([0.0])}
        state = adam_init(params, lr=1e-3)
        for _ in range(5):
            adam_step(params, {"a": np.array([1.0])}, state)
        assert params["a"][0] == pytest.approx(-5e-3 / (1.0 + 1e-8), rel=1e-12)

    def test_zero_gradient_is_a_no_op(self):
        rng = np.random.default_rng(0)
        params = {"w": rng.normal(size=(3, 2)), "b": rng.normal(size=3)}
        before = {k: v.copy() for k, v in params.items()}
        state = adam_init(params)
        adam_step(params, {k: np.zeros_like(v) for k, v in params.items()}, state)
        for name in params:
            np.testing.assert_array_equal(params[name], before[name])

    def test_matches_reference_over_random_steps(self):
        rng = np.random.default_rng(11)
        params = {"w": rng.normal(size=(4, 3)), "b": rng.normal(size=4), "h.w": rng.normal(size=(2, 4))}
        grad_seq = [
            {k: rng.normal(size=v.shape) for k, v in params.items()} for _ in range(7)
        ]
        expected = reference_adam(params, grad_seq, lr=2e-3)
        state = adam_init(params, lr=2e-3)
        for grads in grad_seq:
            adam_step(params, grads, state)
        for name in params:
            np.testing.assert_allclose(params[name], expected[name], rtol=0, atol=1e-14)

    def test_bit_identical_replay(self):
        rng = np.random.default_rng(3)
        init = {"w": rng.normal(size=(5, 5)), "b": rng.normal(size=5)}
        grad_seq = [{k: rng.normal(size=v.shape) for k, v in init.items()} for _ in range(4)]

        def run():
            params = {k: v.copy() for k, v in init.items()}
            state = adam_init(params, lr=1e-2)
            for grads in grad_seq:
                adam_step(params, grads, state)
            return params

        a, b = run(), run()
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])

    def test_non_finite_gradient_rejected_with_block_name(self):
        params = {"good": np.zeros(2), "l0.f.w_r": np.zeros((2, 2))}
        state = adam_init(params)
        grads = {"good": np.ones(2), "l0.f.w_r": np.array([[1.0, np.nan], [0.0, 0.0]])}
        with pytest.raises(NonFiniteGradientError, match="l0.f.w_r"):
            adam_step(params, grads, state)
        # the step aborted before touching anything
        np.testing.assert_array_equal(params["good"], 0.0)
        assert state.step == 0
        grads["l0.f.w_r"][0, 1] = np.inf
        with pytest.raises(NonFiniteGradientError, match="l0.f.w_r"):
            adam_step(params, grads, state)

    def test_mismatched_names_rejected(self):
        params = {"a": np.zeros(1)}
        state = adam_init(params)
        with pytest.raises(ValueError):
            adam_step(params, {"b": np.zeros(1)}, state)


class TestGradNorm:
    def test_global_norm(self):
        grads = {"a": np.array([3.0]), "b": np.array([[4.0]])}
        assert global_grad_norm(grads) == pytest.approx(5.0)

    def test_clip_scales_in_place_and_reports_pre_clip_norm(self):
        grads = {"a": np.array([3.0]), "b": np.array([[4.0]])}
        norm = clip_grad_norm(grads, 1.0)
        assert norm == pytest.approx(5.0)
        assert global_grad_norm(grads) == pytest.approx(1.0)
        np.testing.assert_allclose(grads["a"], [0.6], rtol=0, atol=1e-15)

    def test_clip_below_threshold_is_identity(self):
        grads = {"a": np.array([0.3, 0.4])}
        norm = clip_grad_norm(grads, 1.0)
        assert norm == pytest.approx(0.5)
        np.testing.assert_array_equal(grads["a"], [0.3, 0.4])
