import numpy as np
import pytest

from mgmae.optim import Adam, clip_global_norm


def reference_adam(p, grads, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    """Textbook Adam written out step by step."""
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        p = p - lr * m_hat / (np.sqrt(v_hat) + eps)
    return p


class TestClip:
    def test_hand_case(self):
        out, norm = clip_global_norm({"a": np.array([3.0]), "b": np.array([4.0])}, 1.0)
        assert norm == 5.0
        np.testing.assert_allclose(out["a"], [0.6], rtol=1e-15)
        np.testing.assert_allclose(out["b"], [0.8], rtol=1e-15)

    def test_below_threshold_untouched(self):
        g = {"a": np.array([0.1, 0.2])}
        out, _ = clip_global_norm(g, 5.0)
        np.testing.assert_array_equal(out["a"], g["a"])

    def test_aliased_inputs_are_scaled_once(self):
        shared = np.array([6.0, 8.0])
        out, norm = clip_global_norm({"a": shared, "b": shared}, 1.0)
        assert norm == pytest.approx(np.sqrt(200))
        np.testing.assert_allclose(out["a"], shared / np.sqrt(200), rtol=1e-15)
        np.testing.assert_array_equal(shared, [6.0, 8.0])


class TestAdam:
    def test_first_step_moves_by_lr(self):
        p = {"w": np.array([1.0, -1.0])}
        Adam(p, lr=0.1).step({"w": np.array([3.0, -0.5])})
        np.testing.assert_allclose(p["w"], [0.9, -0.9], rtol=1e-7)

    def test_matches_reference(self, rng):
        start = rng.standard_normal(5)
        grads = [rng.standard_normal(5) for _ in range(25)]
        p = {"w": start.copy()}
        opt = Adam(p, lr=0.01)
        for g in grads:
            opt.step({"w": g})
        np.testing.assert_allclose(p["w"], reference_adam(start, grads, lr=0.01), rtol=1e-12)

    def test_missing_gradient_counts_as_zero(self, rng):
        start = rng.standard_normal(3)
        grads = [rng.standard_normal(3), None, rng.standard_normal(3)]
        p = {"w": start.copy()}
        opt = Adam(p)
        for g in grads:
            opt.step({} if g is None else {"w": g})
        expected = reference_adam(start, [g if g is not None else np.zeros(3) for g in grads])
        np.testing.assert_allclose(p["w"], expected, rtol=1e-12)

    def test_minimises_a_quadratic(self):
        p = {"w": np.array([5.0, -3.0])}
        opt = Adam(p, lr=0.1)
        for _ in range(500):
            opt.step({"w": 2 * p["w"]})
        assert np.abs(p["w"]).max() < 1e-2
