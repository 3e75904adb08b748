import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from aoa_lstm.aoa import (
    aoa_backward,
    aoa_forward,
    average_beta,
    dual_attention,
    final_attention,
    interaction,
    sentence_representation,
)
from aoa_lstm.numerics import finite_difference_gradient


def loop_composition(h_s, h_t):
    """Independent scalar-loop recomputation of every attention step."""
    n, m = h_s.shape[0], h_t.shape[0]
    I = [[sum(h_s[i, k] * h_t[j, k] for k in range(h_s.shape[1])) for j in range(m)] for i in range(n)]
    alpha = [[0.0] * m for _ in range(n)]
    beta = [[0.0] * m for _ in range(n)]
    for j in range(m):
        z = sum(mpmath.exp(I[i][j]) for i in range(n))
        for i in range(n):
            alpha[i][j] = float(mpmath.exp(I[i][j]) / z)
    for i in range(n):
        z = sum(mpmath.exp(I[i][j]) for j in range(m))
        for j in range(m):
            beta[i][j] = float(mpmath.exp(I[i][j]) / z)
    beta_bar = [sum(beta[i][j] for i in range(n)) / n for j in range(m)]
    gamma = [sum(alpha[i][j] * beta_bar[j] for j in range(m)) for i in range(n)]
    r = [sum(gamma[i] * h_s[i, k] for i in range(n)) for k in range(h_s.shape[1])]
    return np.array(r), np.array(gamma)


class TestInteraction:
    def test_identity(self):
        np.testing.assert_array_equal(interaction(np.eye(2), [[1.0, 0.0]]), [[1.0], [0.0]])

    def test_single_target_row(self, rng):
        h_s, t = rng.normal(size=(4, 6)), rng.normal(size=(1, 6))
        np.testing.assert_allclose(interaction(h_s, t)[:, 0], h_s @ t[0])

    def test_loop_oracle(self, rng):
        h_s, h_t = rng.normal(size=(5, 6)), rng.normal(size=(3, 6))
        I = interaction(h_s, h_t)
        for i in range(5):
            for j in range(3):
                assert abs(I[i, j] - sum(h_s[i, k] * h_t[j, k] for k in range(6))) <= 1e-12

    def test_mismatch(self):
        with pytest.raises(ValueError):
            interaction(np.ones((2, 3)), np.ones((2, 4)))


class TestDualAttention:
    def test_zeros(self):
        a, b = dual_attention(np.zeros((3, 2)))
        np.testing.assert_allclose(a, 1 / 3)
        np.testing.assert_allclose(b, 1 / 2)

    def test_two_by_one(self):
        mpmath.mp.dps = 30
        a, b = dual_attention(np.array([[1.0], [0.0]]))
        np.testing.assert_allclose(a[:, 0], [float(mpmath.e / (mpmath.e + 1)), float(1 / (mpmath.e + 1))], rtol=1e-15)
        np.testing.assert_array_equal(b, [[1.0], [1.0]])

    def test_single_target(self, rng):
        _, b = dual_attention(rng.normal(size=(5, 1)) * 30)
        np.testing.assert_array_equal(b, 1.0)


class TestAverageBeta:
    def test_mean(self):
        np.testing.assert_allclose(average_beta(np.array([[0.5, 0.5], [0.3, 0.7]])), [0.4, 0.6])

    def test_single_row(self):
        np.testing.assert_array_equal(average_beta(np.array([[0.2, 0.8]])), [0.2, 0.8])

    def test_distribution(self, rng):
        _, b = dual_attention(rng.normal(size=(7, 4)))
        assert abs(average_beta(b).sum() - 1) < 1e-15


class TestFinalAttention:
    def test_single_target(self, rng):
        a, _ = dual_attention(rng.normal(size=(4, 1)))
        np.testing.assert_array_equal(final_attention(a, np.array([1.0])), a[:, 0])

    def test_one_hot_selector(self, rng):
        a, _ = dual_attention(rng.normal(size=(4, 3)))
        np.testing.assert_array_equal(final_attention(a, np.array([0.0, 1.0, 0.0])), a[:, 1])

    def test_uniform_columns(self, rng):
        a = np.full((4, 3), 0.25)
        np.testing.assert_allclose(final_attention(a, np.array([0.2, 0.5, 0.3])), 0.25)

    def test_mismatch(self):
        with pytest.raises(ValueError):
            final_attention(np.ones((3, 2)), np.ones(3))


class TestSentenceRepresentation:
    def test_selector(self, rng):
        h_s = rng.normal(size=(4, 6))
        np.testing.assert_array_equal(sentence_representation(h_s, np.array([0, 0, 1.0, 0])), h_s[2])

    def test_constant_rows(self, rng):
        v = rng.normal(size=6)
        g = rng.dirichlet(np.ones(5))
        np.testing.assert_allclose(sentence_representation(np.tile(v, (5, 1)), g), v, atol=1e-15)

    def test_loop_oracle(self, rng):
        h_s, g = rng.normal(size=(5, 6)), rng.dirichlet(np.ones(5))
        expected = [sum(g[i] * h_s[i, k] for i in range(5)) for k in range(6)]
        np.testing.assert_allclose(sentence_representation(h_s, g), expected, rtol=0, atol=1e-12)

    def test_mismatch(self):
        with pytest.raises(ValueError):
            sentence_representation(np.ones((3, 2)), np.ones(2))


class TestComposition:
    def test_single_word(self, rng):
        h_s, h_t = rng.normal(size=(1, 6)), rng.normal(size=(3, 6))
        r, tr = aoa_forward(h_s, h_t)
        np.testing.assert_array_equal(tr.gamma, [1.0])
        np.testing.assert_allclose(r, h_s[0])

    def test_identical_rows(self, rng):
        row = rng.normal(size=6)
        r, tr = aoa_forward(np.stack([row, row]), rng.normal(size=(2, 6)))
        np.testing.assert_allclose(tr.gamma, [0.5, 0.5])

    def test_against_loops(self, rng):
        h_s, h_t = rng.normal(size=(4, 6)), rng.normal(size=(2, 6))
        r, tr = aoa_forward(h_s, h_t)
        r_ref, g_ref = loop_composition(h_s, h_t)
        np.testing.assert_allclose(tr.gamma, g_ref, rtol=0, atol=1e-12)
        np.testing.assert_allclose(r, r_ref, rtol=0, atol=1e-12)

    @given(
        arrays(np.float64, (5, 4), elements=st.floats(-50, 50)),
        arrays(np.float64, (3, 4), elements=st.floats(-50, 50)),
    )
    def test_simplex_invariants(self, h_s, h_t):
        _, tr = aoa_forward(h_s, h_t)
        assert np.all(np.abs(tr.alpha.sum(axis=0) - 1) <= 1e-6)
        assert np.all(np.abs(tr.beta.sum(axis=1) - 1) <= 1e-6)
        assert abs(tr.beta_bar.sum() - 1) <= 1e-6
        assert abs(tr.gamma.sum() - 1) <= 1e-6
        for t in (tr.alpha, tr.beta, tr.beta_bar, tr.gamma):
            assert np.all(t >= 0)

    def test_trace_json(self, rng):
        _, tr = aoa_forward(rng.normal(size=(3, 4)), rng.normal(size=(2, 4)))
        d = tr.to_json(["a", "b", "c"])
        assert set(d) == {"I", "alpha", "beta", "beta_bar", "gamma", "tokens"}
        assert len(d["gamma"]) == 3


def test_backward_matches_fd(rng):
    n, m, d = 5, 2, 6
    h_s, h_t = rng.normal(size=(n, d)), rng.normal(size=(m, d))
    probe = rng.normal(size=d)
    r, tr = aoa_forward(h_s, h_t)
    dh_s, dh_t = aoa_backward(probe, h_s, h_t, tr)

    def loss(theta):
        return float(probe @ aoa_forward(theta[: n * d].reshape(n, d), theta[n * d :].reshape(m, d))[0])

    numeric = finite_difference_gradient(loss, np.concatenate([h_s.ravel(), h_t.ravel()]), 1e-3, order=4)
    analytic = np.concatenate([dh_s.ravel(), dh_t.ravel()])
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    mask = scale > 1e-8
    assert (np.abs(analytic - numeric)[mask] / scale[mask]).max() <= 1e-4
