import numpy as np
import pytest

from nerpack.backend import (
    _resolve_backend,
    active_backend,
    available_backends,
    get_kernels,
)

HAS_NUMBA = "numba" in available_backends()

needs_numba = pytest.mark.skipif(not HAS_NUMBA, reason="numba not importable")


class TestSelection:
    def test_active_backend_is_available(self):
        assert active_backend() in available_backends()

    def test_resolve_default(self):
        assert _resolve_backend(None, True) == "numba"
        assert _resolve_backend(None, False) == "numpy"
        assert _resolve_backend("", False) == "numpy"

    def test_resolve_explicit(self):
        assert _resolve_backend("numpy", True) == "numpy"
        assert _resolve_backend("NUMBA", True) == "numba"

    def test_resolve_rejects_unknown(self):
        with pytest.raises(ValueError):
            _resolve_backend("cuda", True)

    def test_resolve_numba_unavailable(self):
        with pytest.raises(RuntimeError):
            _resolve_backend("numba", False)


class TestNumpyKernels:
    def setup_method(self):
        self.k = get_kernels("numpy")
        self.rng = np.random.default_rng(0)

    def test_masked_softmax_rows_normalize(self):
        scores = self.rng.normal(size=(2, 3, 8, 8))
        mask = self.rng.random((2, 8)) < 0.6
        mask[:, 0] = True
        probs = self.k.masked_softmax(scores, mask)
        assert np.allclose(probs.sum(axis=-1), 1.0)
        for b in range(2):
            assert (probs[b][..., ~mask[b]] == 0.0).all()

    def test_masked_softmax_grad_matches_finite_difference(self):
        scores = self.rng.normal(size=(1, 1, 4, 4))
        mask = np.array([[True, True, False, True]])
        dprobs = self.rng.normal(size=scores.shape)

        def value(s):
            return float(np.sum(self.k.masked_softmax(s, mask) * dprobs))

        grad = self.k.masked_softmax_grad(self.k.masked_softmax(scores, mask), dprobs)
        eps = 1e-6
        for idx in np.ndindex(scores.shape):
            if not mask[0, idx[-1]]:
                continue
            s1, s2 = scores.copy(), scores.copy()
            s1[idx] += eps
            s2[idx] -= eps
            fd = (value(s1) - value(s2)) / (2 * eps)
            assert abs(fd - grad[idx]) < 1e-6

    def test_layer_norm_normalizes(self):
        x = self.rng.normal(2.0, 3.0, size=(10, 16))
        y, xhat, rstd = self.k.layer_norm(x, np.ones(16), np.zeros(16))
        assert np.allclose(y.mean(axis=1), 0.0, atol=1e-12)
        assert np.allclose(y.std(axis=1), 1.0, atol=1e-3)

    def test_gelu_values(self):
        x = np.array([0.0, 1.0, -1.0])
        y = self.k.gelu(x)
        assert y[0] == 0.0
        assert 0.8 < y[1] < 0.9
        assert -0.2 < y[2] < -0.1

    def test_adamw_zero_lr_keeps_params(self):
        p = self.rng.normal(size=50)
        before = p.copy()
        self.k.adamw_step(p, self.rng.normal(size=50), np.zeros(50), np.zeros(50),
                          0.0, 0.9, 0.999, 1e-8, 0.01, 0.1, 0.001)
        assert np.array_equal(p, before)

    def test_adamw_against_reference(self):
        p = self.rng.normal(size=20)
        g = self.rng.normal(size=20)
        m = np.zeros(20)
        v = np.zeros(20)
        lr, b1, b2, eps, wd = 1e-3, 0.9, 0.999, 1e-8, 0.01
        expect_m = (1 - b1) * g
        expect_v = (1 - b2) * g * g
        expect = p - lr * ((expect_m / (1 - b1)) / (np.sqrt(expect_v / (1 - b2)) + eps) + wd * p)
        self.k.adamw_step(p, g, m, v, lr, b1, b2, eps, wd, 1 - b1, 1 - b2)
        assert np.allclose(p, expect, rtol=1e-14)


@needs_numba
class TestBackendEquivalence:
    def setup_method(self):
        self.np_k = get_kernels("numpy")
        self.nb_k = get_kernels("numba")
        self.rng = np.random.default_rng(1)

    def test_masked_softmax(self):
        scores = self.rng.normal(size=(3, 4, 12, 12))
        mask = self.rng.random((3, 12)) < 0.7
        mask[:, 0] = True
        a = self.np_k.masked_softmax(scores, mask)
        b = self.nb_k.masked_softmax(scores, mask)
        assert np.allclose(a, b, rtol=1e-13, atol=1e-15)
        dp = self.rng.normal(size=a.shape)
        assert np.allclose(
            self.np_k.masked_softmax_grad(a, dp),
            self.nb_k.masked_softmax_grad(b, dp),
            rtol=1e-13, atol=1e-15,
        )

    def test_layer_norm(self):
        x = self.rng.normal(size=(30, 24))
        g = self.rng.normal(size=24)
        b = self.rng.normal(size=24)
        ya, xa, ra = self.np_k.layer_norm(x, g, b)
        yb, xb, rb = self.nb_k.layer_norm(x, g, b)
        assert np.allclose(ya, yb, rtol=1e-13)
        dy = self.rng.normal(size=x.shape)
        for u, v in zip(self.np_k.layer_norm_grad(dy, xa, ra, g),
                        self.nb_k.layer_norm_grad(dy, xb, rb, g)):
            assert np.allclose(u, v, rtol=1e-12, atol=1e-14)

    def test_gelu(self):
        x = self.rng.normal(size=(7, 11))
        assert np.allclose(self.np_k.gelu(x), self.nb_k.gelu(x), rtol=1e-14)
        dy = self.rng.normal(size=x.shape)
        assert np.allclose(self.np_k.gelu_grad(x, dy), self.nb_k.gelu_grad(x, dy), rtol=1e-13)

    def test_adamw(self):
        p1 = self.rng.normal(size=64)
        g = self.rng.normal(size=64)
        p2 = p1.copy()
        m1, v1 = np.zeros(64), np.zeros(64)
        m2, v2 = np.zeros(64), np.zeros(64)
        for t in range(1, 4):
            bc1, bc2 = 1 - 0.9 ** t, 1 - 0.999 ** t
            self.np_k.adamw_step(p1, g, m1, v1, 1e-3, 0.9, 0.999, 1e-8, 0.01, bc1, bc2)
            self.nb_k.adamw_step(p2, g, m2, v2, 1e-3, 0.9, 0.999, 1e-8, 0.01, bc1, bc2)
        assert np.allclose(p1, p2, rtol=1e-13)
