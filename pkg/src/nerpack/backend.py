"""Hot numeric kernels with two interchangeable implementations.

The tagger's matrix products go through BLAS either way; what lives here
are the bandwidth-bound elementwise and row-wise operations where a fused
jitted loop beats a chain of numpy temporaries: masked softmax, layer
normalization, GELU, and the AdamW update.

Backend selection: set ``NERPACK_BACKEND=numpy`` or ``NERPACK_BACKEND=numba``
in the environment before import.  The default is numba when importable,
falling back to pure numpy otherwise.  ``get_kernels(name)`` gives direct
access to either implementation (used by the equivalence tests and the
benchmark in benchmarks/bench_backends.py).
"""

from __future__ import annotations

import math
import os
from types import SimpleNamespace

import numpy as np

__all__ = ["active_backend", "available_backends", "get_kernels", "kernels"]

_ENV_VAR = "NERPACK_BACKEND"

# GELU tanh approximation constants
_G_C = math.sqrt(2.0 / math.pi)
_G_A = 0.044715


# ---------------------------------------------------------------------------
# Pure numpy implementations

def _np_masked_softmax(scores: np.ndarray, key_mask: np.ndarray) -> np.ndarray:
    """Row softmax over the last axis, restricted to unmasked key columns.

    scores: (B, H, L, L) float64; key_mask: (B, L) bool.  Masked columns
    come out exactly zero.  Rows are assumed to have at least one unmasked
    key (every window contains BOS).
    """
    gate = key_mask[:, None, None, :]
    s = np.where(gate, scores, -np.inf)
    m = np.max(s, axis=-1, keepdims=True)
    e = np.exp(s - m)
    e = np.where(gate, e, 0.0)
    return e / np.sum(e, axis=-1, keepdims=True)


def _np_masked_softmax_grad(probs: np.ndarray, dprobs: np.ndarray) -> np.ndarray:
    inner = np.sum(dprobs * probs, axis=-1, keepdims=True)
    return probs * (dprobs - inner)


def _np_layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray):
    """Normalize rows of (N, D); returns (y, xhat, rstd) for the backward pass."""
    mean = np.mean(x, axis=-1, keepdims=True)
    var = np.mean((x - mean) ** 2, axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + 1e-5)
    xhat = (x - mean) * rstd
    return xhat * gamma + beta, xhat, rstd[..., 0]


def _np_layer_norm_grad(dy: np.ndarray, xhat: np.ndarray, rstd: np.ndarray, gamma: np.ndarray):
    dxhat = dy * gamma
    m1 = np.mean(dxhat, axis=-1, keepdims=True)
    m2 = np.mean(dxhat * xhat, axis=-1, keepdims=True)
    dx = (dxhat - m1 - xhat * m2) * rstd[..., None]
    dgamma = np.sum(dy * xhat, axis=0)
    dbeta = np.sum(dy, axis=0)
    return dx, dgamma, dbeta


def _np_gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(_G_C * (x + _G_A * x ** 3)))


def _np_gelu_grad(x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    u = _G_C * (x + _G_A * x ** 3)
    t = np.tanh(u)
    du = _G_C * (1.0 + 3.0 * _G_A * x ** 2)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t ** 2) * du)


def _np_adamw_step(p, g, m, v, lr, beta1, beta2, eps, weight_decay, bc1, bc2):
    """In-place decoupled AdamW update on flat float64 views.

    bc1/bc2 are the bias corrections 1 - beta^t for the current step.
    """
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    update = (m / bc1) / (np.sqrt(v / bc2) + eps)
    p -= lr * (update + weight_decay * p)


_NUMPY = SimpleNamespace(
    name="numpy",
    masked_softmax=_np_masked_softmax,
    masked_softmax_grad=_np_masked_softmax_grad,
    layer_norm=_np_layer_norm,
    layer_norm_grad=_np_layer_norm_grad,
    gelu=_np_gelu,
    gelu_grad=_np_gelu_grad,
    adamw_step=_np_adamw_step,
)


# ---------------------------------------------------------------------------
# Numba implementations

try:
    from numba import njit

    _HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAS_NUMBA = False

if _HAS_NUMBA:

    @njit(cache=True)
    def _nb_masked_softmax(scores, key_mask):
        B, H, L, _ = scores.shape
        out = np.empty_like(scores)
        for b in range(B):
            for h in range(H):
                for i in range(L):
                    row = scores[b, h, i]
                    hi = -np.inf
                    for j in range(L):
                        if key_mask[b, j] and row[j] > hi:
                            hi = row[j]
                    total = 0.0
                    for j in range(L):
                        if key_mask[b, j]:
                            e = np.exp(row[j] - hi)
                            out[b, h, i, j] = e
                            total += e
                        else:
                            out[b, h, i, j] = 0.0
                    inv = 1.0 / total
                    for j in range(L):
                        out[b, h, i, j] *= inv
        return out

    @njit(cache=True)
    def _nb_masked_softmax_grad(probs, dprobs):
        B, H, L, _ = probs.shape
        out = np.empty_like(probs)
        for b in range(B):
            for h in range(H):
                for i in range(L):
                    inner = 0.0
                    for j in range(L):
                        inner += dprobs[b, h, i, j] * probs[b, h, i, j]
                    for j in range(L):
                        out[b, h, i, j] = probs[b, h, i, j] * (dprobs[b, h, i, j] - inner)
        return out

    @njit(cache=True)
    def _nb_layer_norm(x, gamma, beta):
        N, D = x.shape
        y = np.empty_like(x)
        xhat = np.empty_like(x)
        rstd = np.empty(N, dtype=np.float64)
        for n in range(N):
            mean = 0.0
            for d in range(D):
                mean += x[n, d]
            mean /= D
            var = 0.0
            for d in range(D):
                diff = x[n, d] - mean
                var += diff * diff
            var /= D
            r = 1.0 / np.sqrt(var + 1e-5)
            rstd[n] = r
            for d in range(D):
                xh = (x[n, d] - mean) * r
                xhat[n, d] = xh
                y[n, d] = xh * gamma[d] + beta[d]
        return y, xhat, rstd

    @njit(cache=True)
    def _nb_layer_norm_grad(dy, xhat, rstd, gamma):
        N, D = dy.shape
        dx = np.empty_like(dy)
        dgamma = np.zeros(D, dtype=np.float64)
        dbeta = np.zeros(D, dtype=np.float64)
        for n in range(N):
            m1 = 0.0
            m2 = 0.0
            for d in range(D):
                dxh = dy[n, d] * gamma[d]
                m1 += dxh
                m2 += dxh * xhat[n, d]
            m1 /= D
            m2 /= D
            r = rstd[n]
            for d in range(D):
                dxh = dy[n, d] * gamma[d]
                dx[n, d] = (dxh - m1 - xhat[n, d] * m2) * r
                dgamma[d] += dy[n, d] * xhat[n, d]
                dbeta[d] += dy[n, d]
        return dx, dgamma, dbeta

    @njit(cache=True)
    def _nb_gelu(x):
        n = x.shape[0]
        y = np.empty_like(x)
        for i in range(n):
            xi = x[i]
            y[i] = 0.5 * xi * (1.0 + np.tanh(_G_C * (xi + _G_A * xi ** 3)))
        return y

    @njit(cache=True)
    def _nb_gelu_grad(x, dy):
        n = x.shape[0]
        out = np.empty_like(x)
        for i in range(n):
            xi = x[i]
            u = _G_C * (xi + _G_A * xi ** 3)
            t = np.tanh(u)
            du = _G_C * (1.0 + 3.0 * _G_A * xi * xi)
            out[i] = dy[i] * (0.5 * (1.0 + t) + 0.5 * xi * (1.0 - t * t) * du)
        return out

    @njit(cache=True)
    def _nb_adamw_step(p, g, m, v, lr, beta1, beta2, eps, weight_decay, bc1, bc2):
        n = p.shape[0]
        for i in range(n):
            gi = g[i]
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi
            v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi
            update = (m[i] / bc1) / (np.sqrt(v[i] / bc2) + eps)
            p[i] -= lr * (update + weight_decay * p[i])

    def _gelu_any_shape(x):
        flat = np.ascontiguousarray(x).reshape(-1)
        return _nb_gelu(flat).reshape(x.shape)

    def _gelu_grad_any_shape(x, dy):
        fx = np.ascontiguousarray(x).reshape(-1)
        fdy = np.ascontiguousarray(dy).reshape(-1)
        return _nb_gelu_grad(fx, fdy).reshape(x.shape)

    _NUMBA = SimpleNamespace(
        name="numba",
        masked_softmax=lambda s, k: _nb_masked_softmax(
            np.ascontiguousarray(s), np.ascontiguousarray(k)
        ),
        masked_softmax_grad=lambda p, dp: _nb_masked_softmax_grad(
            np.ascontiguousarray(p), np.ascontiguousarray(dp)
        ),
        layer_norm=lambda x, g, b: _nb_layer_norm(np.ascontiguousarray(x), g, b),
        layer_norm_grad=lambda dy, xh, r, g: _nb_layer_norm_grad(
            np.ascontiguousarray(dy), np.ascontiguousarray(xh), r, g
        ),
        gelu=_gelu_any_shape,
        gelu_grad=_gelu_grad_any_shape,
        adamw_step=_nb_adamw_step,
    )
else:
    _NUMBA = None


# ---------------------------------------------------------------------------
# Selection

def available_backends() -> tuple[str, ...]:
    return ("numpy", "numba") if _HAS_NUMBA else ("numpy",)


def get_kernels(name: str) -> SimpleNamespace:
    if name == "numpy":
        return _NUMPY
    if name == "numba":
        if not _HAS_NUMBA:
            raise RuntimeError("numba backend requested but numba is not importable")
        return _NUMBA
    raise ValueError(f"unknown backend {name!r}")


def _resolve_backend(env_value: str | None, numba_available: bool) -> str:
    if env_value:
        name = env_value.strip().lower()
        if name not in ("numpy", "numba"):
            raise ValueError(f"{_ENV_VAR} must be 'numpy' or 'numba', got {env_value!r}")
        if name == "numba" and not numba_available:
            raise RuntimeError(f"{_ENV_VAR}=numba but numba is not importable")
        return name
    return "numba" if numba_available else "numpy"


kernels = get_kernels(_resolve_backend(os.environ.get(_ENV_VAR), _HAS_NUMBA))


def active_backend() -> str:
    return kernels.name
