"""Layer normalisation and its Lipschitz constant."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class LayerNormParams:
    gamma1: np.ndarray
    gamma2: np.ndarray
    eps: float = 1e-5

    def __post_init__(self):
        g1 = np.array(self.gamma1, dtype=np.float64).ravel()
        g2 = np.array(self.gamma2, dtype=np.float64).ravel()
        if g1.shape != g2.shape:
            raise ValueError(f"gamma1 {g1.shape} and gamma2 {g2.shape} differ in width")
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        g1.setflags(write=False)
        g2.setflags(write=False)
        object.__setattr__(self, "gamma1", g1)
        object.__setattr__(self, "gamma2", g2)
        object.__setattr__(self, "eps", float(self.eps))

    @property
    def width(self) -> int:
        return self.gamma1.shape[0]


def ln_apply(z, params: LayerNormParams) -> np.ndarray:
    """Normalise the last axis of ``z`` and apply the affine map."""
    z = np.asarray(z, dtype=np.float64)
    mu = z.mean(axis=-1, keepdims=True)
    c = z - mu
    sigma = np.sqrt(np.mean(c * c, axis=-1, keepdims=True) + params.eps)
    return params.gamma1 * (c / sigma) + params.gamma2


def ln_jacobian(z, params: LayerNormParams) -> np.ndarray:
    """Jacobian ``D (I/sigma - c c^T / (sigma^3 m)) P`` at a single point ``z``."""
    z = np.asarray(z, dtype=np.float64)
    m = z.shape[-1]
    P = np.eye(m) - np.full((m, m), 1.0 / m)
    c = P @ z
    sigma = np.sqrt(c @ c / m + params.eps)
    inner = np.eye(m) / sigma - np.outer(c, c) / (sigma ** 3 * m)
    return params.gamma1[:, None] * (inner @ P)


def ln_lipschitz_interval(params: LayerNormParams, m=None):
    """Lower and upper bounds on the Lipschitz constant of ``ln_apply``.

    ``lo = ||gamma1||_inf / sqrt(eps) * sqrt(1 - 1/m)`` and
    ``hi = ||gamma1||_inf / sqrt(eps)``; requires ``m >= 2``.
    """
    m = params.width if m is None else int(m)
    if m < 2:
        raise ValueError(f"Lipschitz interval needs width m >= 2, got {m}")
    hi = float(np.max(np.abs(params.gamma1), initial=0.0) / np.sqrt(params.eps))
    return hi * np.sqrt(1.0 - 1.0 / m), hi


def _jacobians(Z, params: LayerNormParams) -> np.ndarray:
    """Stacked Jacobians at the rows of ``Z``, shape (N, m, m)."""
    m = Z.shape[-1]
    P = np.eye(m) - np.full((m, m), 1.0 / m)
    C = Z @ P
    sigma = np.sqrt(np.sum(C * C, axis=-1) / m + params.eps)
    inner = (np.eye(m)[None] / sigma[:, None, None]
             - C[:, :, None] * C[:, None, :] / (sigma ** 3 * m)[:, None, None])
    return params.gamma1[None, :, None] * (inner @ P)


def sampled_lipschitz(params: LayerNormParams, n_samples=10_000, seed=0, scale=None):
    """Spectral norms of the Jacobian at random points; the first sample is ``c = 0``.

    Points are drawn with per-sample spread spanning several orders of
    magnitude around ``sqrt(eps)`` so that both the flat and saturated
    regimes are visited.
    """
    rng = np.random.default_rng(seed)
    m = params.width
    k = n_samples - 1
    if scale is None:
        spread = np.sqrt(params.eps) * 10.0 ** rng.uniform(-3, 3, k)
    else:
        spread = np.full(k, float(scale))
    Z = spread[:, None] * rng.standard_normal((k, m)) + rng.standard_normal((k, 1))
    Z = np.vstack([np.full((1, m), 0.3), Z])
    return np.linalg.norm(_jacobians(Z, params), 2, axis=(1, 2))
