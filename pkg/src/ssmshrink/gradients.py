"""Gradients of the finite-horizon h2 objective with respect to a reduced LQO system.

Gradients follow the convention ``df = Re tr(G^* dtheta)`` for complex
parameters, i.e. ``G = df/dRe(theta) + 1j * df/dIm(theta)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lqo import LqoSystem, ShapeError, h2l_error_sq, h2l_norm_sq
from .stein import gramian_set

BLOCKS = ("lam", "B", "C", "U")


@dataclass
class GradientSet:
    """Per-layer gradient; shapes match the reduced system's ``lam, B, C, U``."""

    lam: np.ndarray
    B: np.ndarray
    C: np.ndarray
    U: np.ndarray

    def blocks(self):
        return {name: getattr(self, name) for name in BLOCKS}

    def scaled(self, factor) -> "GradientSet":
        return GradientSet(*(factor * getattr(self, name) for name in BLOCKS))

    def sq_norms(self):
        return {name: float(np.sum(np.abs(getattr(self, name)) ** 2))
                for name in BLOCKS}

    @classmethod
    def zeros_like(cls, rsys: LqoSystem) -> "GradientSet":
        return cls(np.zeros_like(rsys.lam), np.zeros_like(rsys.B),
                   np.zeros_like(rsys.C), np.zeros_like(rsys.U))


@dataclass
class PhiGradient:
    """Raw gradient of ``phi = ||S - Shat||^2`` before the ``M -> U`` chain rule."""

    A: np.ndarray       # full r x r gradient with respect to Ahat
    B: np.ndarray
    C: np.ndarray
    M: np.ndarray       # (p, r, r), one Hermitian matrix per output


def t_star_multipliers(lam_hat, L, close_tol=1e-3):
    """Entrywise weights ``w_ij = sum_{k<L} conj(l_i)^k conj(l_j)^(L-1-k)``.

    Uses ``(a^L - b^L) / (a - b)`` when ``a`` and ``b`` are well separated,
    ``L a^(L-1)`` when they coincide and the literal sum for nearby pairs.
    """
    a = np.conj(np.asarray(lam_hat, dtype=np.complex128))
    ai, bj = a[:, None], a[None, :]
    diff = ai - bj
    scale = np.maximum(np.maximum(np.abs(ai), np.abs(bj)), 1e-300)
    close = np.abs(diff) <= close_tol * scale
    aL = a ** L
    with np.errstate(divide="ignore", invalid="ignore"):
        w = (aL[:, None] - aL[None, :]) / diff
    if close.any():
        ii, jj = np.nonzero(close)
        x, y = a[ii], a[jj]
        acc = np.zeros(ii.shape, dtype=np.complex128)
        xp = np.ones_like(x)
        for k in range(L):
            acc += xp * y ** (L - 1 - k)
            xp = xp * x
        w[ii, jj] = acc
    same = diff == 0
    w[same] = np.broadcast_to(L * a[:, None] ** (L - 1), w.shape)[same]
    return w


def t_star_diag(lam_hat, X, L):
    """Apply ``T*(X) = sum_{j<L} (Ahat^*)^j X (Ahat^*)^(L-1-j)`` for diagonal ``Ahat``.

    A square ``X`` is indexed by reduced modes on both sides.  For a ``p x r``
    ``X`` only the columns are indexed by modes; the left factor is then the
    identity and column ``j`` is scaled by ``sum_{k<L} conj(l_j)^k``.
    """
    X = np.asarray(X, dtype=np.complex128)
    r = len(lam_hat)
    if X.shape == (r, r):
        return t_star_multipliers(lam_hat, L) * X
    if X.ndim == 2 and X.shape[1] == r:
        a = np.conj(np.asarray(lam_hat, dtype=np.complex128))
        return X * ((1.0 - a ** L) / (1.0 - a))[None, :]
    raise ShapeError(f"X must be ({r}, {r}) or (p, {r}), got {X.shape}")


def grad_u_from_m(U, dM):
    """Chain rule through ``M = U^* U``: ``grad_U = U (dM + dM^*)``."""
    U = np.asarray(U)
    dM = np.asarray(dM)
    return U @ (dM + np.swapaxes(dM, -1, -2).conj())


def grad_phi(sys: LqoSystem, rsys: LqoSystem, L, flip_c_cross=False) -> PhiGradient:
    """Gradient of ``phi(rsys) = ||sys - rsys||^2_{h2,L}``.

    ``flip_c_cross`` negates the cross term of the ``C`` gradient; it exists
    only so the finite-difference validator can be shown to catch it.
    """
    if sys.m != rsys.m or sys.p != rsys.p:
        raise ShapeError("full and reduced systems differ in input/output width")
    g = gramian_set(sys, rsys, L)
    M, Mh = sys.M, rsys.M
    B, Bh, C, Ch = sys.B, rsys.B, sys.C, rsys.C

    # weights of dPhat_L and dPtilde_L in dphi
    Y0 = Ch.conj().T @ Ch + 2.0 * (Mh @ g.Phat_L @ Mh).sum(axis=0)
    W = Ch.conj().T @ C + 2.0 * (Mh @ g.Ptilde_L.conj().T @ M).sum(axis=0)
    Qt = (g.Ytilde_L + 2.0 * g.Ztilde_L).conj().T   # sum_t Ahat*^t W A^t
    Qh = g.Yhat_L + 2.0 * g.Zhat_L                   # sum_t Ahat*^t Y0 Ahat^t

    dB = 2.0 * (Qh @ Bh - Qt @ B)

    cross = C @ g.Ptilde_L
    dC = 2.0 * (Ch @ g.Phat_L + (cross if flip_c_cross else -cross))

    PtL = g.Ptilde_L
    dM = 2.0 * (g.Phat_L[None] @ Mh @ g.Phat_L[None]
                - np.swapaxes(PtL.conj(), 0, 1)[None] @ M @ PtL[None])

    # infinite-horizon part minus the contribution of pairs beyond the horizon
    V = (Y0 * g.S_hat[None, :]) @ g.Phat_inf - (W * g.S[None, :]) @ g.Ptilde_inf
    dA = 2.0 * ((Qh * rsys.lam[None, :]) @ g.Phat_inf
                - (Qt * sys.lam[None, :]) @ g.Ptilde_inf
                - t_star_diag(rsys.lam, V, L))
    return PhiGradient(dA, dB, dC, dM)


def grad_phi_params(sys, rsys, L, flip_c_cross=False) -> GradientSet:
    """``grad_phi`` mapped onto the ``(lam, B, C, U)`` parametrisation."""
    raw = grad_phi(sys, rsys, L, flip_c_cross)
    return GradientSet(np.diag(raw.A).copy(), raw.B, raw.C,
                       grad_u_from_m(rsys.U, raw.M))


def _check_layers(fulls, roms, gains=None):
    if len(fulls) != len(roms):
        raise ShapeError(f"{len(fulls)} full layers but {len(roms)} reduced layers")
    if gains is not None and len(gains) != len(fulls):
        raise ShapeError(f"{len(gains)} gains for {len(fulls)} layers")


def layer_errors(fulls, roms, L):
    """Per-layer ``phi_i = ||S_i - Shat_i||^2_{h2,L}``."""
    _check_layers(fulls, roms)
    return [h2l_error_sq(s, r, L) for s, r in zip(fulls, roms)]


def objective_f(fulls, roms, gains, L) -> float:
    """``f = sum_i G_i ||S_i - Shat_i||_{h2,L}``."""
    _check_layers(fulls, roms, gains)
    return float(sum(G * np.sqrt(phi)
                     for G, phi in zip(gains, layer_errors(fulls, roms, L))))


def _phi_scale(sys, rsys, L):
    return h2l_norm_sq(sys, L) + h2l_norm_sq(rsys, L)


def grad_objective(fulls, roms, gains, L, flip_c_cross=False, phis=None):
    """Per-layer ``GradientSet`` of ``objective_f``.

    Layers whose squared error is below ``1e-14`` times the combined squared
    norms sit at their minimum, where ``sqrt`` is not differentiable; their
    gradient is reported as zero.
    """
    _check_layers(fulls, roms, gains)
    if phis is None:
        phis = layer_errors(fulls, roms, L)
    grads = []
    for sys, rsys, G, phi in zip(fulls, roms, gains, phis):
        if phi <= 1e-14 * max(_phi_scale(sys, rsys, L), 1e-300):
            grads.append(GradientSet.zeros_like(rsys))
            continue
        K = 2.0 * np.sqrt(phi)
        grads.append(grad_phi_params(sys, rsys, L, flip_c_cross).scaled(G / K))
    return grads


def _perturbed(rsys, name, idx, delta):
    arr = np.array(getattr(rsys, name))
    arr[idx] += delta
    return rsys.replace(**{name: arr})


def fd_gradient(func, rsys, name, step):
    """Central-difference gradient of ``func(rsys)`` over one parameter block."""
    arr = getattr(rsys, name)
    G = np.zeros(arr.shape, dtype=np.complex128)
    for idx in np.ndindex(arr.shape):
        for unit in (1.0, 1j):
            fp = func(_perturbed(rsys, name, idx, step * unit))
            fm = func(_perturbed(rsys, name, idx, -step * unit))
            G[idx] += unit * (fp - fm) / (2.0 * step)
    return G


def relative_error(analytic, reference):
    scale = np.max(np.abs(reference)) if np.size(reference) else 0.0
    err = np.max(np.abs(analytic - reference)) if np.size(reference) else 0.0
    if scale == 0.0:
        return float(err)
    return float(err / scale)


def finite_difference_check(fulls, roms, L, step=1e-6, gains=None,
                            flip_c_cross=False):
    """Compare ``grad_objective`` with central differences of ``objective_f``.

    Returns ``{block: [max relative error per layer]}``.  At a zero gradient
    the absolute error is reported instead.
    """
    if not 1e-8 <= step <= 1e-4:
        raise ValueError(f"step must lie in [1e-8, 1e-4], got {step}")
    gains = [1.0] * len(fulls) if gains is None else list(gains)
    grads = grad_objective(fulls, roms, gains, L, flip_c_cross)
    report = {name: [] for name in BLOCKS}
    for i, (sys, rsys, G) in enumerate(zip(fulls, roms, gains)):
        def layer_f(candidate, sys=sys, G=G):
            return G * np.sqrt(h2l_error_sq(sys, candidate, L))
        for name in BLOCKS:
            fd = fd_gradient(layer_f, rsys, name, step)
            report[name].append(relative_error(getattr(grads[i], name), fd))
    return report
