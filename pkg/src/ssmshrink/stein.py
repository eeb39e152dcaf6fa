"""Closed-form solvers for Stein equations with diagonal coefficients.

Every equation is written as ``X = diag(a) X diag(b) + R`` and solved
entrywise as ``X_ij = R_ij / (1 - a_i b_j)``.  The finite-horizon variant
``X = diag(a) X diag(b) + R - diag(a)^L R diag(b)^L`` is the truncated
series ``sum_{t<L} diag(a)^t R diag(b)^t``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NEAR_SINGULAR_MARGIN = 1e-6


class NearSingularError(ArithmeticError):
    def __init__(self, i, j, product):
        super().__init__(
            f"|a[{i}] * b[{j}]| = {abs(product):.12g} is within the stability "
            f"margin of 1; the Stein equation is near-singular")
        self.index = (i, j)


def _products(a, b, margin):
    a = np.asarray(a, dtype=np.complex128).ravel()
    b = np.asarray(b, dtype=np.complex128).ravel()
    ab = a[:, None] * b[None, :]
    bad = np.abs(ab) >= 1.0 - margin
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise NearSingularError(int(i), int(j), ab[i, j])
    return ab


def solve_diag_stein(a, b, rhs, margin=NEAR_SINGULAR_MARGIN) -> np.ndarray:
    """Solve ``X = diag(a) X diag(b) + rhs``."""
    rhs = np.asarray(rhs, dtype=np.complex128)
    ab = _products(a, b, margin)
    if rhs.shape != ab.shape:
        raise ValueError(f"rhs must have shape {ab.shape}, got {rhs.shape}")
    return rhs / (1.0 - ab)


def finite_stein(a, b, rhs, L, margin=NEAR_SINGULAR_MARGIN) -> np.ndarray:
    """Solve ``X = diag(a) X diag(b) + rhs - diag(a)^L rhs diag(b)^L``."""
    rhs = np.asarray(rhs, dtype=np.complex128)
    ab = _products(a, b, margin)
    if rhs.shape != ab.shape:
        raise ValueError(f"rhs must have shape {ab.shape}, got {rhs.shape}")
    a = np.asarray(a, dtype=np.complex128).ravel()
    b = np.asarray(b, dtype=np.complex128).ravel()
    # a^L b^L instead of (ab)^L keeps the correction term bit-compatible with
    # the elementwise powers used elsewhere
    abL = (a ** L)[:, None] * (b ** L)[None, :]
    return rhs * (1.0 - abL) / (1.0 - ab)


def stein_residual(a, b, rhs, X, L=None) -> float:
    """Relative residual of a (finite-horizon when ``L`` is given) solution."""
    a = np.asarray(a, dtype=np.complex128).ravel()
    b = np.asarray(b, dtype=np.complex128).ravel()
    R = np.asarray(rhs, dtype=np.complex128)
    if L is not None:
        R = R - (a ** L)[:, None] * R * (b ** L)[None, :]
    res = X - a[:, None] * X * b[None, :] - R
    scale = max(np.linalg.norm(R), np.linalg.norm(X), 1e-300)
    return float(np.linalg.norm(res) / scale)


@dataclass(frozen=True)
class GramianSet:
    """Solutions of every Stein equation entering the gradient of the h2 error.

    Shapes: ``P_L`` n x n; ``Phat_L``, ``Yhat_L``, ``Zhat_L``, ``Zbar_r_L``,
    ``Phat_inf`` r x r; all others n x r.  ``S`` and ``S_hat`` are the
    diagonals of ``A^L`` and ``Ahat^L``.
    """

    P_L: np.ndarray
    Ptilde_L: np.ndarray
    Phat_L: np.ndarray
    Ytilde_L: np.ndarray
    Yhat_L: np.ndarray
    Ztilde_L: np.ndarray
    Zhat_L: np.ndarray
    Zbar_L: np.ndarray
    Zbar_r_L: np.ndarray
    Ptilde_inf: np.ndarray
    Phat_inf: np.ndarray
    S: np.ndarray
    S_hat: np.ndarray


def finite_gramians(sys, rsys, L):
    """``(P_L, Ptilde_L, Phat_L)`` for a full/reduced pair."""
    lam, lh = sys.lam, rsys.lam
    B, Bh = sys.B, rsys.B
    P = finite_stein(lam, lam.conj(), B @ B.conj().T, L)
    Pt = finite_stein(lam, lh.conj(), B @ Bh.conj().T, L)
    Ph = finite_stein(lh, lh.conj(), Bh @ Bh.conj().T, L)
    return P, Pt, Ph


def infinite_gramians(sys, rsys):
    """``(Ptilde, Phat)``: the uncorrected cross and reduced Gramians."""
    lh = rsys.lam
    Pt = solve_diag_stein(sys.lam, lh.conj(), sys.B @ rsys.B.conj().T)
    Ph = solve_diag_stein(lh, lh.conj(), rsys.B @ rsys.B.conj().T)
    return Pt, Ph


def gramian_set(sys, rsys, L) -> GramianSet:
    lam, lh = sys.lam, rsys.lam
    M, Mh = sys.M, rsys.M
    C, Ch = sys.C, rsys.C

    P, Pt, Ph = finite_gramians(sys, rsys, L)

    Yt = finite_stein(lam.conj(), lh, C.conj().T @ Ch, L)
    Yh = finite_stein(lh.conj(), lh, Ch.conj().T @ Ch, L)

    rhs_t = (M @ Pt @ Mh).sum(axis=0)
    rhs_h = (Mh @ Ph @ Mh).sum(axis=0)
    Zt = finite_stein(lam.conj(), lh, rhs_t, L)
    Zh = finite_stein(lh.conj(), lh, rhs_h, L)
    Zb = solve_diag_stein(lam.conj(), lh, rhs_t)
    Zbr = solve_diag_stein(lh.conj(), lh, rhs_h)

    Pt_inf, Ph_inf = infinite_gramians(sys, rsys)
    return GramianSet(P, Pt, Ph, Yt, Yh, Zt, Zh, Zb, Zbr, Pt_inf, Ph_inf,
                      lam ** L, lh ** L)


_KINDS = ("P_L", "Ptilde_L", "Phat_L", "Ytilde_L", "Yhat_L", "Ztilde_L",
          "Zhat_L", "Zbar_L", "Zbar_r_L", "Ptilde_inf", "Phat_inf")


def bruteforce_gramian_sum(sys, rsys, L, kind, tail_tol=1e-18):
    """Sum the defining series of a Gramian with dense matrix powers.

    Finite-horizon kinds sum ``t = 0 .. L-1``; the ``*_inf``/``Zbar*`` kinds
    sum until the terms fall below ``tail_tol`` relative to the partial sum.
    The ``Z*`` kinds use closed-form ``Ptilde_L``/``Phat_L`` series computed
    here as well, so no closed-form solver is consulted.
    """
    if kind not in _KINDS:
        raise ValueError(f"unknown Gramian kind {kind!r}; expected one of {_KINDS}")
    A = np.diag(sys.lam)
    Ah = np.diag(rsys.lam)
    B, Bh, C, Ch = sys.B, rsys.B, sys.C, rsys.C
    M, Mh = sys.M, rsys.M

    def series(left, right, R, T):
        X = np.zeros_like(R)
        Lp = np.eye(left.shape[0], dtype=complex)
        Rp = np.eye(right.shape[0], dtype=complex)
        for t in range(T):
            term = Lp @ R @ Rp
            X = X + term
            if T == _INF and np.linalg.norm(term) <= tail_tol * max(np.linalg.norm(X), 1e-300):
                break
            Lp = Lp @ left
            Rp = Rp @ right
        return X

    def P_pair(Bl, Al, Br, Ar):
        return series(Al, Ar.conj().T, Bl @ Br.conj().T, L)

    if kind == "P_L":
        return P_pair(B, A, B, A)
    if kind == "Ptilde_L":
        return P_pair(B, A, Bh, Ah)
    if kind == "Phat_L":
        return P_pair(Bh, Ah, Bh, Ah)
    if kind == "Ptilde_inf":
        return series(A, Ah.conj().T, B @ Bh.conj().T, _INF)
    if kind == "Phat_inf":
        return series(Ah, Ah.conj().T, Bh @ Bh.conj().T, _INF)
    if kind == "Ytilde_L":
        return series(A.conj().T, Ah, C.conj().T @ Ch, L)
    if kind == "Yhat_L":
        return series(Ah.conj().T, Ah, Ch.conj().T @ Ch, L)
    Pt = P_pair(B, A, Bh, Ah)
    Ph = P_pair(Bh, Ah, Bh, Ah)
    if kind in ("Ztilde_L", "Zbar_L"):
        R = sum(M[j] @ Pt @ Mh[j] for j in range(M.shape[0]))
        return series(A.conj().T, Ah, R, L if kind == "Ztilde_L" else _INF)
    R = sum(Mh[j] @ Ph @ Mh[j] for j in range(Mh.shape[0]))
    return series(Ah.conj().T, Ah, R, L if kind == "Zhat_L" else _INF)


_INF = 10 ** 9
