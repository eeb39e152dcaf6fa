"""Discrete-time complex linear-quadratic-output (LQO) systems.

A system with diagonal state matrix ``A = diag(lam)`` evolves as::

    x_k = A x_{k-1} + B u_k,          x_{-1} = 0
    y_k = C x_k + M (x_k (x) conj(x_k))

where row ``j`` of ``M`` is ``vec(M_j)^T`` (column-major vec) and
``M_j = U_j^* U_j``.  With this ordering the quadratic term of output ``j``
is the real number ``x_k^* M_j x_k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .stein import finite_stein

STABILITY_MARGIN = 1e-6


class ShapeError(ValueError):
    pass


class StabilityError(ValueError):
    pass


def _as_complex(a, ndim, name):
    arr = np.array(a, dtype=np.complex128)
    if arr.ndim != ndim:
        raise ShapeError(f"{name} must be {ndim}-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LqoSystem:
    """One LQO layer ``(lam, B, C, U)``.

    ``U`` has shape ``(p, c, n)``; ``U[j]`` is the factor of ``M_j``.
    Construction enforces ``|lam_i| <= 1 - margin``.
    """

    lam: np.ndarray
    B: np.ndarray
    C: np.ndarray
    U: np.ndarray
    margin: float = field(default=STABILITY_MARGIN, repr=False)

    def __post_init__(self):
        lam = _as_complex(self.lam, 1, "lam")
        B = _as_complex(self.B, 2, "B")
        C = _as_complex(self.C, 2, "C")
        U = _as_complex(self.U, 3, "U")
        n = lam.shape[0]
        if n < 1:
            raise ShapeError("state dimension must be positive")
        if B.shape[0] != n or B.shape[1] < 1:
            raise ShapeError(f"B must be ({n}, m), got {B.shape}")
        if C.shape[1] != n or C.shape[0] < 1:
            raise ShapeError(f"C must be (p, {n}), got {C.shape}")
        if U.shape[0] != C.shape[0] or U.shape[2] != n or U.shape[1] < 1:
            raise ShapeError(f"U must be ({C.shape[0]}, c, {n}), got {U.shape}")
        radius = np.abs(lam).max()
        if radius > 1.0 - self.margin:
            raise StabilityError(
                f"spectral radius {radius:.12g} exceeds 1 - {self.margin:g}")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "U", U)

    @property
    def n(self) -> int:
        return self.lam.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def c(self) -> int:
        return self.U.shape[1]

    @property
    def M(self) -> np.ndarray:
        """Stack of Hermitian PSD matrices ``M_j = U_j^* U_j``, shape (p, n, n)."""
        return np.einsum("jci,jck->jik", self.U.conj(), self.U)

    def replace(self, **changes) -> "LqoSystem":
        fields = dict(lam=self.lam, B=self.B, C=self.C, U=self.U, margin=self.margin)
        fields.update(changes)
        return LqoSystem(**fields)

    def conj(self) -> "LqoSystem":
        return self.replace(lam=self.lam.conj(), B=self.B.conj(),
                            C=self.C.conj(), U=self.U.conj())

    def restrict(self, modes) -> "LqoSystem":
        """Keep only the state coordinates listed in ``modes``."""
        modes = np.asarray(modes, dtype=int)
        return self.replace(lam=self.lam[modes], B=self.B[modes],
                            C=self.C[:, modes], U=self.U[:, :, modes])


def zero_system(n, m, p, c=1) -> LqoSystem:
    return LqoSystem(np.zeros(n), np.zeros((n, m)), np.zeros((p, n)),
                     np.zeros((p, c, n)))


def _check_horizon(L):
    if int(L) != L or L < 1:
        raise ValueError(f"horizon must be a positive integer, got {L!r}")
    return int(L)


def _as_signal(u, m, L):
    u = np.asarray(u)
    if u.ndim == 1 and m == 1:
        u = u[:, None]
    if u.ndim != 2 or u.shape[1] != m:
        raise ShapeError(f"input must have shape (L, {m}), got {u.shape}")
    if u.shape[0] < L:
        raise ShapeError(f"input has {u.shape[0]} samples, horizon is {L}")
    if not np.all(np.isfinite(u)):
        raise ValueError("input has non-finite samples")
    return u[:L]


def assemble_M(U) -> np.ndarray:
    """Return the ``p x n^2`` matrix whose row ``j`` is ``vec(U_j^* U_j)^T``."""
    U = np.asarray(U, dtype=np.complex128)
    if U.ndim != 3:
        raise ShapeError(f"U must be (p, c, n), got {U.shape}")
    Mj = np.einsum("jci,jck->jik", U.conj(), U)
    # column-major vec of each M_j
    return np.transpose(Mj, (0, 2, 1)).reshape(U.shape[0], -1)


def quadratic_output(M, x):
    """``x^* M_j x`` for every ``j``; ``x`` may carry leading batch axes."""
    return np.einsum("...i,jik,...k->...j", x.conj(), M, x)


def kron_quadratic_output(Mrows, x):
    """The same quantity evaluated literally as ``M (x (x) conj(x))``."""
    xx = np.einsum("...i,...k->...ik", x, x.conj())
    return xx.reshape(*x.shape[:-1], -1) @ Mrows.T


def states(sys: LqoSystem, u, L) -> np.ndarray:
    """State trajectory ``x_0 .. x_{L-1}``, shape (L, n)."""
    L = _check_horizon(L)
    u = _as_signal(u, sys.m, L)
    Bu = u @ sys.B.T
    x = np.empty((L, sys.n), dtype=np.complex128)
    prev = np.zeros(sys.n, dtype=np.complex128)
    for k in range(L):
        prev = sys.lam * prev + Bu[k]
        x[k] = prev
    return x


def simulate_recursive(sys: LqoSystem, u, L) -> np.ndarray:
    """Run the state recursion; returns complex outputs of shape (L, p)."""
    x = states(sys, u, L)
    return x @ sys.C.T + quadratic_output(sys.M, x)


def kernel_h1(sys: LqoSystem, L) -> np.ndarray:
    """Linear kernel ``h1[t] = C A^t B``, shape (L, p, m)."""
    L = _check_horizon(L)
    powers = sys.lam[None, :] ** np.arange(L)[:, None]
    return np.einsum("pn,tn,nm->tpm", sys.C, powers, sys.B)


def kernel_h2(sys: LqoSystem, L) -> np.ndarray:
    """Quadratic kernel, shape (L, L, p, m*m).

    Entry ``h2[t1, t2][j, a*m + b]`` multiplies ``u_a[k-t1] * conj(u_b[k-t2])``
    and equals ``vec(M_j)^T (A^t1 B e_a (x) conj(A^t2 B e_b))``.
    """
    L = _check_horizon(L)
    powers = sys.lam[None, :] ** np.arange(L)[:, None]
    G = powers[:, :, None] * sys.B[None]  # (L, n, m)
    H = np.einsum("tib,jik,ska->stjab", G.conj(), sys.M, G)
    return H.reshape(L, L, sys.p, sys.m * sys.m)


def simulate_convolution(sys: LqoSystem, u, L) -> np.ndarray:
    """Evaluate the output through the Volterra double sum (oracle route)."""
    L = _check_horizon(L)
    u = _as_signal(u, sys.m, L)
    h1 = kernel_h1(sys, L)
    h2 = kernel_h2(sys, L).reshape(L, L, sys.p, sys.m, sys.m)
    y = np.empty((L, sys.p), dtype=np.complex128)
    for k in range(L):
        ur = u[k::-1]
        y[k] = (np.einsum("tpm,tm->p", h1[:k + 1], ur)
                + np.einsum("stjab,sa,tb->j", h2[:k + 1, :k + 1], ur, ur.conj()))
    return y


def kernel_norms_sq(sys: LqoSystem, L):
    """Brute-force ``(||h1||^2, ||h2||^2)`` over the horizon."""
    h1 = kernel_h1(sys, L)
    h2 = kernel_h2(sys, L)
    return float(np.sum(np.abs(h1) ** 2)), float(np.sum(np.abs(h2) ** 2))


def _clamp(value, scale):
    """Zero out cancellation noise in a difference of nonnegative traces.

    Anything below ``1e-14`` of the total is rounding (an exact match), and
    small negative values up to ``1e-10`` of the total are too.
    """
    scale = max(scale, 1e-300)
    if abs(value) <= 1e-14 * scale or (value < 0 and -value < 1e-10 * scale):
        return 0.0
    return value


def finite_gramian(sys: LqoSystem, L) -> np.ndarray:
    """``P_L = sum_{t<L} A^t B B^* (A^*)^t``."""
    return finite_stein(sys.lam, sys.lam.conj(), sys.B @ sys.B.conj().T, L)


def h1_norm_sq(sys: LqoSystem, L, P=None) -> float:
    P = finite_gramian(sys, L) if P is None else P
    return max(float(np.trace(sys.C @ P @ sys.C.conj().T).real), 0.0)


def _trace_products(X, Y):
    """``sum_j tr(X_j Y_j)`` over stacked matrices."""
    return np.einsum("jab,jba->", X, Y)


def h2_norm_sq(sys: LqoSystem, L, P=None) -> float:
    P = finite_gramian(sys, L) if P is None else P
    PM = P @ sys.M
    return max(float(_trace_products(PM, PM).real), 0.0)


def h2l_norm_sq(sys: LqoSystem, L) -> float:
    """Squared finite-horizon h2 norm from the Gramian trace formulas."""
    L = _check_horizon(L)
    P = finite_gramian(sys, L)
    return h1_norm_sq(sys, L, P) + h2_norm_sq(sys, L, P)


def h2l_error_sq(sys: LqoSystem, rsys: LqoSystem, L) -> float:
    """Squared finite-horizon h2 distance between two LQO systems."""
    L = _check_horizon(L)
    if sys.m != rsys.m or sys.p != rsys.p:
        raise ShapeError(
            f"systems differ in (m, p): {(sys.m, sys.p)} vs {(rsys.m, rsys.p)}")
    P = finite_gramian(sys, L)
    Ph = finite_gramian(rsys, L)
    Pt = finite_stein(sys.lam, rsys.lam.conj(), sys.B @ rsys.B.conj().T, L)
    C, Ch = sys.C, rsys.C
    M, Mh = sys.M, rsys.M
    PM, PhMh = P @ M, Ph @ Mh
    full = (np.sum((C @ P) * C.conj()).real + _trace_products(PM, PM).real)
    red = (np.sum((Ch @ Ph) * Ch.conj()).real + _trace_products(PhMh, PhMh).real)
    # tr(C Pt Ch^*) and sum_j tr(Pt^* M_j Pt Mh_j)
    cross = (np.sum((C @ Pt) * Ch.conj()).real
             + _trace_products(Pt.conj().T @ M, Pt @ Mh).real)
    value = float(full + red - 2.0 * cross)
    return _clamp(value, float(full + red))


def s5_to_lqo(lam, B, C_s5) -> LqoSystem:
    """Embed an S5 block with squared-modulus activation as an LQO system."""
    C_s5 = np.asarray(C_s5, dtype=np.complex128)
    B = np.asarray(B, dtype=np.complex128)
    if C_s5.ndim != 2 or B.ndim != 2:
        raise ShapeError("B and C_s5 must be 2-D")
    if C_s5.shape[0] != B.shape[1]:
        raise ShapeError(f"C_s5 must have m={B.shape[1]} rows, got {C_s5.shape[0]}")
    return LqoSystem(lam, B, np.zeros_like(C_s5), C_s5[:, None, :])
