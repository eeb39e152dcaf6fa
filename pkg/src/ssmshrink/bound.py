"""Output-error bounds between a full and a reduced Deep SSM.

All signal norms are finite-horizon: ``l2`` sums the squared Euclidean
sample norms over ``k < L``; ``linf`` takes the largest sample norm.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .dssm import DeepSsm, forward
from .layernorm import ln_lipschitz_interval
from .lqo import (ShapeError, finite_gramian, h1_norm_sq, h2_norm_sq,
                  h2l_error_sq, simulate_recursive)


def l2_norm(u) -> float:
    return float(np.sqrt(np.sum(np.abs(np.asarray(u)) ** 2)))


def linf_norm(u) -> float:
    u = np.asarray(u)
    return float(np.max(np.sqrt(np.sum(np.abs(u) ** 2, axis=-1))))


def _check_pair(full: DeepSsm, reduced: DeepSsm):
    if full.depth != reduced.depth:
        raise ShapeError(f"full has {full.depth} layers, reduced has {reduced.depth}")
    if full.width != reduced.width:
        raise ShapeError(f"full width {full.width} != reduced width {reduced.width}")


def kernel_norms(sys, L):
    """``(||h1||, ||h2||)`` over the horizon, from the trace formulas."""
    P = finite_gramian(sys, L)
    return np.sqrt(h1_norm_sq(sys, L, P)), np.sqrt(h2_norm_sq(sys, L, P))


def layer_gain_gtilde(sys, L, b) -> float:
    """``1 + sqrt(L) (||h1|| + 2 b ||h2||)``."""
    if b < 0:
        raise ValueError(f"b must be nonnegative, got {b}")
    a1, a2 = kernel_norms(sys, L)
    return 1.0 + np.sqrt(L) * (a1 + 2.0 * b * a2)


def accumulated_gains(layer_gains, omega):
    """``G_i = omega^(xi - i + 1) * prod_{j > i} g_j`` (1-based ``i``)."""
    xi = len(layer_gains)
    out = []
    for i in range(xi):
        out.append(omega ** (xi - i) * float(np.prod(layer_gains[i + 1:])))
    return out


def default_omega(model: DeepSsm) -> float:
    """Largest LayerNorm Lipschitz upper bound over the layers."""
    return max(float(np.max(np.abs(layer.ln.gamma1), initial=0.0) / np.sqrt(layer.ln.eps))
               for layer in model.layers)


def gtilde_gains(full: DeepSsm, L, b, omega):
    gs = [layer_gain_gtilde(sys, L, b) for sys in full.systems]
    return gs, accumulated_gains(gs, omega)


def layer_h2l_errors(full: DeepSsm, reduced: DeepSsm, L):
    _check_pair(full, reduced)
    return [np.sqrt(h2l_error_sq(s, r, L)) for s, r in zip(full.systems, reduced.systems)]


def corollary_bound(full: DeepSsm, reduced: DeepSsm, L, b, omega) -> float:
    """``b sqrt(1 + b^2) sum_i G_i ||S_i - Shat_i||_{h2,L}`` with constant ``b``."""
    errs = layer_h2l_errors(full, reduced, L)
    _, G = gtilde_gains(full, L, b, omega)
    return float(b * np.sqrt(1.0 + b * b) * sum(g * e for g, e in zip(G, errs)))


def measured_output_error(full: DeepSsm, reduced: DeepSsm, s_in, L) -> float:
    """Largest per-sample Euclidean distance between the two final outputs."""
    _check_pair(full, reduced)
    return linf_norm(forward(full, s_in, L).s_out - forward(reduced, s_in, L).s_out)


def layer_input_norms(full: DeepSsm, reduced: DeepSsm, s_in, L):
    """``l2`` norms of every layer input in both stacks."""
    _check_pair(full, reduced)
    tf, tr = forward(full, s_in, L), forward(reduced, s_in, L)
    u = [l2_norm(x) for x in tf.inputs[:-1]]
    uh = [l2_norm(x) for x in tr.inputs[:-1]]
    return u, uh, tf, tr


def theorem_bound(full: DeepSsm, reduced: DeepSsm, s_in, L, omega=None) -> float:
    """Input-dependent bound using the measured layer input norms.

    With ``g_j = 1 + kappa_j`` this is the recurrence bound unrolled exactly,
    so it holds whenever ``omega`` dominates every LayerNorm Lipschitz constant.
    """
    omega = default_omega(full) if omega is None else omega
    u, uh, _, _ = layer_input_norms(full, reduced, s_in, L)
    errs = layer_h2l_errors(full, reduced, L)
    gs = []
    for sys, bj, bhj in zip(full.systems, u, uh):
        a1, a2 = kernel_norms(sys, L)
        gs.append(1.0 + np.sqrt(L) * (a1 + a2 * (bj + bhj)))
    G = accumulated_gains(gs, omega)
    return float(sum(Gi * e * bh * np.sqrt(1.0 + bh * bh)
                     for Gi, e, bh in zip(G, errs, uh)))


def recurrence_check(full: DeepSsm, reduced: DeepSsm, s_in, L, omega=None):
    """Per-layer ``(measured e_i, bound on e_i)`` from the one-step recurrence.

    The bound for layer ``i`` uses the measured ``e_{i-1}`` and the layer's
    own LayerNorm upper Lipschitz constant unless ``omega`` is given.
    """
    u, uh, tf, tr = layer_input_norms(full, reduced, s_in, L)
    errs = layer_h2l_errors(full, reduced, L)
    rows = []
    e_prev = 0.0
    for i, layer in enumerate(full.layers):
        lip = ln_lipschitz_interval(layer.ln)[1] if omega is None else omega
        a1, a2 = kernel_norms(layer.system, L)
        kappa = np.sqrt(L) * (a1 + a2 * (u[i] + uh[i]))
        rhs = lip * ((1.0 + kappa) * e_prev + errs[i] * np.sqrt(1.0 + uh[i] ** 2) * uh[i])
        e_i = linf_norm(tf.inputs[i + 1] - tr.inputs[i + 1])
        rows.append((e_i, float(rhs)))
        e_prev = e_i
    return rows


def single_layer_inequality(sys, rsys, u, L):
    """``(||y - yhat||_inf^2, ||S - Shat||^2 (1 + ||u||^2) ||u||^2)``."""
    y = simulate_recursive(sys, u, L)
    yh = simulate_recursive(rsys, u, L)
    un = l2_norm(np.asarray(u)[:L]) ** 2
    return linf_norm(y - yh) ** 2, h2l_error_sq(sys, rsys, L) * (1.0 + un) * un


def kron_inequality_check(u, uhat, L):
    """Both sides of ``||u(x)u - uh(x)uh|| <= ||u - uh|| (||u|| + ||uh||)``."""
    u = np.asarray(u)[:L]
    uh = np.asarray(uhat)[:L]
    if u.shape != uh.shape:
        raise ShapeError(f"signals differ in shape: {u.shape} vs {uh.shape}")
    uu = np.einsum("ka,kb->kab", u, u) - np.einsum("ka,kb->kab", uh, uh)
    lhs = l2_norm(uu)
    rhs = l2_norm(u - uh) * (l2_norm(u) + l2_norm(uh))
    return lhs, rhs


@dataclass
class LayerBound:
    h2l_error: float
    gain_g: float
    gain_Gtilde: float
    u_norm: float
    uhat_norm: float


@dataclass
class BoundReport:
    per_layer: list
    omega: float
    b: float
    bound_value: float
    measured_error: float
    sound: bool = True
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def bound_report(full: DeepSsm, reduced: DeepSsm, s_in, L, b=None, omega=None) -> BoundReport:
    """Evaluate the constant-``b`` bound together with the measured error.

    Defaults: ``omega`` is the largest LayerNorm upper Lipschitz bound and
    ``b`` the largest measured layer input norm over both stacks.  A ``b``
    below the measured norms voids the guarantee; ``sound`` is then False.
    """
    omega = default_omega(full) if omega is None else float(omega)
    u, uh, tf, tr = layer_input_norms(full, reduced, s_in, L)
    b_measured = max(u + uh)
    notes = []
    sound = True
    if b is None:
        b = b_measured
    elif b < b_measured:
        sound = False
        notes.append(f"b={b:g} is below the measured layer input norm {b_measured:g}; "
                     "the bound is not guaranteed")
    if omega < default_omega(full):
        sound = False
        notes.append(f"omega={omega:g} is below the LayerNorm Lipschitz upper bound "
                     f"{default_omega(full):g}; the bound is not guaranteed")
    for note in notes:
        warnings.warn(note, stacklevel=2)
    errs = layer_h2l_errors(full, reduced, L)
    gs, G = gtilde_gains(full, L, b, omega)
    value = float(b * np.sqrt(1.0 + b * b) * sum(g * e for g, e in zip(G, errs)))
    rows = [LayerBound(float(e), float(g), float(Gi), ui, uhi)
            for e, g, Gi, ui, uhi in zip(errs, gs, G, u, uh)]
    measured = linf_norm(tf.s_out - tr.s_out)
    return BoundReport(rows, omega, float(b), value, measured, sound, notes)
