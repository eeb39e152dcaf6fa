"""Stability-guarded gradient descent on the weighted h2 objective."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .bound import accumulated_gains, layer_gain_gtilde
from .gradients import BLOCKS, grad_objective, layer_errors
from .lqo import STABILITY_MARGIN, LqoSystem, ShapeError, StabilityError, h2l_error_sq

log = logging.getLogger(__name__)


@dataclass
class ReductionConfig:
    """Hyperparameters of the descent loop.

    ``gains`` fixes the per-layer weights directly; otherwise they are built
    from the full systems with the constant input-norm bound ``b`` and the
    LayerNorm Lipschitz constant ``omega``.
    """

    ranks: list
    L: int
    eta_init: tuple = (1.0, 1.0, 1.0, 1.0)
    c1: float = 1e-4
    rho: float = 0.5
    K_max: int = 20
    grad_tol: float = 1e-8
    stability_margin: float = STABILITY_MARGIN
    max_backtracks: int = 60
    b: float = 1.0
    omega: float = 1.0
    gains: list | None = None

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if not 0.0 < self.c1 < 1.0:
            raise ValueError(f"c1 must lie in (0, 1), got {self.c1}")
        if len(self.eta_init) != 4 or min(self.eta_init) <= 0:
            raise ValueError(f"eta_init needs four positive steps, got {self.eta_init}")
        if int(self.L) != self.L or self.L < 1:
            raise ValueError(f"horizon must be a positive integer, got {self.L}")
        if any(int(r) != r or r < 1 for r in self.ranks):
            raise ValueError(f"ranks must be positive integers, got {self.ranks}")
        if self.K_max < 0 or self.max_backtracks < 1:
            raise ValueError("K_max must be >= 0 and max_backtracks >= 1")


@dataclass
class IterationRecord:
    iter: int
    objective: float
    grad_norm: float
    backtracks: int
    eta_scale: float
    step_scales: tuple = ()


@dataclass
class ReductionReport:
    rows: list = field(default_factory=list)
    final_objective: float = float("nan")
    reason: str = ""
    gains: list = field(default_factory=list)

    @property
    def objectives(self):
        return [row.objective for row in self.rows]


def objective_gains(fulls, config: ReductionConfig):
    if config.gains is not None:
        if len(config.gains) != len(fulls):
            raise ShapeError(f"{len(config.gains)} gains for {len(fulls)} layers")
        return [float(g) for g in config.gains]
    gs = [layer_gain_gtilde(sys, config.L, config.b) for sys in fulls]
    return accumulated_gains(gs, config.omega)


def _step(rsys, grad, eta):
    return rsys.replace(lam=rsys.lam - eta[0] * grad.lam,
                        B=rsys.B - eta[1] * grad.B,
                        C=rsys.C - eta[2] * grad.C,
                        U=rsys.U - eta[3] * grad.U)


def _stable(lam, margin):
    return np.max(np.abs(lam)) <= 1.0 - margin


def reduce_gradient_descent(fulls, init_roms, config: ReductionConfig, callback=None):
    """Minimise ``sum_i G_i ||S_i - Shat_i||_{h2,L}`` from ``init_roms``.

    Each outer iteration restarts from ``eta_init``.  A proposal that leaves
    the stability region shrinks only the ``lam`` step; a proposal failing
    the Armijo test shrinks all four steps by ``rho``.  The run ends after
    ``K_max`` accepted steps, when the gradient norm drops to ``grad_tol``,
    or when ``max_backtracks`` shrinks of either kind fail to find an
    acceptable step (reason ``"stalled"``; the last iterate is kept).

    Returns the reduced systems and a report whose ``rows[k]`` records the
    objective at the start of iteration ``k``; the last row is the final state.
    ``callback(k, roms, f)`` is called with every iterate, starting at ``k = 0``.
    """
    fulls, roms = list(fulls), list(init_roms)
    if len(fulls) != len(roms) or len(config.ranks) != len(fulls):
        raise ShapeError(f"{len(fulls)} layers, {len(roms)} initial ROMs, "
                         f"{len(config.ranks)} ranks")
    margin = config.stability_margin
    for i, (full, rom, r) in enumerate(zip(fulls, roms, config.ranks)):
        if rom.n != r:
            raise ShapeError(f"layer {i}: initial ROM has order {rom.n}, rank is {r}")
        if (rom.m, rom.p, rom.c) != (full.m, full.p, full.c):
            raise ShapeError(f"layer {i}: ROM dims (m, p, c) differ from the full system")
        if not _stable(rom.lam, margin):
            raise StabilityError(f"layer {i}: initial ROM violates the stability margin")
    roms = [rom.replace(margin=margin) for rom in roms]

    gains = objective_gains(fulls, config)
    L = config.L
    eta0 = np.asarray(config.eta_init, dtype=float)
    report = ReductionReport(gains=gains)

    phis = layer_errors(fulls, roms, L)
    f = float(sum(G * np.sqrt(p) for G, p in zip(gains, phis)))
    for ell in range(config.K_max + 1):
        if callback is not None:
            callback(ell, roms, f)
        grads = grad_objective(fulls, roms, gains, L, phis=phis)
        sq = {name: sum(g.sq_norms()[name] for g in grads) for name in BLOCKS}
        gnorm = float(np.sqrt(sum(sq.values())))
        if ell == config.K_max or gnorm <= config.grad_tol:
            report.rows.append(IterationRecord(ell, f, gnorm, 0, float("nan")))
            report.reason = "max_iters" if gnorm > config.grad_tol else "grad_tol"
            break

        eta = eta0.copy()
        sq_vec = np.array([sq[name] for name in BLOCKS])
        accepted = None
        # stability and sufficient-decrease shrinks are capped separately
        n_stab = n_armijo = 0
        while n_stab < config.max_backtracks and n_armijo < config.max_backtracks:
            if not all(_stable(rom.lam - eta[0] * g.lam, margin)
                       for rom, g in zip(roms, grads)):
                eta[0] *= config.rho
                n_stab += 1
                continue
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    proposal = [_step(rom, g, eta) for rom, g in zip(roms, grads)]
                    new_phis = [h2l_error_sq(s, r, L) for s, r in zip(fulls, proposal)]
                    f_new = float(sum(G * np.sqrt(p) for G, p in zip(gains, new_phis)))
            except ValueError:
                # an overflowing step counts as a failed decrease test
                f_new = float("nan")
            D = float(eta @ sq_vec)
            if np.isfinite(f_new) and f_new <= f - config.c1 * D:
                accepted = (proposal, new_phis, f_new)
                break
            eta *= config.rho
            n_armijo += 1
        backtracks = n_stab + n_armijo

        scales = tuple(eta / eta0)
        report.rows.append(IterationRecord(ell, f, gnorm, backtracks, scales[1], scales))
        if accepted is None:
            log.warning("line search stalled after %d backtracks at iteration %d",
                        backtracks, ell)
            report.reason = "stalled"
            break
        roms, phis, f = accepted
        log.debug("iter %d: f=%.6g |g|=%.3g backtracks=%d", ell, f, gnorm, backtracks)

    report.final_objective = f
    return roms, report


def mode_scores(sys: LqoSystem) -> np.ndarray:
    out_w = np.linalg.norm(sys.C, axis=0) + np.linalg.norm(sys.U, axis=1).sum(axis=0)
    in_w = np.linalg.norm(sys.B, axis=1)
    return out_w * in_w / np.sqrt(1.0 - np.abs(sys.lam) ** 2)


def init_mode_dominance(sys: LqoSystem, r, L=None) -> LqoSystem:
    """Keep the ``r`` modes with the largest input-output energy score.

    A mode's score is its output weight ``||C e_i|| + sum_j ||U_j e_i||``
    times its input weight ``||e_i^T B||`` over ``sqrt(1 - |lam_i|^2)``.
    ``L`` is accepted for interface symmetry; the score is horizon-free.
    """
    if int(r) != r or r < 1 or r > sys.n:
        raise ValueError(f"rank must lie in [1, {sys.n}], got {r}")
    order = np.argsort(-mode_scores(sys), kind="stable")
    return sys.restrict(order[:r])


def init_random_stable(r, m, p, c, seed, margin=STABILITY_MARGIN) -> LqoSystem:
    """Random ROM with ``|lam| <= 1 - margin - 0.05``; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    radius = 1.0 - margin - 0.05
    lam = radius * np.sqrt(rng.uniform(0.0, 1.0, r)) * np.exp(2j * np.pi * rng.uniform(0.0, 1.0, r))

    def cnormal(*shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)

    s = 1.0 / np.sqrt(r)
    return LqoSystem(lam, s * cnormal(r, m), s * cnormal(p, r), s * cnormal(p, c, r))
