"""Time-limited h2 model-order reduction for Deep SSMs with LQO layers."""

from .bound import (BoundReport, bound_report, corollary_bound, default_omega,
                    layer_gain_gtilde, measured_output_error, theorem_bound)
from .dssm import DeepSsm, Layer, build_reduced_dssm, forward, synth_random_dssm
from .gradients import (finite_difference_check, grad_objective, objective_f,
                        t_star_diag, t_star_multipliers)
from .layernorm import LayerNormParams, ln_apply, ln_jacobian, ln_lipschitz_interval
from .lqo import (LqoSystem, ShapeError, StabilityError, h2l_error_sq, h2l_norm_sq,
                  kernel_h1, kernel_h2, s5_to_lqo, simulate_convolution,
                  simulate_recursive)
from .modelio import FormatError, load_model, load_signal, save_model, save_signal
from .reduce import (ReductionConfig, ReductionReport, init_mode_dominance,
                     init_random_stable, reduce_gradient_descent)
from .stein import NearSingularError, finite_stein, solve_diag_stein

__version__ = "0.1.0"

__all__ = [
    "BoundReport",
    "bound_report",
    "corollary_bound",
    "default_omega",
    "layer_gain_gtilde",
    "measured_output_error",
    "theorem_bound",
    "DeepSsm",
    "Layer",
    "build_reduced_dssm",
    "forward",
    "synth_random_dssm",
    "finite_difference_check",
    "grad_objective",
    "objective_f",
    "t_star_diag",
    "t_star_multipliers",
    "LayerNormParams",
    "ln_apply",
    "ln_jacobian",
    "ln_lipschitz_interval",
    "LqoSystem",
    "ShapeError",
    "StabilityError",
    "h2l_error_sq",
    "h2l_norm_sq",
    "kernel_h1",
    "kernel_h2",
    "s5_to_lqo",
    "simulate_convolution",
    "simulate_recursive",
    "FormatError",
    "load_model",
    "load_signal",
    "save_model",
    "save_signal",
    "ReductionConfig",
    "ReductionReport",
    "init_mode_dominance",
    "init_random_stable",
    "reduce_gradient_descent",
    "NearSingularError",
    "finite_stein",
    "solve_diag_stein",
]
