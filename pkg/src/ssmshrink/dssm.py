"""Deep state-space models built from LQO layers.

Each layer maps ``u -> z = u + Re(y)`` followed by layer normalisation, where
``y`` is the LQO output driven by ``u``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layernorm import LayerNormParams, ln_apply
from .lqo import LqoSystem, ShapeError, simulate_recursive


@dataclass(frozen=True)
class Layer:
    system: LqoSystem
    ln: LayerNormParams


@dataclass(frozen=True)
class DeepSsm:
    layers: tuple

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ShapeError("a Deep SSM needs at least one layer")
        m = layers[0].system.m
        for i, layer in enumerate(layers):
            sys = layer.system
            if sys.m != m or sys.p != m:
                raise ShapeError(
                    f"layer {i}: system is {sys.p}x{sys.m}, expected {m}x{m}")
            if layer.ln.width != m:
                raise ShapeError(f"layer {i}: LayerNorm width {layer.ln.width} != {m}")
        object.__setattr__(self, "layers", layers)

    @property
    def width(self) -> int:
        return self.layers[0].system.m

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def systems(self):
        return [layer.system for layer in self.layers]


@dataclass
class ForwardTrace:
    """``inputs[i]`` is the input of layer ``i`` (``inputs[-1]`` is ``s_out``)."""

    inputs: list
    outputs: list

    @property
    def s_out(self) -> np.ndarray:
        return self.inputs[-1]


def _as_real_signal(s_in, m, L):
    s = np.asarray(s_in)
    if np.iscomplexobj(s):
        raise ValueError("Deep SSM input must be real")
    s = s.astype(np.float64)
    if s.ndim != 2 or s.shape[1] != m:
        raise ShapeError(f"input must have shape (L, {m}), got {s.shape}")
    if s.shape[0] < L:
        raise ShapeError(f"input has {s.shape[0]} samples, horizon is {L}")
    return s[:L]


def forward(model: DeepSsm, s_in, L) -> ForwardTrace:
    u = _as_real_signal(s_in, model.width, L)
    inputs, outputs = [u], []
    for layer in model.layers:
        y = simulate_recursive(layer.system, u, L)
        u = ln_apply(u + y.real, layer.ln)
        outputs.append(y)
        inputs.append(u)
    return ForwardTrace(inputs, outputs)


def random_stable_system(rng, n, m, p, c, radius=0.95) -> LqoSystem:
    lam = radius * np.sqrt(rng.uniform(0.0, 1.0, n)) * np.exp(2j * np.pi * rng.uniform(0.0, 1.0, n))

    def cnormal(*shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)

    scale = 1.0 / np.sqrt(n)
    return LqoSystem(lam, scale * cnormal(n, m), scale * cnormal(p, n),
                     scale * cnormal(p, c, n))


def synth_random_dssm(xi, n, m, c, seed, ln_eps=1e-5) -> DeepSsm:
    """Random stable ``xi``-layer model; deterministic in ``seed``."""
    for name, v in (("xi", xi), ("n", n), ("m", m), ("c", c)):
        if int(v) != v or v < 1:
            raise ValueError(f"{name} must be a positive integer, got {v!r}")
    rng = np.random.default_rng(seed)
    layers = []
    for _ in range(xi):
        sys = random_stable_system(rng, n, m, m, c)
        ln = LayerNormParams(rng.uniform(0.5, 1.5, m), 0.1 * rng.standard_normal(m), ln_eps)
        layers.append(Layer(sys, ln))
    return DeepSsm(tuple(layers))


def build_reduced_dssm(full: DeepSsm, roms) -> DeepSsm:
    """Swap in reduced systems, keeping the LayerNorm parameters of ``full``."""
    roms = list(roms)
    if len(roms) != full.depth:
        raise ShapeError(f"{len(roms)} reduced systems for {full.depth} layers")
    return DeepSsm(tuple(Layer(rom, layer.ln) for rom, layer in zip(roms, full.layers)))
