"""Prebuilt model presets.

Time bookkeeping for the oscillator preset: with frequency f = omega / (2 pi)
the natural time unit is the period T = 1/f.  Configs built from the preset
express times in units of T and rates in units of f, so the default
``omega = 2 pi`` makes both units equal to 1.
"""

from __future__ import annotations

import math

import numpy as np

from wavemc.hilbert import build_annihilation, build_number, build_position, fock_state
from wavemc.model import ModelSpec
from wavemc.steppers import DecoherenceChannel, HamiltonianNoiseChannel, MeasurementChannel


def preset_oscillator(
    dim: int = 10,
    omega: float = 2.0 * math.pi,
    k: float = 0.1,
    beta: float = 0.1,
    n0: int = 3,
) -> tuple[ModelSpec, np.ndarray]:
    """Harmonic oscillator under continuous energy measurement.

    The Hamiltonian is ``omega * N``; the excitation number N is measured
    continuously with strength ``k`` while a white-noise force couples to the
    dimensionless position ``x = a + a^dag`` with strength ``beta`` (a simple
    model of infinite-temperature heating).  The oscillator starts in the
    Fock state with ``n0`` excitations; recorded observables are <N> and <x>.
    """
    if not 0 <= n0 < dim:
        raise ValueError(f"initial Fock index {n0} outside [0, {dim})")
    number = build_number(dim)
    position = build_position(dim)
    model = ModelSpec(
        dim=dim,
        hamiltonian=omega * number,
        decoherence=[],
        ham_noise=[HamiltonianNoiseChannel(position, beta)],
        measurements=[MeasurementChannel(number, k)],
        observables={"n": number, "x": position},
    )
    return model, fock_state(dim, n0)


def preset_qubit_decay(gamma: float = 0.5) -> tuple[ModelSpec, np.ndarray]:
    """Two-level system decaying through the lowering operator.

    No Hamiltonian and no measurement: the minimal model for checking that
    the ensemble average of the stochastic pure-state evolution reproduces
    the deterministic master equation.  Starts excited; records the excited
    population.
    """
    lowering = build_annihilation(2)
    model = ModelSpec(
        dim=2,
        hamiltonian=np.zeros((2, 2)),
        decoherence=[DecoherenceChannel(lowering, gamma)],
        observables={"excited": build_number(2)},
    )
    return model, fock_state(2, 1)


# name -> (builder, allowed params with defaults); addressable from configs and the CLI
PRESETS = {
    "oscillator-energy-measurement": (
        preset_oscillator,
        {"dim": 10, "omega": 2.0 * math.pi, "k": 0.1, "beta": 0.1, "n0": 3},
    ),
    "qubit-decay": (
        preset_qubit_decay,
        {"gamma": 0.5},
    ),
}


def build_preset(name: str, params: dict | None = None) -> tuple[ModelSpec, np.ndarray]:
    """Instantiate a preset by name with parameter overrides."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset '{name}'; available: {sorted(PRESETS)}")
    builder, defaults = PRESETS[name]
    params = dict(params or {})
    unknown = set(params) - set(defaults)
    if unknown:
        raise ValueError(f"preset '{name}' got unknown parameters {sorted(unknown)}; allowed: {sorted(defaults)}")
    merged = {**defaults, **params}
    return builder(**merged)
