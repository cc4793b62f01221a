"""Shared builders for the test suite."""

from __future__ import annotations

import math

import numpy as np

from wavemc.config import finalize
from wavemc.engine import SimulationConfig
from wavemc.models import preset_oscillator, preset_qubit_decay


def oscillator_config(
    seed: int,
    n_ens: int = 1024,
    t_total: float = 10.0,
    dt: float = 2e-4,
    finest_dt: float = 1e-4,
    mode: str = "mc",
    k: float = 0.1,
    beta: float = 0.1,
    n0: int = 3,
    output_stride: int = 20,
    refine: bool = False,
    initial_state: np.ndarray | None = None,
) -> SimulationConfig:
    """Continuously measured oscillator setup used across the suite."""
    model, psi0 = preset_oscillator(k=k, beta=beta, n0=n0)
    if initial_state is not None:
        psi0 = initial_state
    return finalize(
        SimulationConfig(
            model=model,
            initial_state=psi0,
            dt=dt,
            n_steps=round(t_total / dt),
            n_ens=n_ens,
            p_thresh=0.2 / n_ens,
            regen_interval=10,
            seed=seed,
            finest_dt=finest_dt,
            mode=mode,
            output_stride=output_stride,
            refine=refine,
        )
    )


def qubit_config(seed: int, n_ens: int = 2048, t_total: float = 2.0, dt: float = 1e-3, mode: str = "mc") -> SimulationConfig:
    model, psi0 = preset_qubit_decay()
    return finalize(
        SimulationConfig(
            model=model,
            initial_state=psi0,
            dt=dt,
            n_steps=round(t_total / dt),
            n_ens=n_ens,
            p_thresh=0.2 / n_ens,
            regen_interval=10,
            seed=seed,
            finest_dt=dt,
            mode=mode,
        )
    )


def random_density(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Random valid density matrix (Wishart normalized)."""
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_ensemble(rng: np.random.Generator, n: int, dim: int):
    """Random weighted ensemble with normalized states and unit weight sum."""
    from wavemc.ensemble import WeightedEnsemble

    states = rng.standard_normal((n, dim)) + 1j * rng.standard_normal((n, dim))
    states /= np.linalg.norm(states, axis=1)[:, None]
    weights = rng.random(n) + 1e-3
    weights /= math.fsum(weights.tolist())
    return WeightedEnsemble(states, weights)
