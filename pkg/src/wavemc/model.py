"""Model description: Hamiltonian, noise channels and recorded observables."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from wavemc.hilbert import is_hermitian
from wavemc.steppers import DecoherenceChannel, HamiltonianNoiseChannel, MeasurementChannel


@dataclass
class ModelSpec:
    """Everything that defines the dynamics of one simulation.

    All operators must be ``dim x dim``; the Hamiltonian and every recorded
    observable must be Hermitian.  Channel validity (rates nonnegative,
    Hamiltonian-noise operators Hermitian) is enforced by the channel
    dataclasses themselves.
    """

    dim: int
    hamiltonian: np.ndarray
    decoherence: list[DecoherenceChannel] = field(default_factory=list)
    ham_noise: list[HamiltonianNoiseChannel] = field(default_factory=list)
    measurements: list[MeasurementChannel] = field(default_factory=list)
    observables: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dim}")
        self.hamiltonian = np.asarray(self.hamiltonian, dtype=complex)
        shape = (self.dim, self.dim)
        if self.hamiltonian.shape != shape:
            raise ValueError(f"Hamiltonian shape {self.hamiltonian.shape} does not match dim {self.dim}")
        if not is_hermitian(self.hamiltonian):
            raise ValueError("Hamiltonian must be Hermitian")
        for kind, channels in (
            ("decoherence", self.decoherence),
            ("ham_noise", self.ham_noise),
            ("measurements", self.measurements),
        ):
            for i, ch in enumerate(channels):
                if ch.op.shape != shape:
                    raise ValueError(f"{kind}[{i}] operator shape {ch.op.shape} does not match dim {self.dim}")
        self.observables = {name: np.asarray(op, dtype=complex) for name, op in self.observables.items()}
        for name, op in self.observables.items():
            if op.shape != shape:
                raise ValueError(f"observable '{name}' shape {op.shape} does not match dim {self.dim}")
            if not is_hermitian(op):
                raise ValueError(f"observable '{name}' must be Hermitian")

    @property
    def has_hamiltonian(self) -> bool:
        return bool(np.any(self.hamiltonian))
