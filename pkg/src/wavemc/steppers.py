"""Single-time-step state updates for the weighted wave-function method.

All steppers accept a single state of shape (D,) or a stack of states of
shape (B, D); noise increments broadcast accordingly (scalar, or shape (B,)).
Operators act on row-stacked states as ``psi @ op.T``.

Each stochastic update carries its first-order (Milstein) correction, the
term proportional to ``(dW**2 - dt)`` obtained by applying the linear noise
operation twice; without it the stepping is only accurate to half order in
the time step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from wavemc.hilbert import is_hermitian

# states whose norm falls below this are treated as annihilated
NORM_FLOOR = 1e-14


class AnnihilationError(RuntimeError):
    """A state's norm collapsed below NORM_FLOOR.

    This always signals a time step too coarse for the channel rates.  The
    engine re-raises with the absolute member and step attached.
    """

    def __init__(self, member: int = -1, step: int = -1):
        self.member = member
        self.step = step
        super().__init__(self._message())

    def _message(self) -> str:
        where = []
        if self.member >= 0:
            where.append(f"member {self.member}")
        if self.step >= 0:
            where.append(f"step {self.step}")
        at = " at " + ", ".join(where) if where else ""
        return f"state annihilated{at}: norm below {NORM_FLOOR:g}; reduce dt relative to the channel rates"


@dataclass(frozen=True)
class DecoherenceChannel:
    """Decoherence through operator ``op`` at rate ``rate`` (1/time)."""

    op: np.ndarray
    rate: float

    def __post_init__(self):
        object.__setattr__(self, "op", np.asarray(self.op, dtype=complex))
        _check_square(self.op, "decoherence operator")
        if self.rate < 0:
            raise ValueError(f"decoherence rate must be >= 0, got {self.rate}")


@dataclass(frozen=True)
class MeasurementChannel:
    """Continuous measurement of ``op`` with strength ``strength`` (1/time)."""

    op: np.ndarray
    strength: float

    def __post_init__(self):
        object.__setattr__(self, "op", np.asarray(self.op, dtype=complex))
        _check_square(self.op, "measurement operator")
        if self.strength < 0:
            raise ValueError(f"measurement strength must be >= 0, got {self.strength}")


@dataclass(frozen=True)
class HamiltonianNoiseChannel:
    """White-noise Hamiltonian term ``sqrt(strength) * op`` (op Hermitian)."""

    op: np.ndarray
    strength: float

    def __post_init__(self):
        object.__setattr__(self, "op", np.asarray(self.op, dtype=complex))
        _check_square(self.op, "Hamiltonian-noise operator")
        if not is_hermitian(self.op):
            raise ValueError("Hamiltonian-noise operator must be Hermitian")
        if self.strength < 0:
            raise ValueError(f"noise strength must be >= 0, got {self.strength}")


def normalize_state(psi: np.ndarray):
    """Return (unit-norm state, squared norm of the input).

    For stacked states the squared norms have shape (B,).  Raises
    AnnihilationError when any norm is below NORM_FLOOR.
    """
    psi = np.asarray(psi)
    sq = _sq_norms(psi)
    norm = np.sqrt(sq)
    lowest = float(norm.min()) if norm.ndim else float(norm)
    if lowest < NORM_FLOOR:
        member = int(np.argmax(np.atleast_1d(norm < NORM_FLOOR)))
        raise AnnihilationError(member=member if psi.ndim > 1 else -1)
    if psi.ndim > 1:
        return psi * (1.0 / norm)[:, np.newaxis], sq
    return psi / norm, float(sq)


def _sq_norms(psi: np.ndarray) -> np.ndarray:
    """Squared norms along the last axis (real float array)."""
    if psi.dtype == np.complex128 and psi.flags.c_contiguous:
        # view as interleaved reals: sum of re**2 + im**2 without a conj copy
        r = psi.view(np.float64)
        return np.einsum("...d,...d->...", r, r)
    return np.real(np.einsum("...d,...d->...", np.conj(psi), psi))


def real_inner(psi: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Real part of <psi|phi> along the last axis."""
    if (
        psi.dtype == np.complex128
        and phi.dtype == np.complex128
        and psi.flags.c_contiguous
        and phi.flags.c_contiguous
    ):
        return np.einsum("...d,...d->...", psi.view(np.float64), phi.view(np.float64))
    return np.real(np.einsum("...d,...d->...", np.conj(psi), phi))


def milstein_term(op: np.ndarray, coeff: complex, dw, dt: float, psi: np.ndarray) -> np.ndarray:
    """First-order correction ``(coeff**2 / 2) * (dw**2 - dt) * op @ op @ psi``
    for a stochastic term ``coeff * op @ psi * dw``."""
    psi = np.asarray(psi, dtype=complex)
    op = np.asarray(op, dtype=complex)
    bracket = _per_member(np.asarray(dw, dtype=float) ** 2 - dt, psi)
    return (0.5 * coeff * coeff) * bracket * ((psi @ op.T) @ op.T)


def decoherence_step(psi: np.ndarray, ch: DecoherenceChannel, dv, dt: float) -> np.ndarray:
    """One decoherence step of the stochastic Schroedinger equation.

    Applies, with L = ch.op and g = ch.rate and e = <L + L^dag> evaluated on
    the input state,

        dpsi = -g (L^dag - 2 e) L psi dt + sqrt(2 g) L psi dv
               + g (dv**2 - dt) L^2 psi

    and normalizes.  The last term is the Milstein correction for the noise
    coefficient sqrt(2 g).
    """
    if ch.rate == 0.0:
        return psi
    psi = np.asarray(psi, dtype=complex)
    gamma = ch.rate
    ell = ch.op
    dv = np.asarray(dv, dtype=float)
    l_psi = psi @ ell.T
    e = 2.0 * real_inner(psi, l_psi)
    # per-member coefficients of L psi and L^2 psi (drift, noise, correction)
    c_lin = _per_member((2.0 * gamma * dt) * e + math.sqrt(2.0 * gamma) * dv, psi)
    c_quad = _per_member(gamma * (dv * dv - dt), psi)
    out = psi - (gamma * dt) * (l_psi @ ell.conj()) + c_lin * l_psi + c_quad * (l_psi @ ell.T)
    return normalize_state(out)[0]


def hamiltonian_noise_step(psi: np.ndarray, ch: HamiltonianNoiseChannel, dv, dt: float) -> np.ndarray:
    """One white-noise Hamiltonian kick, second order in the increment.

    Expanding the stochastic unitary exp(i sqrt(b) X dv) with X = ch.op and
    b = ch.strength gives

        dpsi = i sqrt(b) X psi dv - (b / 2) X^2 psi dv**2 ;

    the dt pieces of the Ito drift and the Milstein correction cancel
    exactly, so the update depends on dt only through dv itself.
    """
    if ch.strength == 0.0:
        return psi
    psi = np.asarray(psi, dtype=complex)
    x = ch.op
    x_psi = psi @ x.T
    dv = np.asarray(dv, dtype=float)
    c_lin = _per_member((1j * math.sqrt(ch.strength)) * dv, psi)
    c_quad = _per_member((-0.5 * ch.strength) * (dv * dv), psi)
    out = psi + c_lin * x_psi + c_quad * (x_psi @ x.T)
    return normalize_state(out)[0]


def hamiltonian_drift_step(psi: np.ndarray, hamiltonian: np.ndarray, dt: float) -> np.ndarray:
    """First-order deterministic evolution ``psi - i H psi dt``, normalized."""
    psi = np.asarray(psi, dtype=complex)
    h = np.asarray(hamiltonian, dtype=complex)
    propagator = np.eye(h.shape[0]) - (1j * dt) * h
    return normalize_state(psi @ propagator.T)[0]


def measurement_step_state(psi: np.ndarray, ch: MeasurementChannel, ens_exp: float, dw: float, dt: float) -> np.ndarray:
    """Apply the measurement-update operator; the result is NOT normalized.

    With M = ch.op, k = ch.strength and ens_exp the ensemble-wide
    <M + M^dag> (one shared value for all members, evaluated on the
    pre-step ensemble), the update operator is

        A = 1 - k (M^dag - 2 ens_exp) M dt + sqrt(2 k) M dw
              + k (dw**2 - dt) M^2 .

    All coefficients are member-independent, so the second-order part is
    assembled once at operator size.  The caller keeps the squared norm of
    the result for the weight update before renormalizing.
    """
    if ch.strength == 0.0:
        return psi
    psi = np.asarray(psi, dtype=complex)
    k = ch.strength
    m_op = ch.op
    c_lin = 2.0 * k * ens_exp * dt + math.sqrt(2.0 * k) * dw
    a_minus_identity = c_lin * m_op + k * ((dw * dw - dt) * (m_op @ m_op) - dt * (m_op.conj().T @ m_op))
    return psi + psi @ a_minus_identity.T


def measurement_record(ch: MeasurementChannel, ens_exp: float, dw: float, dt: float) -> float:
    """Continuous measurement outcome ``2 k ens_exp dt + sqrt(2 k) dw``."""
    if ch.strength == 0.0:
        return 0.0
    return 2.0 * ch.strength * ens_exp * dt + math.sqrt(2.0 * ch.strength) * dw


def scalar_geometric_step(x, drift: float, vol: float, dw, dt: float, milstein: bool = True):
    """One step of d x = drift x dt + vol x dW in scalar form.

    The simplest instance of the stepping scheme used throughout this
    module, kept for strong-order validation against the exact geometric
    solution ``x0 * exp((drift - vol**2/2) t + vol W(t))``.  With
    ``milstein=False`` the (dW**2 - dt) correction is dropped and the scheme
    degrades to half order.
    """
    inc = drift * x * dt + vol * x * dw
    if milstein:
        inc = inc + 0.5 * vol * vol * (np.asarray(dw) ** 2 - dt) * x
    return x + inc


def _per_member(values: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Shape per-member scalars so they broadcast along the state axis."""
    values = np.asarray(values)
    if psi.ndim > 1 and values.ndim == 1:
        return values[:, np.newaxis]
    return values


def _check_square(op: np.ndarray, what: str) -> None:
    if op.ndim != 2 or op.shape[0] != op.shape[1] or op.shape[0] < 1:
        raise ValueError(f"{what} must be a square matrix, got shape {op.shape}")
