"""Direct density-matrix integrators used as references.

Three steppers share the deterministic part (Hamiltonian commutator,
decoherence dissipators, and the averaged double-commutator dissipator of
each white-noise Hamiltonian channel):

* :func:`sme_step_direct` integrates the unnormalized conditional master
  equation, whose noise term is linear in rho, and renormalizes the trace
  after every step.  Linearity makes the first-order (Milstein) correction a
  fixed quadratic form; the correction includes the exchange term
  ``2 M rho M^dag`` arising from the product of the two linear noise
  applications.
* :func:`sme_step_normalized_euler` is a plain Euler step of the normalized
  conditional master equation.  It is half-order but structurally
  independent, so agreement at small dt cross-checks the direct stepper.
* :func:`me_step` is the deterministic master equation with no measurement
  terms at all, the reference for unraveling checks.

The white-noise Hamiltonian channels enter all three only through their
noise-averaged dissipator ``-(b/2) [X, [X, rho]]``: the observer does not
know the force realization, while the Monte Carlo members each sample one.
"""

from __future__ import annotations

import math

import numpy as np

from wavemc.model import ModelSpec

TRACE_FLOOR = 1e-14


def sme_step_direct(rho: np.ndarray, model: ModelSpec, dws, dt: float) -> np.ndarray:
    """One step of the unnormalized conditional master equation.

    ``dws`` holds one Wiener increment per measurement channel.  Per channel
    with operator M, strength k and e = Tr[(M + M^dag) rho], the increment
    adds

        - k (M^dag M rho + rho M^dag M - 2 M rho M^dag) dt
        + (M rho + rho M^dag)(2 k e dt + sqrt(2 k) dW)
        + k (dW**2 - dt)(M^2 rho + rho M^dag^2 + 2 M rho M^dag)

    on top of the deterministic part, and the result is divided by its
    trace.  For Hermitian M the drift coefficient reduces to 4 k <M> dt.
    """
    rho = np.asarray(rho, dtype=complex)
    inc = _deterministic_increment(rho, model) * dt
    for ch, dw in zip(model.measurements, _as_dw_list(dws, model)):
        k = ch.strength
        if k == 0.0:
            continue
        m_op = ch.op
        m_dag = m_op.conj().T
        m_rho = m_op @ rho
        rho_mdag = rho @ m_dag
        e = float(np.real(np.trace(m_rho + rho_mdag)))
        inc += _dissipator(rho, m_op, k) * dt
        inc += (m_rho + rho_mdag) * (2.0 * k * e * dt + math.sqrt(2.0 * k) * dw)
        inc += (k * (dw * dw - dt)) * (m_op @ m_rho + rho_mdag @ m_dag + 2.0 * (m_rho @ m_dag))
    return _renormalize(rho + inc)


def sme_step_normalized_euler(rho: np.ndarray, model: ModelSpec, dws, dt: float) -> np.ndarray:
    """Euler step of the normalized conditional master equation.

    Per measurement channel the stochastic term is
    ``sqrt(2 k)(M rho + rho M^dag - e rho) dW`` with e = Tr[(M + M^dag) rho];
    no Milstein correction is applied.  The trace is renormalized to absorb
    the residual drift.
    """
    rho = np.asarray(rho, dtype=complex)
    inc = _deterministic_increment(rho, model) * dt
    for ch, dw in zip(model.measurements, _as_dw_list(dws, model)):
        k = ch.strength
        if k == 0.0:
            continue
        m_rho = ch.op @ rho
        rho_mdag = rho @ ch.op.conj().T
        e = float(np.real(np.trace(m_rho + rho_mdag)))
        inc += _dissipator(rho, ch.op, k) * dt
        inc += (math.sqrt(2.0 * k) * dw) * (m_rho + rho_mdag - e * rho)
    return _renormalize(rho + inc)


def me_step(rho: np.ndarray, model: ModelSpec, dt: float) -> np.ndarray:
    """Deterministic master-equation step (no measurement terms)."""
    rho = np.asarray(rho, dtype=complex)
    return _renormalize(rho + _deterministic_increment(rho, model) * dt)


def _deterministic_increment(rho: np.ndarray, model: ModelSpec) -> np.ndarray:
    """Hamiltonian commutator plus decoherence and averaged-noise dissipators,
    per unit time."""
    inc = np.zeros_like(rho)
    if model.has_hamiltonian:
        h = model.hamiltonian
        inc += -1j * (h @ rho - rho @ h)
    for ch in model.decoherence:
        if ch.rate != 0.0:
            inc += _dissipator(rho, ch.op, ch.rate)
    for ch in model.ham_noise:
        if ch.strength != 0.0:
            inc += _dissipator(rho, ch.op, 0.5 * ch.strength)
    return inc


def _dissipator(rho: np.ndarray, op: np.ndarray, rate: float) -> np.ndarray:
    """-rate (op^dag op rho + rho op^dag op - 2 op rho op^dag)."""
    op_dag = op.conj().T
    opdop = op_dag @ op
    return -rate * (opdop @ rho + rho @ opdop - 2.0 * (op @ rho @ op_dag))


def _renormalize(rho: np.ndarray) -> np.ndarray:
    trace = float(np.real(np.trace(rho)))
    if trace < TRACE_FLOOR:
        raise ValueError(f"density-matrix trace collapsed to {trace:.3e}; reduce dt")
    return rho / trace


def _as_dw_list(dws, model: ModelSpec) -> list[float]:
    if dws is None:
        dws = []
    dws = list(np.atleast_1d(np.asarray(dws, dtype=float))) if not isinstance(dws, list) else list(dws)
    if len(dws) != len(model.measurements):
        raise ValueError(f"need {len(model.measurements)} measurement increments, got {len(dws)}")
    return [float(w) for w in dws]
