"""Dense operator algebra on a truncated Fock-basis Hilbert space.

States are complex vectors of length ``dim``, operators are dense
``dim x dim`` complex matrices, and the basis index equals the excitation
(phonon) number.  Everything is dimensionless; rates are carried separately
by the channel objects.  Truncation is accepted as-is: the raising operator
maps the top basis state to nothing, so ``dim`` must be chosen large enough
that the top-level population stays negligible.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

HERMITIAN_TOL = 1e-12


def fock_state(dim: int, n: int) -> np.ndarray:
    """Basis state with exactly ``n`` excitations."""
    _check_dim(dim)
    if not 0 <= n < dim:
        raise ValueError(f"Fock index {n} outside [0, {dim})")
    psi = np.zeros(dim, dtype=complex)
    psi[n] = 1.0
    return psi


def build_annihilation(dim: int) -> np.ndarray:
    """Lowering operator: entries ``a[n, n+1] = sqrt(n + 1)``."""
    _check_dim(dim)
    a = np.zeros((dim, dim), dtype=complex)
    for n in range(dim - 1):
        a[n, n + 1] = np.sqrt(n + 1.0)
    return a


def build_number(dim: int) -> np.ndarray:
    """Excitation-number operator ``diag(0, 1, ..., dim - 1)``."""
    _check_dim(dim)
    return np.diag(np.arange(dim, dtype=float)).astype(complex)


def build_position(dim: int) -> np.ndarray:
    """Dimensionless position ``a + a^dag`` (tridiagonal, Hermitian)."""
    a = build_annihilation(dim)
    return a + a.conj().T


def apply(op: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Matrix-vector product ``op @ psi``; the result is not normalized."""
    op = np.asarray(op)
    psi = np.asarray(psi)
    if op.shape != (psi.shape[0], psi.shape[0]):
        raise ValueError(f"dimension mismatch: operator {op.shape} vs state length {psi.shape[0]}")
    return op @ psi


def expectation(op: np.ndarray, psi: np.ndarray) -> complex:
    """Expectation value ``<psi|op|psi>`` on a normalized state.

    Real within 1e-12 whenever ``op`` is Hermitian; the complex value is
    returned so callers can assert that themselves.
    """
    return complex(np.vdot(psi, apply(op, psi)))


def is_hermitian(op: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    """True when ``max |op - op^dag|`` entrywise is at most ``tol``."""
    op = np.asarray(op)
    return bool(np.max(np.abs(op - op.conj().T)) <= tol)


def trace_distance(rho1: np.ndarray, rho2: np.ndarray) -> float:
    """Half the sum of singular values of ``rho1 - rho2``.

    For valid density matrices the result lies in [0, 1].
    """
    rho1 = np.asarray(rho1)
    rho2 = np.asarray(rho2)
    if rho1.shape != rho2.shape:
        raise ValueError(f"dimension mismatch: {rho1.shape} vs {rho2.shape}")
    return 0.5 * float(np.linalg.svd(rho1 - rho2, compute_uv=False).sum())


def check_density(
    rho: np.ndarray,
    herm_tol: float = 1e-10,
    trace_tol: float = 1e-10,
    eig_floor: float = -1e-8,
) -> None:
    """Raise ValueError unless ``rho`` is a valid density matrix.

    Valid means Hermitian within ``herm_tol``, unit trace within
    ``trace_tol`` and minimum eigenvalue at least ``eig_floor``.
    """
    rho = np.asarray(rho)
    herm_err = float(np.max(np.abs(rho - rho.conj().T)))
    if herm_err > herm_tol:
        raise ValueError(f"not Hermitian: max |rho - rho^dag| = {herm_err:.3e}")
    trace_err = abs(complex(np.trace(rho)) - 1.0)
    if trace_err > trace_tol:
        raise ValueError(f"trace deviates from 1 by {trace_err:.3e}")
    min_eig = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min())
    if min_eig < eig_floor:
        raise ValueError(f"negative eigenvalue {min_eig:.3e}")


def load_operator(source, expected_dim: int | None = None) -> np.ndarray:
    """Load a custom operator from its JSON form.

    ``source`` is either a path to a JSON file or an already-decoded dict of
    the form ``{"dim": D, "re": [[...]], "im": [[...]]}`` with row-major
    ``D x D`` real matrices ("im" may be omitted for a real operator).
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        where = str(source)
    elif isinstance(source, dict):
        data = source
        where = "<inline>"
    else:
        raise ValueError(f"operator must be a path or an object, got {type(source).__name__}")

    unknown = set(data) - {"dim", "re", "im"}
    if unknown:
        raise ValueError(f"{where}: unknown operator keys {sorted(unknown)}")
    if "dim" not in data or "re" not in data:
        raise ValueError(f"{where}: operator needs 'dim' and 're' keys")
    dim = data["dim"]
    if not isinstance(dim, int) or dim < 1:
        raise ValueError(f"{where}: 'dim' must be a positive integer, got {dim!r}")

    re = np.asarray(data["re"], dtype=float)
    im = np.asarray(data.get("im", np.zeros((dim, dim))), dtype=float)
    for name, part in (("re", re), ("im", im)):
        if part.shape != (dim, dim):
            raise ValueError(f"{where}: '{name}' must be a {dim}x{dim} matrix, got shape {part.shape}")
    if expected_dim is not None and dim != expected_dim:
        raise ValueError(f"{where}: operator dimension {dim} does not match model dimension {expected_dim}")
    return re + 1j * im


def operator_to_json(op: np.ndarray) -> dict:
    """Inverse of :func:`load_operator` for the inline dict form."""
    op = np.asarray(op, dtype=complex)
    return {
        "dim": int(op.shape[0]),
        "re": op.real.tolist(),
        "im": op.imag.tolist(),
    }


def _check_dim(dim: int) -> None:
    if not isinstance(dim, (int, np.integer)) or dim < 1:
        raise ValueError(f"dimension must be a positive integer, got {dim!r}")
