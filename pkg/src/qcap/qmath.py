"""Dense complex linear algebra and quantum-information primitives.

States are plain ``numpy`` arrays. A density matrix over ``n`` qubits has
shape ``(2**n, 2**n)``; most functions also accept a leading batch axis,
``(B, 2**n, 2**n)``, so that many parameter settings can be evaluated in
one call. Qubit 0 is the leftmost (most significant) tensor factor.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

MAX_QUBITS = 10
HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = 1e-9
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100


class PreconditionError(ValueError):
    """Raised when an input violates a documented precondition."""


def n_qubits_of(mat: np.ndarray) -> int:
    dim = mat.shape[-1]
    n = int(dim).bit_length() - 1
    if dim != 1 << n or mat.shape[-2] != dim:
        raise PreconditionError(f"shape {mat.shape} is not a square power-of-two matrix")
    if n > MAX_QUBITS:
        raise PreconditionError(f"{n} qubits exceeds the supported maximum of {MAX_QUBITS}")
    return n


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def tensor_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product; block ``(i, j)`` of the result is ``a[i, j] * b``."""
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def ket(bits: str) -> np.ndarray:
    """Computational basis vector for a bit string such as ``"01"``."""
    vec = np.zeros(1 << len(bits), dtype=complex)
    vec[int(bits, 2) if bits else 0] = 1.0
    return vec


def projector(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def is_hermitian(h: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    return bool(np.max(np.abs(h - dagger(h)), initial=0.0) <= tol)


def check_density_matrix(rho: np.ndarray) -> None:
    """Raise ``PreconditionError`` unless ``rho`` is a valid density matrix."""
    rho = np.asarray(rho)
    n_qubits_of(rho)
    if not np.all(np.isfinite(rho)):
        raise PreconditionError("density matrix has non-finite entries")
    if not is_hermitian(rho):
        raise PreconditionError("density matrix is not Hermitian")
    tr = np.trace(rho, axis1=-2, axis2=-1)
    if np.max(np.abs(tr - 1.0)) > TRACE_TOL:
        raise PreconditionError(f"trace {tr} differs from 1")
    if np.min(hermitian_eigenvalues(rho)) < -PSD_TOL:
        raise PreconditionError("density matrix is not positive semidefinite")


def partial_trace(rho: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    """Reduced state on the qubits in ``keep``, in the order given.

    Works on a single matrix or a batch with a leading axis.
    """
    rho = np.asarray(rho)
    n = n_qubits_of(rho)
    keep = [int(k) for k in keep]
    if not keep:
        raise PreconditionError("keep must be nonempty")
    if len(set(keep)) != len(keep):
        raise PreconditionError(f"duplicate qubit indices in {keep}")
    if any(k < 0 or k >= n for k in keep):
        raise PreconditionError(f"qubit index out of range in {keep} for {n} qubits")

    batch = rho.shape[:-2]
    nb = len(batch)
    t = rho.reshape(batch + (2,) * (2 * n))
    # einsum letters: batch axes, then row and column axis per qubit
    letters = iter("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ")
    b_idx = [next(letters) for _ in range(nb)]
    row = [next(letters) for _ in range(n)]
    col = [next(letters) if q in keep else row[q] for q in range(n)]
    out = b_idx + [row[q] for q in keep] + [col[q] for q in keep]
    spec = "".join(b_idx + row + col) + "->" + "".join(out)
    d = 1 << len(keep)
    return np.einsum(spec, t).reshape(batch + (d, d))


def _jacobi_sweeps(a: np.ndarray) -> np.ndarray:
    """Cyclic complex Jacobi on a batch of Hermitian matrices (modified in place)."""
    n = a.shape[-1]
    pairs = [(p, q) for p in range(n - 1) for q in range(p + 1, n)]
    offdiag = ~np.eye(n, dtype=bool)
    for _ in range(JACOBI_MAX_SWEEPS):
        off = np.sqrt(np.sum(np.abs(a[:, offdiag]) ** 2, axis=-1))
        if np.all(off < JACOBI_TOL):
            break
        for p, q in pairs:
            apq = a[:, p, q]
            r = np.abs(apq)
            active = r > 1e-300
            if not np.any(active):
                continue
            phase = np.where(active, apq / np.where(active, r, 1.0), 1.0)
            # make a[p, q] real and non-negative with a diagonal phase on q
            a[:, :, q] *= np.conj(phase)[:, None]
            a[:, q, :] *= phase[:, None]
            app = a[:, p, p].real.copy()
            aqq = a[:, q, q].real.copy()
            tau = np.where(active, (aqq - app) / (2.0 * np.where(active, r, 1.0)), 0.0)
            t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            c_ = c[:, None]
            s_ = s[:, None]
            colp = a[:, :, p].copy()
            colq = a[:, :, q]
            a[:, :, p] = c_ * colp - s_ * colq
            a[:, :, q] = s_ * colp + c_ * colq
            rowp = a[:, p, :].copy()
            rowq = a[:, q, :]
            a[:, p, :] = c_ * rowp - s_ * rowq
            a[:, q, :] = s_ * rowp + c_ * rowq
            a[:, p, p] = app - t * r
            a[:, q, q] = aqq + t * r
            a[:, p, q] = 0.0
            a[:, q, p] = 0.0
    return np.sort(np.real(np.diagonal(a, axis1=-2, axis2=-1)), axis=-1)


def hermitian_eigenvalues(h: np.ndarray) -> np.ndarray:
    """Ascending real eigenvalues of a Hermitian matrix by cyclic Jacobi rotations.

    Sweeps continue until the off-diagonal Frobenius norm drops below 1e-12
    or 100 sweeps have run. A leading batch axis is supported; every matrix
    in the batch is rotated in lockstep.
    """
    h = np.asarray(h)
    if h.ndim < 2 or h.shape[-1] != h.shape[-2]:
        raise PreconditionError(f"expected a square matrix, got shape {h.shape}")
    if not is_hermitian(h):
        raise PreconditionError("matrix is not Hermitian within 1e-10")
    batch = h.shape[:-2]
    n = h.shape[-1]
    a = np.array(h, dtype=complex).reshape((-1, n, n))
    # symmetrise away the sub-tolerance anti-Hermitian part
    a = 0.5 * (a + dagger(a))
    return _jacobi_sweeps(a).reshape(batch + (n,))


def entropy_from_eigenvalues(lam: np.ndarray) -> np.ndarray:
    lam = np.clip(lam, 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(lam > 0.0, -lam * np.log2(np.where(lam > 0.0, lam, 1.0)), 0.0)
    return np.sum(terms, axis=-1)


def von_neumann_entropy(rho: np.ndarray) -> float | np.ndarray:
    """Entropy in bits, ``-sum(l * log2(l))`` over the clamped spectrum."""
    s = entropy_from_eigenvalues(hermitian_eigenvalues(rho))
    return float(s) if np.ndim(s) == 0 else s


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float | np.ndarray:
    rho = np.asarray(rho)
    sigma = np.asarray(sigma)
    if rho.shape[-2:] != sigma.shape[-2:]:
        raise PreconditionError(f"dimension mismatch: {rho.shape} vs {sigma.shape}")
    mu = hermitian_eigenvalues(rho - sigma)
    d = 0.5 * np.sum(np.abs(mu), axis=-1)
    return float(d) if np.ndim(d) == 0 else d


def fidelity_with_pure(rho: np.ndarray, psi: np.ndarray) -> float | np.ndarray:
    """Overlap ``<psi|rho|psi>`` of a (batched) state with a pure state."""
    rho = np.asarray(rho)
    psi = np.asarray(psi, dtype=complex)
    if psi.shape[-1] != rho.shape[-1]:
        raise PreconditionError(f"dimension mismatch: {rho.shape} vs {psi.shape}")
    if abs(np.linalg.norm(psi) - 1.0) > 1e-10:
        raise PreconditionError("psi is not normalised")
    f = np.einsum("i,...ij,j->...", psi.conj(), rho, psi)
    if np.max(np.abs(f.imag), initial=0.0) > 1e-10:
        raise PreconditionError("overlap has a non-negligible imaginary part")
    f = f.real
    return float(f) if np.ndim(f) == 0 else f
