"""Small dense matrix utilities for two-qubit quantum states.

Everything here works on 2x2 and 4x4 arrays only.  The certification
pipeline stays on the real-symmetric path; complex Hermitian matrices
appear only as simulator states.  Eigendecomposition of real symmetric
matrices is done by cyclic Jacobi rotations so the hot path has no
dependency beyond numpy array arithmetic.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

__all__ = [
    "Tolerances",
    "TOL",
    "HermMat",
    "DensityMat",
    "EigSys",
    "pauli",
    "kron",
    "partial_trace",
    "eig_sym",
    "eigvals_sym",
    "fidelity",
]


@dataclasses.dataclass(frozen=True)
class Tolerances:
    """Single source of truth for numerical tolerances.

    algebra   -- algebraic identities (traces, marginals, reconstruction)
    psd       -- positive-semidefiniteness slack accepted downstream
    hermitian -- max |M - M^dagger| accepted when wrapping a matrix
    density   -- eigenvalue floor accepted for density matrices
    """

    algebra: float = 1e-10
    psd: float = 1e-8
    hermitian: float = 1e-12
    density: float = 1e-10


TOL = Tolerances()

_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    "Y": np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    "Z": np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
}


def pauli(name: str) -> np.ndarray:
    """Return the 2x2 Pauli matrix I, X, Y or Z (complex dtype, read-only)."""
    try:
        m = _PAULI[name.upper()]
    except KeyError:
        raise ValueError(f"unknown Pauli name {name!r}; expected one of I, X, Y, Z")
    out = m.copy()
    out.setflags(write=False)
    return out


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product of two single-qubit operators."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != (2, 2) or b.shape != (2, 2):
        raise ValueError(f"kron expects 2x2 factors, got {a.shape} and {b.shape}")
    return np.kron(a, b)


def _as_square(mat: np.ndarray) -> np.ndarray:
    m = np.asarray(mat)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not 1 <= m.shape[0] <= 4:
        raise ValueError(f"only matrices up to 4x4 are supported, got {m.shape[0]}")
    return m


@dataclasses.dataclass(frozen=True)
class HermMat:
    """A validated Hermitian matrix of dimension 2 or 4.

    ``mat`` is stored read-only.  ``real`` is True when the imaginary part
    vanishes within tolerance, in which case ``mat`` is a float64 array.
    """

    mat: np.ndarray
    dim: int
    real: bool

    @classmethod
    def wrap(cls, mat: np.ndarray) -> "HermMat":
        m = _as_square(mat).astype(complex)
        herm_err = float(np.max(np.abs(m - m.conj().T)))
        if herm_err > TOL.hermitian:
            raise ValueError(f"matrix is not Hermitian within {TOL.hermitian} (error {herm_err:.3e})")
        m = 0.5 * (m + m.conj().T)
        is_real = float(np.max(np.abs(m.imag))) <= TOL.hermitian
        store = np.ascontiguousarray(m.real) if is_real else np.ascontiguousarray(m)
        store.setflags(write=False)
        return cls(mat=store, dim=store.shape[0], real=is_real)


@dataclasses.dataclass(frozen=True)
class DensityMat:
    """A validated density matrix: Hermitian, unit trace, eigenvalues >= -tol."""

    mat: np.ndarray
    dim: int
    real: bool

    @classmethod
    def wrap(cls, mat: np.ndarray) -> "DensityMat":
        h = HermMat.wrap(mat)
        tr = float(np.trace(h.mat).real)
        if abs(tr - 1.0) > TOL.algebra:
            raise ValueError(f"density matrix trace must be 1 within {TOL.algebra}, got {tr!r}")
        if h.real:
            evals = eigvals_sym(h.mat)
        else:
            evals = np.linalg.eigvalsh(h.mat)  # complex path: simulator states only
        if float(evals[0]) < -TOL.density:
            raise ValueError(f"density matrix has negative eigenvalue {float(evals[0]):.3e}")
        return cls(mat=h.mat, dim=h.dim, real=h.real)


@dataclasses.dataclass(frozen=True)
class EigSys:
    """Eigendecomposition with ascending eigenvalues and orthonormal columns."""

    values: np.ndarray
    vectors: np.ndarray


def _jacobi_sweeps(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi on a real symmetric matrix; returns (diagonalized a, V)."""
    n = a.shape[0]
    v = np.eye(n)
    scale = math.sqrt(float(np.sum(a * a))) or 1.0
    for _ in range(100):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off += 2.0 * a[p, q] * a[p, q]
        if math.sqrt(off) <= 1e-15 * scale:
            return a, v
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-18 * scale:
                    continue
                # classic 2x2 rotation annihilating a[p, q]
                theta = 0.5 * (a[q, q] - a[p, p]) / apq
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(1.0 + theta * theta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
                rot_p = c * a[p, :] - s * a[q, :]
                rot_q = s * a[p, :] + c * a[q, :]
                a[p, :], a[q, :] = rot_p, rot_q
                a[p, q] = a[q, p] = 0.0
                rot_p = c * v[:, p] - s * v[:, q]
                rot_q = s * v[:, p] + c * v[:, q]
                v[:, p], v[:, q] = rot_p, rot_q
    raise RuntimeError("Jacobi eigensolver did not converge within 100 sweeps")


def eig_sym(mat: np.ndarray) -> EigSys:
    """Eigendecomposition of a real symmetric 2x2 or 4x4 matrix.

    Cyclic Jacobi rotations, deterministic, capped at 100 sweeps.  Returns
    ascending eigenvalues; columns of ``vectors`` are the eigenvectors.
    """
    m = _as_square(mat)
    if np.iscomplexobj(m):
        if float(np.max(np.abs(np.asarray(m).imag))) > TOL.hermitian:
            raise ValueError("eig_sym expects a real symmetric matrix")
        m = m.real
    m = np.array(m, dtype=float)
    if float(np.max(np.abs(m - m.T))) > TOL.hermitian * max(1.0, float(np.max(np.abs(m)))):
        raise ValueError("eig_sym expects a symmetric matrix")
    m = 0.5 * (m + m.T)
    diag, v = _jacobi_sweeps(m.copy())
    vals = np.diag(diag).copy()
    order = np.argsort(vals, kind="stable")
    return EigSys(values=vals[order], vectors=v[:, order])


def eigvals_sym(mat: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of a real symmetric 2x2 or 4x4 matrix."""
    return eig_sym(mat).values


def partial_trace(mat: np.ndarray, side: str) -> np.ndarray:
    """Trace out one qubit of a 4x4 two-qubit operator.

    side='A' removes the first tensor factor (returns the B marginal);
    side='B' removes the second (returns the A marginal).
    """
    m = _as_square(mat)
    if m.shape[0] != 4:
        raise ValueError("partial_trace expects a 4x4 matrix")
    r = m.reshape(2, 2, 2, 2)  # indices a, b, a', b'
    if side.upper() == "A":
        return np.einsum("abac->bc", r)
    if side.upper() == "B":
        return np.einsum("abcb->ac", r)
    raise ValueError("side must be 'A' or 'B'")


def fidelity(rho: np.ndarray, target: np.ndarray) -> float:
    """Fidelity tr[rho @ target] of a state with a pure target state.

    Only pure targets are supported: the second argument must satisfy
    tr[T] = 1 and tr[T^2] = 1 within tolerance, otherwise a ValueError is
    raised (mixed-target fidelity is out of scope).
    """
    r = _as_square(rho)
    t = _as_square(target)
    if r.shape != t.shape:
        raise ValueError("state and target must have the same dimension")
    tr_t = complex(np.trace(t))
    purity = complex(np.trace(t @ t))
    if abs(tr_t - 1.0) > 1e-8 or abs(purity - 1.0) > 1e-8:
        raise ValueError("fidelity target must be a pure state (rank one)")
    val = complex(np.trace(r @ t))
    if abs(val.imag) > 1e-9:
        raise ValueError(f"fidelity came out non-real ({val!r}); inputs are not Hermitian")
    return float(val.real)
