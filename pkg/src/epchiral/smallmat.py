"""Dense complex linear algebra for matrices of dimension 2, 3, and 4.

Wraps LAPACK's non-symmetric eigensolver (Hessenberg reduction plus shifted
QR, via ``numpy.linalg.eig``) with the fixed eigenvalue ordering used across
the package, biorthonormalized left/right eigenvector pairs, and a
defectiveness diagnostic so callers can recognize near-coalescing spectra
instead of failing on them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_DIM = 4

# Below this reciprocal condition number of the right-eigenvector matrix the
# decomposition is treated as defective (eigenvectors coalescing); pairing
# and residual guarantees are suspended and callers must branch.
DEFECTIVE_THRESHOLD = 1e-8


class EigenDecompositionError(RuntimeError):
    """Eigensolver did not converge or produced an unusable decomposition."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


def as_matrix(a) -> np.ndarray:
    """Coerce to a square complex matrix of dimension 2..4, rejecting
    non-finite entries."""
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    n = m.shape[0]
    if not 2 <= n <= MAX_DIM:
        raise ValueError(f"dimension {n} outside supported range 2..{MAX_DIM}")
    if not np.all(np.isfinite(m.real)) or not np.all(np.isfinite(m.imag)):
        raise ValueError("matrix entries must be finite")
    return m


@dataclass(frozen=True)
class EigenSystem:
    """Eigendecomposition of a (generally non-Hermitian) matrix.

    eigenvalues   -- sorted by descending real part, ties by descending
                     imaginary part
    right_vectors -- column i is the unit-norm right eigenvector of
                     eigenvalues[i]
    left_vectors  -- column i is scaled so that <left_i|right_j> = delta_ij
                     (valid while defectiveness stays above the defective
                     threshold)
    defectiveness -- reciprocal condition number of the right-eigenvector
                     matrix; ~1 for well-separated spectra, ->0 at an
                     exceptional point
    """

    eigenvalues: np.ndarray
    right_vectors: np.ndarray
    left_vectors: np.ndarray
    defectiveness: float

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    def right(self, i: int) -> np.ndarray:
        return self.right_vectors[:, i]

    def left(self, i: int) -> np.ndarray:
        return self.left_vectors[:, i]


def eig(a) -> EigenSystem:
    """Eigendecomposition with the package-wide sorting convention.

    Returns an EigenSystem whose left vectors are rows of the inverse of the
    right-eigenvector matrix (conjugated into column form), so the left-right
    pairing is the identity. Near-defective input does not raise; it is
    reported through ``defectiveness`` and callers decide how to proceed.
    """
    m = as_matrix(a)
    try:
        vals, vecs = np.linalg.eig(m)
    except np.linalg.LinAlgError as exc:
        raise EigenDecompositionError(f"eigensolver failed to converge: {exc}") from exc

    order = np.lexsort((-vals.imag, -vals.real))
    vals = vals[order]
    vecs = vecs[:, order]
    vecs = vecs / np.linalg.norm(vecs, axis=0)

    # SVD gives both the conditioning diagnostic and a pseudoinverse that
    # stays finite when the eigenvector matrix is singular (at an EP).
    u, s, vh = np.linalg.svd(vecs)
    defectiveness = float(s[-1] / s[0])
    cutoff = s[0] * 1e-15
    s_inv = np.where(s > cutoff, 1.0 / np.where(s > cutoff, s, 1.0), 0.0)
    inv_right = (vh.conj().T * s_inv) @ u.conj().T
    left = inv_right.conj().T

    if defectiveness > DEFECTIVE_THRESHOLD:
        residual = float(max(np.linalg.norm(m @ vecs[:, i] - vals[i] * vecs[:, i]) for i in range(m.shape[0])))
        scale = float(np.linalg.norm(m)) + 1e-300
        if residual > 1e-6 * scale:
            raise EigenDecompositionError(
                f"eigendecomposition residual {residual:.3e} exceeds 1e-6*|A|",
                residual=residual,
            )

    return EigenSystem(vals, vecs, left, defectiveness)


def trace_norm_hermitian(m, tol: float = 1e-12) -> float:
    """Trace norm Tr sqrt(M^dag M) of a Hermitian matrix: sum of absolute
    eigenvalues. Raises if the input is not Hermitian within ``tol``."""
    a = as_matrix(m)
    dev = float(np.abs(a - a.conj().T).max())
    if dev > tol:
        raise ValueError(f"matrix is not Hermitian within {tol:g} (deviation {dev:.3e})")
    h = 0.5 * (a + a.conj().T)
    return float(np.abs(np.linalg.eigvalsh(h)).sum())
