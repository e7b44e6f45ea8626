"""Dense complex linear-algebra kernels.

Small helpers shared by the channel model and the beamforming optimizer:
orthonormal null-space bases, complex-to-real stacking, Hermitian quadratic
forms and the 2x2 log-det capacity determinant.  Everything operates on
plain numpy arrays; all functions are pure.
"""

import numpy as np

__all__ = [
    "NoNullSpaceError",
    "null_space_basis",
    "complex_to_real",
    "hermitian_quadratic",
    "det_2x2_hermitian_form",
]

#: relative singular-value cutoff used to decide numerical rank
RANK_RTOL = 1e-10

#: tolerance for Hermitian-symmetry checks
HERMITIAN_ATOL = 1e-10


class NoNullSpaceError(ValueError):
    """Raised when a matrix has full row rank and no zero-forcing direction
    exists (for the relay problem this happens whenever K <= 2)."""


def null_space_basis(M: np.ndarray) -> np.ndarray:
    """Orthonormal basis for the orthogonal complement of the columns of M.

    Parameters
    ----------
    M : (m, c) complex ndarray with m > c.

    Returns
    -------
    B : (m, m - r) complex ndarray with r = rank(M), satisfying
        ``B.conj().T @ B == I`` and ``M.conj().T @ B == 0`` to 1e-10.

    Raises
    ------
    ValueError
        If M is not a 2-D matrix with more rows than columns, or contains
        non-finite entries.
    NoNullSpaceError
        If rank(M) == m, i.e. the complement is empty.
    """
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={M.ndim}")
    m, c = M.shape
    if m <= c:
        raise ValueError(f"need more rows than columns, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix contains non-finite entries")

    # Left singular vectors beyond the numerical rank span null(M^H).
    U, s, _ = np.linalg.svd(M, full_matrices=True)
    if s.size == 0:
        rank = 0
    else:
        rank = int(np.sum(s > RANK_RTOL * s[0]))
    if rank >= m:
        raise NoNullSpaceError(
            f"matrix of shape {M.shape} has full row rank; "
            "no zero-forcing direction exists"
        )
    return U[:, rank:]


def complex_to_real(x: np.ndarray) -> np.ndarray:
    """Stack a complex n-vector into the real 2n-vector [Re(x); Im(x)].

    The map is an isometry: ``norm(complex_to_real(x)) == norm(x)``.
    """
    x = np.asarray(x)
    return np.concatenate([np.real(x), np.imag(x)]).astype(float)


def hermitian_quadratic(f: np.ndarray, A: np.ndarray) -> float:
    """Real value of the quadratic form f^H A f for Hermitian A.

    Raises
    ------
    ValueError
        If A is not Hermitian within tolerance or dimensions mismatch.
    """
    f = np.asarray(f, dtype=complex).ravel()
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got shape {A.shape}")
    if A.shape[0] != f.size:
        raise ValueError(f"dimension mismatch: f has {f.size}, A is {A.shape}")
    scale = max(1.0, float(np.max(np.abs(A))) if A.size else 1.0)
    if np.max(np.abs(A - A.conj().T), initial=0.0) > HERMITIAN_ATOL * scale:
        raise ValueError("matrix is not Hermitian within tolerance")
    v = complex(np.vdot(f, A @ f))
    return v.real


def det_2x2_hermitian_form(H: np.ndarray, C: np.ndarray) -> float:
    """det(I_2 + H H^H C^{-1}) for 2x2 H and Hermitian positive definite C.

    The value is real and >= 1 whenever the preconditions hold.

    Raises
    ------
    ValueError
        If C is singular / not positive definite, or shapes are not 2x2.
    """
    H = np.asarray(H, dtype=complex)
    C = np.asarray(C, dtype=complex)
    if H.shape != (2, 2) or C.shape != (2, 2):
        raise ValueError(f"expected 2x2 matrices, got {H.shape} and {C.shape}")
    scale = max(1.0, float(np.max(np.abs(C))))
    if np.max(np.abs(C - C.conj().T)) > HERMITIAN_ATOL * scale:
        raise ValueError("C is not Hermitian within tolerance")
    # 2x2 Hermitian PD <=> positive trace and positive determinant.
    detC = (C[0, 0] * C[1, 1] - C[0, 1] * C[1, 0]).real
    if detC <= 0 or C[0, 0].real <= 0:
        raise ValueError("C is not positive definite")
    M = np.eye(2) + H @ H.conj().T @ np.linalg.inv(C)
    d = complex(M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0])
    return d.real
