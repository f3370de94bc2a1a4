"""Dense and sparse linear-algebra kernels shared by the rest of the package.

Conventions used throughout:

* eigenvalues are returned in ascending order;
* every eigenvector is normalised (in the inner product relevant to the
  problem) and sign-fixed so that its entry of largest magnitude is
  positive, ties broken by lowest index -- this makes eigenvectors
  reproducible across runs, which the perturbation experiments rely on.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

DEFAULT_TOL = 1e-12
"""Default relative tolerance for symmetry checks and rank decisions."""


@dataclass(frozen=True)
class EigenSystem:
    """Eigenvalues (ascending) and one unit eigenvector per column."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self):
        if self.eigenvalues.ndim != 1 or self.eigenvectors.ndim != 2:
            raise ValueError("eigenvalues must be 1-D, eigenvectors 2-D")
        if self.eigenvectors.shape[1] != self.eigenvalues.shape[0]:
            raise ValueError("one eigenvector column per eigenvalue required")
        if not (np.all(np.isfinite(self.eigenvalues)) and np.all(np.isfinite(self.eigenvectors))):
            raise ValueError("non-finite eigendecomposition")


def fix_signs(vectors):
    """Flip eigenvector columns so the largest-magnitude entry is positive.

    Ties broken by lowest row index (argmax returns the first maximum).
    Returns a new array; input is not modified.
    """
    vectors = np.array(vectors, dtype=float)
    if vectors.size == 0:
        return vectors
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def sym_eig(a, tol=DEFAULT_TOL):
    """Eigendecomposition of a symmetric matrix.

    Raises ValueError if ``a`` is not symmetric to within ``tol`` (relative
    to the largest entry) and wraps solver non-convergence in a RuntimeError.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("square matrix required")
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite entries")
    scale = np.max(np.abs(a)) if a.size else 0.0
    asym = np.max(np.abs(a - a.T)) if a.size else 0.0
    if asym > tol * max(scale, 1.0):
        raise ValueError(f"matrix not symmetric: max asymmetry {asym:.3e}")
    try:
        w, v = np.linalg.eigh((a + a.T) / 2.0)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise RuntimeError(f"eigensolver did not converge: {exc}") from exc
    return EigenSystem(w, fix_signs(v))


def generalized_sym_eig(l, m, k):
    """Smallest ``k`` solutions of ``L phi = lambda M phi`` for diagonal M.

    ``m`` must be a strictly positive diagonal matrix; the problem is
    reduced to the standard one via D^{-1/2} L D^{-1/2} (the mass matrices
    in this package are lumped, i.e. diagonal) and the eigenvectors are
    rescaled so that ``Phi^T M Phi = I``.
    """
    l = sp.csr_matrix(l)
    m = sp.csr_matrix(m)
    n = l.shape[0]
    if l.shape != (n, n) or m.shape != (n, n):
        raise ValueError("operator and mass matrix must be square and same size")
    if not (0 < k <= n):
        raise ValueError(f"k={k} out of range for dimension {n}")
    diag = m.diagonal()
    off = m - sp.diags(diag)
    if off.nnz and np.max(np.abs(off.data)) > 0:
        raise ValueError("mass matrix must be diagonal")
    if np.any(diag <= 0):
        raise ValueError("mass matrix entries must be strictly positive")
    scale = 1.0 / np.sqrt(diag)
    reduced = (l.multiply(scale[:, None])).multiply(scale[None, :])
    system = sym_eig(reduced.toarray())
    w = system.eigenvalues[:k]
    v = system.eigenvectors[:, :k] * scale[:, None]
    return EigenSystem(w, fix_signs(v))


def complex_linear_solve(a, b):
    """Solve ``a z = b`` for complex square ``a``; residual-checked.

    Raises ValueError when the matrix is singular (or so close to it that
    the residual exceeds 1e-10 relative to ``b``).
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] != b.shape[0]:
        raise ValueError("incompatible shapes for linear solve")
    try:
        z = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"singular matrix: {exc}") from exc
    bnorm = np.linalg.norm(b)
    residual = np.linalg.norm(a @ z - b)
    if not np.all(np.isfinite(z)) or residual > 1e-10 * max(bnorm, 1e-300):
        raise ValueError(f"solve failed: relative residual {residual / max(bnorm, 1e-300):.3e}")
    return z


def nullspace_basis(a, tol=1e-7):
    """Orthonormal basis of the (numerical) nullspace of ``a``.

    The dimension is the number of eigenvalues of ``a^T a`` below
    ``tol^2 * |a|^2`` (spectral norm).  Going through the Gram matrix
    squares the spectrum, so ``tol`` must stay above sqrt(machine epsilon);
    the default leaves a comfortable margin.  The zero matrix maps
    everything to zero, so its nullspace is the whole domain.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError("2-D matrix required")
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite entries")
    n = a.shape[1]
    gram = a.T @ a
    system = sym_eig(gram, tol=1e-10)
    top = system.eigenvalues[-1] if n else 0.0
    if top <= 0:
        return np.eye(n)
    cutoff = tol * tol * top  # top eigenvalue of a^T a equals |a|^2
    dim = int(np.searchsorted(system.eigenvalues, cutoff))
    return system.eigenvectors[:, :dim]
