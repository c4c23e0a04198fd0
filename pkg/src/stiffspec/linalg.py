"""Dense symmetric linear algebra in a mass-matrix inner product.

Everything here works on plain numpy arrays.  Vectors u, v represent
coefficient vectors; the scalar product is (u, v) = u^T M v for an SPD
weight M, and an operator is realized as the pencil (A, M).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ValidationError

SYM_RTOL = 1e-12

# Dense/banded dispatch: pencils at or below this order are always solved
# densely; larger banded pencils go through the sparse fast paths.
DENSE_CUTOFF = 600


def check_symmetric(A, name="matrix", rtol=SYM_RTOL):
    """Raise unless A is square and symmetric to rtol in the max norm."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {A.shape}")
    scale = np.abs(A).max()
    if scale > 0 and np.abs(A - A.T).max() > rtol * scale:
        raise ValidationError(f"{name} is not symmetric to {rtol:g} relative")
    return 0.5 * (A + A.T)


def check_spd(A, name="matrix"):
    """Raise unless A is symmetric positive definite (Cholesky test)."""
    A = check_symmetric(A, name)
    try:
        sla.cholesky(A, lower=True)
    except sla.LinAlgError as exc:
        raise ValidationError(f"{name} is not positive definite") from exc
    return A


def band_halfwidth(A):
    """Number of nonzero off-diagonals on one side of the main diagonal."""
    A = np.asarray(A)
    n = A.shape[0]
    for p in range(n - 1, 0, -1):
        if np.any(A.diagonal(p) != 0.0):
            return p
    return 0


def fix_sign(V):
    """Flip column signs so the largest-magnitude entry of each is positive.

    Ties broken by the first entry attaining the maximum; keeps eigenvector
    output deterministic across LAPACK builds.
    """
    V = np.array(V, dtype=float, copy=True)
    for j in range(V.shape[1]):
        i = int(np.argmax(np.abs(V[:, j])))
        if V[i, j] < 0:
            V[:, j] = -V[:, j]
    return V


@dataclass(frozen=True)
class SymPencil:
    """A symmetric matrix A paired with the SPD inner-product weight M."""

    A: np.ndarray
    M: np.ndarray

    def __post_init__(self):
        A = check_symmetric(self.A, "A")
        M = check_spd(self.M, "M")
        if A.shape != M.shape:
            raise ValidationError(
                f"shape mismatch: A is {A.shape}, M is {M.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "M", M)

    @property
    def n(self):
        return self.A.shape[0]


@dataclass(frozen=True)
class EigDecomp:
    """All eigenpairs of a pencil: ascending values, M-orthonormal vectors."""

    values: np.ndarray
    vectors: np.ndarray

    def __iter__(self):  # allows: values, vectors = geig_sym(p)
        return iter((self.values, self.vectors))


def geig_sym(pencil: SymPencil) -> EigDecomp:
    """Solve A v = lambda M v for all n eigenpairs.

    Values come back ascending; vectors are M-orthonormal with a
    deterministic sign convention.
    """
    w, V = sla.eigh(pencil.A, pencil.M)
    return EigDecomp(values=w, vectors=fix_sign(V))


def eig_lowest(pencil: SymPencil, k: int) -> EigDecomp:
    """Lowest k eigenpairs of the pencil.

    Semantically a slice of geig_sym; for large banded pencils it runs a
    sparse shift-invert solve instead of the dense factorization.  The
    deterministic start vector keeps the output reproducible.
    """
    n = pencil.n
    if k >= n:
        full = geig_sym(pencil)
        return EigDecomp(full.values[:n], full.vectors[:, :n])
    if n <= DENSE_CUTOFF or band_halfwidth(pencil.A) > 8:
        full = geig_sym(pencil)
        return EigDecomp(full.values[:k], full.vectors[:, :k])
    A = sp.csc_matrix(pencil.A)
    M = sp.csc_matrix(pencil.M)
    w, V = spla.eigsh(A, k=k, M=M, sigma=0.0, which="LM",
                      v0=np.ones(n), maxiter=2000)
    order = np.argsort(w)
    w = w[order]
    V = V[:, order]
    # ARPACK returns M-orthonormal vectors up to solver tolerance; tighten.
    for j in range(k):
        V[:, j] /= np.sqrt(V[:, j] @ M @ V[:, j])
    return EigDecomp(values=w, vectors=fix_sign(V))


def pinv_apply(A, x, tol: float = 1e-10):
    """Apply the truncated spectral pseudo-inverse of symmetric A to x.

    Eigenvalues at or below tol * lambda_max count as zero and contribute
    nothing; the rest are inverted in the eigenbasis.  A rank-0 matrix maps
    everything to the zero vector.
    """
    A = check_symmetric(A, "A")
    x = np.asarray(x, dtype=float)
    if tol <= 0:
        raise ValidationError("tol must be positive")
    w, V = sla.eigh(A)
    lam_max = w.max() if w.size else 0.0
    if lam_max <= 0:
        return np.zeros_like(x)
    keep = w > tol * lam_max
    coeff = V[:, keep].T @ x
    return V[:, keep] @ (coeff / w[keep])


def m_orthonormalize(V, M):
    """M-orthonormalize the columns of V by modified Gram-Schmidt.

    Preserves the column span and the orientation of the leading column of
    each step.  A column that loses all but 1e-10 of its length to the
    projection is reported as linearly dependent.
    """
    V = np.array(V, dtype=float, copy=True)
    M = check_spd(M, "M")
    if V.ndim == 1:
        V = V[:, None]
    n, k = V.shape
    W = np.zeros((n, k))
    for j in range(k):
        w = V[:, j].copy()
        norm0 = np.sqrt(max(w @ M @ w, 0.0))
        for i in range(j):
            w -= (W[:, i] @ M @ w) * W[:, i]
        # second pass for orthogonality to working precision
        for i in range(j):
            w -= (W[:, i] @ M @ w) * W[:, i]
        norm = np.sqrt(max(w @ M @ w, 0.0))
        if norm0 == 0.0 or norm <= 1e-10 * norm0:
            raise ValidationError(
                f"column {j} of V is linearly dependent in the M inner product")
        W[:, j] = w / norm
    return W


def check_m_orthonormal(V, M, name="basis", tol=1e-8):
    V = np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    G = V.T @ M @ V
    if np.abs(G - np.eye(V.shape[1])).max() > tol:
        raise ValidationError(f"{name} is not M-orthonormal to {tol:g}")
    return V


def proj_distance(U, V, M) -> float:
    """Operator-norm distance between M-orthogonal projectors.

    For subspaces of equal dimension this is sqrt(1 - sigma_min(U^T M V)^2),
    the sine of the largest principal angle.  Different dimensions force
    distance 1.
    """
    M = check_spd(M, "M")
    U = check_m_orthonormal(U, M, "U")
    V = check_m_orthonormal(V, M, "V")
    if U.shape[1] != V.shape[1]:
        return 1.0
    s = sla.svdvals(U.T @ M @ V)
    smin = min(float(s.min()), 1.0)
    return float(np.sqrt(max(1.0 - smin * smin, 0.0)))


def m_complete_basis(V, M):
    """Extend M-orthonormal V to a full M-orthonormal basis [V | V_perp].

    Coordinate directions are swept in index order and kept whenever they
    retain at least a fixed fraction of their length after projection, so
    the completion is deterministic for a given input.
    """
    M = check_spd(M, "M")
    V = check_m_orthonormal(V, M, "V")
    n, m = V.shape
    cols = [V[:, j] for j in range(m)]
    for idx in range(n):
        if len(cols) == n:
            break
        w = np.zeros(n)
        w[idx] = 1.0
        norm0 = np.sqrt(M[idx, idx])
        for _ in range(2):
            for c in cols:
                w -= (c @ M @ w) * c
        norm = np.sqrt(max(w @ M @ w, 0.0))
        if norm > 1e-8 * norm0:
            cols.append(w / norm)
    if len(cols) != n:
        raise ValidationError("could not complete basis; M nearly singular?")
    return np.column_stack(cols)


@dataclass
class _SpdSolver:
    """Factorized SPD solve with a banded fast path."""

    A: np.ndarray
    _dense: tuple = field(default=None, repr=False)
    _band: tuple = field(default=None, repr=False)
    _lu: object = field(default=None, repr=False)

    def __post_init__(self):
        n = self.A.shape[0]
        p = band_halfwidth(self.A)
        if n > DENSE_CUTOFF and p <= 8:
            if p <= 2:
                ab = np.zeros((p + 1, n))
                for d in range(p + 1):
                    ab[p - d, d:] = self.A.diagonal(d)
                self._band = (sla.cholesky_banded(ab, lower=False),)
            else:
                self._lu = spla.splu(sp.csc_matrix(self.A))
        else:
            self._dense = sla.cho_factor(self.A, lower=True)

    def solve(self, b):
        if self._band is not None:
            return sla.cho_solve_banded(self._band, b)
        if self._lu is not None:
            if b.ndim == 1:
                return self._lu.solve(b)
            return np.column_stack([self._lu.solve(b[:, j])
                                    for j in range(b.shape[1])])
        return sla.cho_solve(self._dense, b)


def spd_solver(A) -> _SpdSolver:
    """Factorize the SPD matrix A once for repeated solves."""
    try:
        return _SpdSolver(np.asarray(A, dtype=float))
    except (sla.LinAlgError, RuntimeError) as exc:
        raise ValidationError("matrix is not positive definite") from exc


def pencil_lambda_max(A, M, iters: int = 60) -> float:
    """Largest eigenvalue of the pencil (A, M) by power iteration.

    Deterministic start vector; used only for threshold decisions, where a
    percent-level answer is plenty.
    """
    n = A.shape[0]
    solver = spd_solver(M)
    x = np.ones(n) / np.sqrt(n)
    lam = 0.0
    for _ in range(iters):
        y = solver.solve(A @ x)
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0
        x = y / norm
        lam = float(x @ (A @ x)) / float(x @ (M @ x))
    return abs(lam)
