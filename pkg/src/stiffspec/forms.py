"""The coupled family h_kappa = h_base + kappa^2 * h_penalty on matrices.

A FormPair holds the discrete base form B, penalty form E and mass M.  The
limit problem lives on the numerical kernel of E; the resolvent and the
inf-sup style regularity constant are computed against the definite
reference form B + E.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import linalg
from .errors import InhibitedFamilyError, ValidationError
from .linalg import SymPencil, check_symmetric, fix_sign, pinv_apply, spd_solver

KERNEL_TOL = 1e-8


@dataclass
class FormPair:
    """Discrete triple (B, E, M) defining the coupled family.

    B and E are symmetric positive semidefinite, B + E is positive definite
    and M is the SPD mass matrix.  b_definite records whether B alone is
    positive definite (if not, the unit-coupling form B + E serves as the
    definite reference everywhere it is needed).
    """

    n: int
    B: np.ndarray
    E: np.ndarray
    M: np.ndarray
    label: str = ""
    b_definite: bool = True
    _cache: dict = field(default_factory=dict, repr=False, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock,
                                  repr=False, compare=False)

    def __post_init__(self):
        self.B = check_symmetric(self.B, "B")
        self.E = check_symmetric(self.E, "E")
        self.M = linalg.check_spd(self.M, "M")
        if not (self.B.shape == self.E.shape == self.M.shape == (self.n, self.n)):
            raise ValidationError("B, E, M must all be n x n")
        scale_e = np.abs(self.E).max()
        if scale_e > 0:
            shift = 2e-12 * scale_e
            try:
                sla.cholesky(self.E + shift * np.eye(self.n), lower=True)
            except sla.LinAlgError as exc:
                raise ValidationError("E is not positive semidefinite") from exc
        try:
            spd_solver(self.B + self.E)
        except ValidationError as exc:
            raise ValidationError("B + E is not positive definite") from exc

    def coupled(self, kappa: float) -> np.ndarray:
        if kappa < 0:
            raise ValidationError("coupling kappa must be nonnegative")
        return self.B + (kappa * kappa) * self.E

    def _solver(self, kappa: float):
        """Factorization of B + kappa^2 E, memoized per coupling value."""
        key = float(kappa)
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        solver = spd_solver(self.coupled(kappa))
        with self._lock:
            self._cache.setdefault(key, solver)
        return solver


@dataclass(frozen=True)
class LimitSpectrum:
    """Eigenproblem of the base form restricted to the kernel of the penalty.

    Z spans the (numerical) kernel of E, M-orthonormally; values/vectors are
    the restricted eigenpairs lifted back to the full space.
    """

    Z: np.ndarray
    values: np.ndarray
    vectors: np.ndarray

    @property
    def r(self):
        return self.Z.shape[1]


@dataclass(frozen=True)
class LbbEstimate:
    """Discrete inf-sup style regularity constant, optionally with the
    closed-form model bound for comparison."""

    kappa_frak: float
    theoretical_bound: float | None = None


def assemble_coupled(pair: FormPair, kappa: float) -> SymPencil:
    """Pencil of the coupled operator at the given coupling strength."""
    return SymPencil(A=pair.coupled(kappa), M=pair.M)


def _zero_row_fast_path(pair: FormPair, tol: float):
    """Detect an exact coordinate kernel of E (rows identically ~0).

    FEM penalty blocks supported on part of the domain produce exactly this
    structure; it avoids a dense (E, M) eigensolve at large n.  Returns the
    kernel index set or None when the structure is absent or unsafe.
    """
    E = pair.E
    scale = np.abs(E).max()
    if scale == 0.0:
        return None
    row_max = np.abs(E).max(axis=1)
    kernel_idx = np.where(row_max <= 1e-14 * scale)[0]
    if kernel_idx.size == 0 or kernel_idx.size == pair.n:
        return None
    rest = np.setdiff1d(np.arange(pair.n), kernel_idx)
    E_cc = E[np.ix_(rest, rest)]
    M_cc = pair.M[np.ix_(rest, rest)]
    lam_max = linalg.pencil_lambda_max(E, pair.M)
    # the complement block must be definite well above the kernel threshold,
    # otherwise fall back to the dense route
    w_min = sla.eigh(E_cc, M_cc, subset_by_index=[0, 0], eigvals_only=True)[0]
    if w_min <= 10.0 * tol * lam_max:
        return None
    return kernel_idx


def limit_spectrum(pair: FormPair, tol: float = KERNEL_TOL,
                   absolute_cut: float | None = None) -> LimitSpectrum:
    """Solve the limit problem on the numerical kernel of the penalty form.

    Kernel directions are the (E, M) eigenvectors with eigenvalue at or
    below tol * lambda_max(E, M); absolute_cut, when given, replaces that
    relative rule by a fixed eigenvalue cut (used by models whose penalty
    has no exact discrete kernel).  The restricted eigenproblem of B on the
    kernel is then solved and lifted back to the full space.
    """
    key = ("limit", float(tol), absolute_cut)
    with pair._lock:
        hit = pair._cache.get(key)
    if hit is not None:
        return hit

    kernel_idx = None
    if absolute_cut is None:
        kernel_idx = _zero_row_fast_path(pair, tol)

    if kernel_idx is not None:
        M_kk = pair.M[np.ix_(kernel_idx, kernel_idx)]
        B_kk = pair.B[np.ix_(kernel_idx, kernel_idx)]
        L = sla.cholesky(M_kk, lower=True)
        Zk = sla.solve_triangular(L, np.eye(kernel_idx.size),
                                  lower=True, trans="T")
        Z = np.zeros((pair.n, kernel_idx.size))
        Z[kernel_idx, :] = Zk
        w, C = sla.eigh(B_kk, M_kk)
        V = np.zeros((pair.n, kernel_idx.size))
        V[kernel_idx, :] = C
    else:
        w_e, V_e = sla.eigh(pair.E, pair.M)
        lam_max = w_e.max()
        cut = absolute_cut if absolute_cut is not None else tol * max(lam_max, 0.0)
        keep = w_e <= cut
        r = int(np.count_nonzero(keep))
        if r == 0:
            raise InhibitedFamilyError(
                "penalty form has no numerical kernel (inhibited family); "
                "no limit problem exists")
        Z = V_e[:, keep]
        Bz = Z.T @ pair.B @ Z
        Mz = Z.T @ pair.M @ Z
        w, C = sla.eigh(0.5 * (Bz + Bz.T), 0.5 * (Mz + Mz.T))
        V = Z @ C

    limit = LimitSpectrum(Z=fix_sign(Z), values=w, vectors=fix_sign(V))
    with pair._lock:
        pair._cache.setdefault(key, limit)
    return limit


def resolvent_apply(pair: FormPair, kappa: float, f) -> np.ndarray:
    """Solve (B + kappa^2 E) x = M f.

    The quadratic form (f, H^-1 f) of the coupled operator is then f^T M x.
    """
    if kappa == 0.0 and not pair.b_definite:
        raise ValidationError(
            "B alone is singular; use the unit-coupling form B + E "
            "(kappa = 1) as the definite reference")
    f = np.asarray(f, dtype=float)
    rhs = pair.M @ f
    return pair._solver(kappa).solve(rhs)


def resolvent_moment(pair: FormPair, kappa: float, f) -> float:
    """The scalar (f, H_kappa^-1 f) in the M inner product."""
    f = np.asarray(f, dtype=float)
    return float(f @ pair.M @ resolvent_apply(pair, kappa, f))


def limit_pinv_apply(pair: FormPair, limit: LimitSpectrum, f,
                     tol: float = 1e-12) -> np.ndarray:
    """Apply the pseudo-inverse of the limit operator: project onto the
    kernel of the penalty, solve the restricted problem, lift back."""
    f = np.asarray(f, dtype=float)
    Z = limit.Z
    Bz = Z.T @ pair.B @ Z
    rhs = Z.T @ (pair.M @ f)
    return Z @ pinv_apply(Bz, rhs, tol=tol)


def limit_moment(pair: FormPair, limit: LimitSpectrum, f) -> float:
    """The scalar (f, H_infinity^dagger f)."""
    f = np.asarray(f, dtype=float)
    return float(f @ pair.M @ limit_pinv_apply(pair, limit, f))


def lbb_constant(pair: FormPair, tol: float = KERNEL_TOL) -> LbbEstimate:
    """Discrete regularity constant of the family.

    Computed as 1/sqrt(sigma_min+) where sigma_min+ is the smallest
    generalized eigenvalue of the pencil (E, B + E) above the zero cut
    tol * sigma_max.  B + E is used as the definite reference form
    throughout, also when B itself is definite.
    """
    sigma = sla.eigh(pair.E, pair.B + pair.E, eigvals_only=True)
    sigma_max = sigma.max()
    if sigma_max <= 0:
        raise ValidationError("penalty form vanishes; no regularity constant")
    nonzero = sigma[sigma > tol * sigma_max]
    if nonzero.size == 0:
        raise ValidationError("penalty form is numerically zero above the cut")
    return LbbEstimate(kappa_frak=float(1.0 / np.sqrt(nonzero.min())))


def write_form_pair(pair: FormPair, path) -> None:
    """Serialize a FormPair to the plain-text matrix-triple format.

    Line 1:  `n b_definite label` (label may contain spaces).
    Then 3*n lines of n whitespace-separated entries: the rows of B, then
    E, then M, each printed with 17 significant digits.
    """
    with open(path, "w") as fh:
        fh.write(f"{pair.n} {int(pair.b_definite)} {pair.label}\n")
        for mat in (pair.B, pair.E, pair.M):
            for row in mat:
                fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")


def read_form_pair(path) -> FormPair:
    """Parse the plain-text matrix-triple format written by write_form_pair."""
    with open(path) as fh:
        header = fh.readline().split(maxsplit=2)
        if len(header) < 2:
            raise ValidationError(f"{path}: malformed header line")
        n = int(header[0])
        b_definite = bool(int(header[1]))
        label = header[2].rstrip("\n") if len(header) > 2 else ""
        data = np.loadtxt(fh, dtype=float, max_rows=3 * n)
    if data.shape != (3 * n, n):
        raise ValidationError(f"{path}: expected {3 * n} rows of {n} entries")
    return FormPair(n=n, B=data[:n], E=data[n:2 * n], M=data[2 * n:],
                    label=label, b_definite=b_definite)
