"""Approximation defects, the block-diagonal splitting and residual identities.

The defects eta_i of a test subspace measure the relative difference
between the resolvent quadratic form and its block-diagonal compression;
they coincide with the singular values of the coupling block of the
scaled splitting and drive every bound formula downstream.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import linalg
from .errors import ConditioningError, SingularGapError, SizeLimitError, \
    ValidationError
from .forms import FormPair, LimitSpectrum
from .linalg import SymPencil, check_m_orthonormal, m_complete_basis

ETA_CEIL = 1.0 - 1e-15
CLAMP_WARN = 1e-10

# dense completion cap for the explicit block splitting
GAMMA_BLOCK_MAX_N = 2000


@dataclass(frozen=True)
class DefectSet:
    """Ordered approximation defects of one test subspace.

    kappa is the coupling the defects were measured at (None for a plain
    pencil with no family attached).  clamped flags round-off clamping that
    exceeded the cosmetic level.
    """

    kappa: float | None
    m: int
    etas: np.ndarray
    test_label: str = ""
    clamped: bool = False

    def __post_init__(self):
        etas = np.asarray(self.etas, dtype=float)
        if etas.shape != (self.m,):
            raise ValidationError("etas must have length m")
        if np.any(np.diff(etas) < -1e-14):
            raise ValidationError("etas must be non-decreasing")
        if etas.size and (etas[0] < 0.0 or etas[-1] >= 1.0):
            raise ValidationError("defects must lie in [0, 1)")
        object.__setattr__(self, "etas", etas)

    @property
    def eta_max(self) -> float:
        return float(self.etas[-1])


@dataclass(frozen=True)
class BlockSplit:
    """Pieces of the scaled block splitting for one test subspace:
    Ritz matrix Xi, coupling block Gamma, complement spectrum W_values and
    ascending Ritz values mu."""

    Xi: np.ndarray
    Gamma: np.ndarray
    W_values: np.ndarray
    mu: np.ndarray

    @property
    def gamma_singvals(self) -> np.ndarray:
        """Singular values of the coupling block, ascending."""
        s = sla.svdvals(self.Gamma)
        return np.sort(s)[-self.Xi.shape[0]:]


def ritz_matrix(pencil: SymPencil, V) -> np.ndarray:
    """Compression V^T A V of the pencil to the M-orthonormal basis V."""
    V = check_m_orthonormal(V, pencil.M, "V")
    Xi = V.T @ pencil.A @ V
    return 0.5 * (Xi + Xi.T)


def _eta_from_forms(X, Xi, kappa, label):
    """Defects from the m x m resolvent Gram matrix X and Ritz matrix Xi.

    eta_i^2 are the ascending eigenvalues of the pencil (X - Xi^-1, X).
    """
    m = X.shape[0]
    w_x = sla.eigh(X, eigvals_only=True)
    if w_x[0] <= 0.0:
        raise ConditioningError(
            "resolvent Gram matrix is numerically indefinite "
            f"(smallest eigenvalue {w_x[0]:.3e}, largest {w_x[-1]:.3e}); "
            "the coupled matrix may be too ill-conditioned at this coupling")
    G = X - sla.inv(Xi)
    G = 0.5 * (G + G.T)
    theta = sla.eigh(G, X, eigvals_only=True)
    clamped = bool(np.any(theta < -CLAMP_WARN) or np.any(theta > 1.0 + CLAMP_WARN))
    if clamped:
        warnings.warn("defect eigenvalues clamped by more than 1e-10; "
                      "results may be inaccurate", RuntimeWarning)
    theta = np.clip(theta, 0.0, ETA_CEIL ** 2)
    return DefectSet(kappa=kappa, m=m, etas=np.sqrt(theta),
                     test_label=label, clamped=clamped)


def defects_general(pencil: SymPencil, V, label: str = "") -> DefectSet:
    """Approximation defects of an arbitrary M-orthonormal test basis V
    against a positive definite pencil.

    Needs one solve with the pencil matrix per test column.
    """
    V = check_m_orthonormal(V, pencil.M, "V")
    Xi = ritz_matrix(pencil, V)
    solver = linalg.spd_solver(pencil.A)
    MV = pencil.M @ V
    Y = solver.solve(MV)
    X = MV.T @ Y
    X = 0.5 * (X + X.T)
    return _eta_from_forms(X, Xi, kappa=None, label=label)


def defects_kappa(pair: FormPair, kappa: float, limit: LimitSpectrum,
                  index_range=None) -> DefectSet:
    """Coupling-dependent defects of the selected limit eigenvectors.

    The Ritz matrix of the family on the kernel of the penalty form is
    coupling-independent and diagonal in the limit eigenbasis, so only the
    resolvent Gram matrix has to be recomputed per coupling.
    """
    if index_range is None:
        index_range = range(limit.r)
    idx = np.asarray(list(index_range), dtype=int)
    if idx.size == 0:
        raise ValidationError("index_range is empty")
    if idx.min() < 0 or idx.max() >= limit.r:
        raise ValidationError(
            f"index_range {idx.tolist()} exceeds the limit spectrum "
            f"(r = {limit.r})")
    V = limit.vectors[:, idx]
    lam = limit.values[idx]
    solver = pair._solver(kappa)
    MV = pair.M @ V
    Y = solver.solve(MV)
    X = MV.T @ Y
    X = 0.5 * (X + X.T)
    w_x = sla.eigh(X, eigvals_only=True)
    if w_x[0] <= 0.0:
        raise ConditioningError(
            "resolvent Gram matrix indefinite at coupling "
            f"{kappa:g} (smallest eigenvalue {w_x[0]:.3e})")
    G = X - np.diag(1.0 / lam)
    G = 0.5 * (G + G.T)
    theta = sla.eigh(G, X, eigvals_only=True)
    clamped = bool(np.any(theta < -CLAMP_WARN) or np.any(theta > 1.0 + CLAMP_WARN))
    if clamped:
        warnings.warn("defect eigenvalues clamped by more than 1e-10",
                      RuntimeWarning)
    theta = np.clip(theta, 0.0, ETA_CEIL ** 2)
    return DefectSet(kappa=float(kappa), m=idx.size, etas=np.sqrt(theta),
                     test_label=f"limit[{idx.min()}..{idx.max()}]",
                     clamped=clamped)


def gamma_block(pencil: SymPencil, V) -> BlockSplit:
    """Explicit block splitting of the pencil with respect to span(V).

    Builds an M-orthonormal completion, compresses A, and scales the
    off-diagonal block by the inverse square roots of the diagonal blocks.
    Dense in the full dimension, hence capped.
    """
    if pencil.n > GAMMA_BLOCK_MAX_N:
        raise SizeLimitError(
            f"dense completion requested at n = {pencil.n} "
            f"(cap {GAMMA_BLOCK_MAX_N})")
    V = check_m_orthonormal(V, pencil.M, "V")
    m = V.shape[1]
    Q = m_complete_basis(V, pencil.M)
    T = Q.T @ pencil.A @ Q
    T = 0.5 * (T + T.T)
    Xi = T[:m, :m]
    W = T[m:, m:]
    T21 = T[m:, :m]
    w_xi, U_xi = sla.eigh(Xi)
    if w_xi[0] <= 0.0:
        raise ConditioningError("Ritz matrix is not positive definite")
    w_w, U_w = sla.eigh(W)
    if w_w[0] <= 0.0:
        raise ConditioningError("complement block is not positive definite")
    Xi_isqrt = U_xi @ np.diag(1.0 / np.sqrt(w_xi)) @ U_xi.T
    W_isqrt = U_w @ np.diag(1.0 / np.sqrt(w_w)) @ U_w.T
    Gamma = W_isqrt @ T21 @ Xi_isqrt
    return BlockSplit(Xi=Xi, Gamma=Gamma, W_values=w_w, mu=w_xi)


def schur_residual(pencil: SymPencil, V, lambda_q: float) -> float:
    """Residual of the Schur-complement identity at the eigenvalue lambda_q.

    Returns the spectral norm of
    (I - lambda_q Xi^-1) - Gamma^T (I - lambda_q W^-1)^-1 Gamma,
    which vanishes in exact arithmetic when lambda_q is an eigenvalue of
    the pencil with multiplicity equal to the test-space dimension.
    """
    V = check_m_orthonormal(V, pencil.M, "V")
    m = V.shape[1]
    w_all = sla.eigh(pencil.A, pencil.M, eigvals_only=True)
    mult = int(np.count_nonzero(np.abs(w_all - lambda_q)
                                <= 1e-8 * max(abs(lambda_q), w_all[-1])))
    if mult != m:
        raise ValidationError(
            f"lambda_q = {lambda_q:g} has multiplicity {mult}, "
            f"but the test space has dimension {m}")
    split = gamma_block(pencil, V)
    if np.min(np.abs(split.W_values - lambda_q)) <= 1e-12 * abs(lambda_q):
        raise SingularGapError(
            "lambda_q collides with the complement block spectrum")
    defects = defects_general(pencil, V)
    gaps_ok = defects.eta_max / (1.0 - defects.eta_max)
    mu = split.mu
    # gap condition of the window theorem, checked with the pencil spectrum
    below = w_all[w_all < lambda_q * (1 - 1e-8)]
    above = w_all[w_all > lambda_q * (1 + 1e-8)]
    branches = []
    if above.size:
        branches.append((above[0] - mu[-1]) / (above[0] + mu[-1]))
    if below.size:
        branches.append((mu[0] - below[-1]) / (mu[0] + below[-1]))
    if branches and gaps_ok >= min(branches):
        raise ValidationError("relative gap condition fails for this "
                              "test space and eigenvalue")
    lhs = np.eye(m) - lambda_q * sla.inv(split.Xi)
    Q = m_complete_basis(V, pencil.M)
    T = Q.T @ pencil.A @ Q
    T = 0.5 * (T + T.T)
    W = T[m:, m:]
    middle = np.eye(W.shape[0]) - lambda_q * sla.inv(W)
    rhs = split.Gamma.T @ sla.solve(middle, split.Gamma)
    return float(sla.norm(lhs - rhs, 2))


def schur_expansion_residual(pencil: SymPencil, V, lambda_q: float) -> float:
    """Residual between the two displayed forms of the Schur identity
    right-hand side (resolvent form vs Neumann-expanded form)."""
    V = check_m_orthonormal(V, pencil.M, "V")
    m = V.shape[1]
    split = gamma_block(pencil, V)
    Q = m_complete_basis(V, pencil.M)
    T = Q.T @ pencil.A @ Q
    W = 0.5 * (T[m:, m:] + T[m:, m:].T)
    w, U = sla.eigh(W)
    middle = U @ np.diag(1.0 / (1.0 - lambda_q / w)) @ U.T
    form_a = split.Gamma.T @ middle @ split.Gamma
    inner = U @ np.diag(1.0 / (w * (1.0 - lambda_q / w))) @ U.T
    form_b = split.Gamma.T @ split.Gamma \
        + lambda_q * split.Gamma.T @ inner @ split.Gamma
    return float(sla.norm(form_a - form_b, 2))


def residual_defect_identity(pair: FormPair, kappa: float,
                             limit: LimitSpectrum, q: int):
    """Both sides of the residual norm identity for a simple limit eigenvalue.

    LHS: squared dual norm of the residual of the q-th limit eigenvector in
    the inverse block-diagonal form, evaluated through a constrained solve.
    RHS: (v, B v) times the squared first defect of the singleton test
    space, evaluated through the resolvent Gram route.  Independent
    computations; equal in exact arithmetic.
    """
    lam_q = limit.values[q]
    close = np.abs(limit.values - lam_q) <= 1e-10 * abs(lam_q)
    if int(np.count_nonzero(close)) != 1:
        raise ValidationError(
            f"limit eigenvalue #{q} is not simple within the limit spectrum")
    v = limit.vectors[:, q]
    A = pair.coupled(kappa)
    M = pair.M
    r = A @ v - lam_q * (M @ v)

    # constrained solve: A w + mu M v = r with v^T M w = 0 picks out the
    # complement-block inverse applied to the off-diagonal residual part
    n = pair.n
    bordered = np.zeros((n + 1, n + 1))
    bordered[:n, :n] = A
    bordered[:n, n] = M @ v
    bordered[n, :n] = (M @ v)
    rhs = np.concatenate([r, [0.0]])
    sol = sla.solve(bordered, rhs, assume_a="sym")
    w = sol[:n]
    xi = float(v @ A @ v)
    r1 = xi - lam_q
    lhs = r1 * r1 / xi + float(r @ w)

    ds = defects_kappa(pair, kappa, limit, [q])
    rhs_val = float(v @ pair.B @ v) * ds.etas[0] ** 2
    return lhs, rhs_val
