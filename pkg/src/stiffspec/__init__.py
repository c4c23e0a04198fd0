"""Spectral asymptotics of stiffly coupled operator families.

The package computes and verifies two-sided eigenvalue brackets, spectral
projector estimates and sharpness ratios for families H = H_base +
coupling^2 * H_penalty, together with the 1D model problems used to
exercise them.
"""

from .linalg import SymPencil, EigDecomp, geig_sym, pinv_apply, \
    m_orthonormalize, proj_distance
from .forms import FormPair, LimitSpectrum, LbbEstimate, assemble_coupled, \
    limit_spectrum, resolvent_apply, lbb_constant
from .defects import DefectSet, BlockSplit, ritz_matrix, defects_general, \
    defects_kappa, gamma_block, schur_residual, residual_defect_identity
from .bounds import GapData, BoundReport, relative_gaps, ritz_value_bound, \
    projection_bound, trace_bracket, eigenvector_bound, energy_identity_check, \
    kappa0_criterion, simple_sharp_bound, cluster_bound, regular_bracket

__all__ = [
    "SymPencil", "EigDecomp", "geig_sym", "pinv_apply",
    "m_orthonormalize", "proj_distance",
    "FormPair", "LimitSpectrum", "LbbEstimate", "assemble_coupled",
    "limit_spectrum", "resolvent_apply", "lbb_constant",
    "DefectSet", "BlockSplit", "ritz_matrix", "defects_general",
    "defects_kappa", "gamma_block", "schur_residual",
    "residual_defect_identity",
    "GapData", "BoundReport", "relative_gaps", "ritz_value_bound",
    "projection_bound", "trace_bracket", "eigenvector_bound",
    "energy_identity_check", "kappa0_criterion", "simple_sharp_bound",
    "cluster_bound", "regular_bracket",
]
