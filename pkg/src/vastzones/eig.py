"""Joint diagonalization of the bright/dark correlation matrices.

Solves the symmetric-definite generalized eigenproblem ``R_B u = lam R_D u``
by Cholesky reduction: with ``R_D + reg I = G G^T`` the matrix
``G^{-1} R_B G^{-T}`` is symmetric, its eigenvectors ``Q`` give ``U = G^{-T} Q``,
and then ``U^T R_B U = diag(lam)``, ``U^T (R_D + reg I) U = I``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

log = logging.getLogger(__name__)

CLAMP_RTOL = 1e-10
SYMMETRY_RTOL = 1e-10


class CholeskyError(np.linalg.LinAlgError):
    """R_D (+ regularization) is not numerically positive definite."""


@dataclass
class JointDiag:
    u: np.ndarray
    lam: np.ndarray
    regularization: float = 0.0
    chol: np.ndarray | None = None
    l_count: int = 1
    j_len: int | None = None

    def __post_init__(self):
        if self.j_len is None:
            self.j_len = self.lam.shape[0] // self.l_count

    @property
    def dim(self) -> int:
        return self.lam.shape[0]


def _matrices(stats_or_pair):
    if isinstance(stats_or_pair, tuple):
        R_b, R_d = stats_or_pair
        return np.asarray(R_b, float), np.asarray(R_d, float), 1, None
    return stats_or_pair.R_b, stats_or_pair.R_d, stats_or_pair.l_count, stats_or_pair.j_len


def _check_symmetric(R: np.ndarray, name: str) -> None:
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise ValueError(f"{name} must be square, got {R.shape}")
    scale = np.max(np.abs(R)) if R.size else 0.0
    if np.max(np.abs(R - R.T), initial=0.0) > SYMMETRY_RTOL * max(scale, np.finfo(float).tiny):
        raise ValueError(f"{name} is not symmetric")


def joint_diagonalize(stats, regularization: float = 0.0) -> JointDiag:
    """Generalized eigenpairs of (R_B, R_D + reg I), eigenvalues sorted descending.

    ``stats`` is a :class:`~vastzones.stats.SpatialStats` or a ``(R_B, R_D)``
    tuple. Eigenvalues within ``-1e-10 * lam_max`` of zero are clamped to
    zero. More negative values only arise from rounding on an ill-conditioned
    R_D; they are clamped as well and logged.
    """
    if regularization < 0:
        raise ValueError("regularization must be >= 0")
    R_b, R_d, l_count, j_len = _matrices(stats)
    _check_symmetric(R_b, "R_B")
    _check_symmetric(R_d, "R_D")
    if R_b.shape != R_d.shape:
        raise ValueError("R_B and R_D differ in shape")
    dim = R_b.shape[0]
    A = R_d + regularization * np.eye(dim) if regularization else R_d
    try:
        G = sla.cholesky(A, lower=True)
    except np.linalg.LinAlgError as exc:
        raise CholeskyError(
            f"R_D + {regularization:g} I is not positive definite; increase the regularization"
        ) from exc
    C = sla.solve_triangular(G, R_b, lower=True)
    C = sla.solve_triangular(G, C.T, lower=True)
    C = 0.5 * (C + C.T)
    lam, Q = np.linalg.eigh(C)
    order = np.argsort(lam)[::-1]
    lam, Q = lam[order], Q[:, order]
    top = max(lam[0], 0.0)
    if lam[-1] < -CLAMP_RTOL * top:
        log.warning("clamping generalized eigenvalue %.3e (largest %.3e); R_D is ill-conditioned", lam[-1], top)
    lam = np.where(lam < 0, 0.0, lam)
    U = sla.solve_triangular(G, Q, lower=True, trans="T")
    return JointDiag(U, lam, regularization, G, l_count, j_len)


@dataclass
class ConditionReport:
    residual_b: float
    residual_d: float
    spread: float
    cond_r_d: float

    def __str__(self):
        return (f"|U'R_BU - L|/|L| = {self.residual_b:.2e}, |U'R_DU - I|/sqrt(LJ) = {self.residual_d:.2e}, "
                f"lam_1/lam_LJ = {self.spread:.3e}, cond(R_D) = {self.cond_r_d:.3e}")


def condition_report(jd: JointDiag, stats) -> ConditionReport:
    """Residuals of both diagonalization identities plus conditioning figures."""
    R_b, R_d, _, _ = _matrices(stats)
    dim = jd.dim
    R_d_eff = R_d + jd.regularization * np.eye(dim)
    lam_norm = np.linalg.norm(jd.lam)
    res_b = np.linalg.norm(jd.u.T @ R_b @ jd.u - np.diag(jd.lam))
    res_b = res_b / lam_norm if lam_norm > 0 else res_b
    res_d = np.linalg.norm(jd.u.T @ R_d_eff @ jd.u - np.eye(dim)) / np.sqrt(dim)
    spread = jd.lam[0] / jd.lam[-1] if jd.lam[-1] > 0 else np.inf
    return ConditionReport(float(res_b), float(res_d), float(spread), float(np.linalg.cond(R_d_eff)))


def fallback_regularization(R_d: np.ndarray) -> float:
    """Diagonal loading used when R_D is singular: 1e-10 * trace(R_D) / LJ."""
    return 1e-10 * float(np.trace(R_d)) / R_d.shape[0]
