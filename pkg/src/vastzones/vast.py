"""Variable span trade-off control filters.

With generalized eigenpairs ``(lam_v, u_v)`` of (R_B, R_D) the rank-V,
mu-weighted filter is::

    q(V, mu) = sum_{v<=V} (u_v . r_B) / (lam_v + mu) * u_v

V = 1 gives the contrast-maximizing filter, V = LJ with mu = 1 the
pressure-matching (Wiener) filter, and V = LJ with mu = 0 the
distortionless one.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .eig import JointDiag

MU_GRID = (0.0, 0.1, 1.0, 10.0, 100.0)


@dataclass(frozen=True)
class VastParams:
    v: int
    mu: float

    def __post_init__(self):
        if self.v < 1:
            raise ValueError(f"V must be >= 1, got {self.v}")
        if not self.mu >= 0:
            raise ValueError(f"mu must be >= 0, got {self.mu}")

    def check(self, dim: int) -> None:
        if self.v > dim:
            raise ValueError(f"V = {self.v} exceeds LJ = {dim}")


@dataclass
class ControlFilterBank:
    """Per-loudspeaker FIR filters ``q[l, j]``; ``coefficients`` is a_V when designed by VAST."""

    q: np.ndarray
    coefficients: np.ndarray | None = None

    def __post_init__(self):
        self.q = np.atleast_2d(np.asarray(self.q, dtype=float))
        if not np.all(np.isfinite(self.q)):
            raise ValueError("control filters must be finite")

    @property
    def l_count(self) -> int:
        return self.q.shape[0]

    @property
    def j_len(self) -> int:
        return self.q.shape[1]

    @property
    def stacked(self) -> np.ndarray:
        return self.q.reshape(-1)

    @classmethod
    def from_stacked(cls, q, l_count: int, coefficients=None) -> "ControlFilterBank":
        q = np.asarray(q, dtype=float)
        return cls(q.reshape(l_count, -1), coefficients)

    @classmethod
    def delta(cls, l_count: int, j_len: int = 1) -> "ControlFilterBank":
        q = np.zeros((l_count, j_len))
        q[:, 0] = 1.0
        return cls(q)


def _projections(jd: JointDiag, r_b, v: int, mu: float) -> tuple[np.ndarray, np.ndarray]:
    r_b = np.asarray(r_b, dtype=float)
    if r_b.shape != (jd.dim,):
        raise ValueError(f"r_B has shape {r_b.shape}, expected ({jd.dim},)")
    denom = jd.lam[:v] + mu
    if np.any(denom <= 0):
        bad = int(np.argmax(denom <= 0)) + 1
        raise ZeroDivisionError(f"lambda_{bad} + mu = 0: trade-off is singular for V={v}, mu={mu}")
    return jd.u[:, :v].T @ r_b, denom


def solve_vast(jd: JointDiag, r_b, params: VastParams) -> ControlFilterBank:
    params.check(jd.dim)
    proj, denom = _projections(jd, r_b, params.v, params.mu)
    a = proj / denom
    q = jd.u[:, :params.v] @ a
    return ControlFilterBank.from_stacked(q, jd.l_count, a)


def contrast_ratio(q, R_b: np.ndarray, R_d: np.ndarray, m_b: int, m_d: int) -> float:
    """gamma(q) = (M_D / M_B) q'R_Bq / q'R_Dq as a linear ratio (inf when the dark power is zero)."""
    q = getattr(q, "stacked", q)
    bright = float(q @ R_b @ q)
    dark = float(q @ R_d @ q)
    if dark <= 0:
        return math.inf
    return (m_d / m_b) * bright / dark


def acoustic_contrast(q, stats_unweighted) -> float:
    """Acoustic contrast of ``q`` in dB against the (unweighted) statistics; +inf if the dark zone is silent."""
    s = stats_unweighted
    g = contrast_ratio(q, s.R_b, s.R_d, s.m_b, s.m_d)
    if math.isinf(g):
        return math.inf
    if g <= 0:
        return -math.inf
    return 10.0 * math.log10(g)


def contrast_from_coefficients(jd: JointDiag, a, m_b: int, m_d: int) -> float:
    """The same ratio evaluated in the eigen-domain: sum |a_v|^2 lam_v / sum |a_v|^2."""
    a = np.asarray(a, dtype=float)
    den = float(a @ a)
    if den == 0:
        return math.inf
    return (m_d / m_b) * float(np.sum(a ** 2 * jd.lam[:a.size])) / den


@dataclass(frozen=True)
class ClosedFormPowers:
    s_b: float
    s_d: float
    lagrangian: float


def closed_form_powers(jd: JointDiag, r_b, sigma_d_sq: float, params: VastParams) -> ClosedFormPowers:
    """Bright distortion, dark residual power and Lagrangian of q(V, mu) from the eigen-data.

    The Lagrangian omits the constant ``-mu * eps`` term.
    """
    params.check(jd.dim)
    proj, denom = _projections(jd, r_b, params.v, params.mu)
    p2 = proj ** 2
    mu = params.mu
    s_b = sigma_d_sq - float(np.sum((jd.lam[:params.v] + 2 * mu) / denom ** 2 * p2))
    s_d = float(np.sum(p2 / denom ** 2))
    lag = sigma_d_sq - float(np.sum(p2 / denom))
    return ClosedFormPowers(s_b, s_d, lag)


def direct_powers(q, sigma_d_sq: float, r_b, R_b, R_d) -> tuple[float, float]:
    """S_B and S_D evaluated from the quadratic forms in q."""
    q = getattr(q, "stacked", q)
    return float(sigma_d_sq - 2 * q @ r_b + q @ R_b @ q), float(q @ R_d @ q)


def default_v_grid(dim: int) -> list[int]:
    """18-point grid over [1, LJ]: 1, LJ/32, LJ/16, LJ/8, 3LJ/16, then LJ/4 to LJ in steps of LJ/16."""
    fr = [1 / 32, 1 / 16, 1 / 8, 3 / 16] + [k / 16 for k in range(4, 17)]
    grid = [1] + [max(1, int(round(f * dim))) for f in fr]
    out = []
    for v in grid:
        if v not in out:
            out.append(min(v, dim))
    return out


@dataclass
class SweepRow:
    v: int
    mu: float
    s_b: float = math.nan
    s_d: float = math.nan
    lagrangian: float = math.nan
    ac_db: float = math.nan
    q_l2_norm: float = math.nan
    error: str | None = None


def _sweep_cell(jd, r_b, sigma_d_sq, v, mu, stats_unweighted) -> SweepRow:
    try:
        params = VastParams(int(v), float(mu))
        bank = solve_vast(jd, r_b, params)
        pw = closed_form_powers(jd, r_b, sigma_d_sq, params)
        ac = acoustic_contrast(bank, stats_unweighted) if stats_unweighted is not None else math.nan
        return SweepRow(params.v, params.mu, pw.s_b, pw.s_d, pw.lagrangian, ac, float(np.linalg.norm(bank.stacked)))
    except (ValueError, ZeroDivisionError, np.linalg.LinAlgError) as exc:
        return SweepRow(int(v), float(mu), error=str(exc))


def sweep(jd: JointDiag, r_b, sigma_d_sq: float, v_grid, mu_grid, stats_unweighted=None, jobs: int = 1) -> list[SweepRow]:
    """Evaluate every (V, mu) cell; failing cells carry an ``error`` and do not stop the sweep.

    Rows are ordered mu-major (all V for the first mu, then the next mu).
    """
    v_grid, mu_grid = list(v_grid), list(mu_grid)
    if not v_grid or not mu_grid:
        raise ValueError("V and mu grids must be nonempty")
    cells = [(v, mu) for mu in mu_grid for v in v_grid]
    run = lambda c: _sweep_cell(jd, r_b, sigma_d_sq, c[0], c[1], stats_unweighted)  # noqa: E731
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            return list(pool.map(run, cells))
    return [run(c) for c in cells]


SWEEP_COLUMNS = ("V", "mu", "s_b", "s_d", "lagrangian", "ac_db", "q_l2_norm")


def write_sweep_csv(path, rows: list[SweepRow], sentinel: float = 200.0) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(SWEEP_COLUMNS + ("error",))
        for r in rows:
            ac = r.ac_db
            if math.isinf(ac):
                ac = math.copysign(sentinel, ac)
            w.writerow([r.v, repr(r.mu), repr(r.s_b), repr(r.s_d), repr(r.lagrangian), repr(ac), repr(r.q_l2_norm), r.error or ""])
