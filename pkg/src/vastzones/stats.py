"""Spatial correlation statistics of the (optionally weighted) uncontrolled field.

For a control point ``m`` the uncontrolled response vector stacks, for each
loudspeaker ``l``, the ``J`` most recent samples of ``z_ml = w_m * x * h_ml``::

    y_m[n] = [z_m1[n], ..., z_m1[n-J+1], ..., z_mL[n], ..., z_mL[n-J+1]]

so that the reproduced (weighted) pressure is ``y_m[n] @ q``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .signals import fft_convolve, frame_slice, next_pow2

CHUNK_ROWS = 4096


def _taps_and_delay(w) -> tuple[np.ndarray, int]:
    taps = np.asarray(getattr(w, "taps", w), dtype=float)
    return taps, getattr(w, "delay", 0)


def filtered_window(sig: np.ndarray, start: int, length: int, weighting=None) -> np.ndarray:
    """``(w * sig)[start:start+length]`` along the last axis, advanced by the filter's group delay.

    ``sig`` is taken as zero outside its support. ``weighting`` may be a tap
    array or an object with ``taps`` and ``delay`` attributes; ``None`` is
    the identity.
    """
    if weighting is None:
        return frame_slice(sig, start, length)
    taps, delay = _taps_and_delay(weighting)
    pad = taps.size - 1
    src = frame_slice(sig, start + delay - pad, length + pad)
    out = fft_convolve(src, taps)
    return out[..., pad:pad + length]


@dataclass
class UncontrolledResponses:
    """Per-point loudspeaker signals ``z[m, l, t]`` covering ``[start - J + 1, start + n_obs)``."""

    z: np.ndarray
    j_len: int
    start: int
    n_obs: int

    @property
    def n_points(self) -> int:
        return self.z.shape[0]

    @property
    def l_count(self) -> int:
        return self.z.shape[1]

    @property
    def dim(self) -> int:
        return self.l_count * self.j_len

    def matrix(self, m: int, rows: slice = slice(None)) -> np.ndarray:
        """Rows ``y_m[start + n]^T`` for ``n`` in ``rows``; shape (n, L*J)."""
        win = sliding_window_view(self.z[m], self.j_len, axis=-1)[:, rows, ::-1]
        return np.concatenate(list(win), axis=1)

    def vector(self, m: int, n: int) -> np.ndarray:
        """``y_m[start + n]`` (local observation index ``n``)."""
        return self.matrix(m, slice(n, n + 1))[0]


def uncontrolled_base(x, rirs, points) -> np.ndarray:
    """``u[m, l] = x * h_ml`` for the selected receivers, full length."""
    x = np.asarray(getattr(x, "samples", x), dtype=float)
    h = rirs.h[np.asarray(points, dtype=int)]
    return fft_convolve(x[None, None, :], h)


def build_uncontrolled(
    x,
    rirs,
    points,
    j_len: int,
    weighting=None,
    start: int = 0,
    n_obs: int | None = None,
    base: np.ndarray | None = None,
) -> UncontrolledResponses:
    """Uncontrolled responses at ``points`` for observations ``[start, start + n_obs)``.

    ``weighting`` is a sequence with one filter per point (or ``None``).
    ``base`` may carry precomputed :func:`uncontrolled_base` output for the
    same points, which lets segment-wise callers reuse the RIR convolutions.
    ``n_obs`` defaults to the full support of ``x * h`` plus ``J - 1``.
    """
    if j_len < 1:
        raise ValueError("filter length must be >= 1")
    points = np.asarray(points, dtype=int)
    if base is None:
        base = uncontrolled_base(x, rirs, points)
    if n_obs is None:
        n_obs = base.shape[-1] + j_len - 1
    if weighting is not None and len(weighting) < len(points):
        raise ValueError(f"weighting filters cover {len(weighting)} points, need {len(points)}")
    span = n_obs + j_len - 1
    lo = start - j_len + 1
    if weighting is None:
        z = frame_slice(base, lo, span)
    else:
        z = np.stack([filtered_window(base[i], lo, span, weighting[i]) for i in range(len(points))])
    return UncontrolledResponses(z, j_len, start, n_obs)


@dataclass
class SpatialStats:
    sigma_d_sq: float
    r_b: np.ndarray
    R_b: np.ndarray
    R_d: np.ndarray
    m_b: int
    m_d: int
    n_obs: int
    l_count: int
    j_len: int

    @property
    def dim(self) -> int:
        return self.r_b.shape[0]


def _accumulate_direct(resp: UncontrolledResponses, desired: np.ndarray | None):
    """Dense accumulation of sum_m sum_n y y^T and y d over explicit Toeplitz rows."""
    dim = resp.dim
    R = np.zeros((dim, dim))
    r = np.zeros(dim)
    for m in range(resp.n_points):
        for c0 in range(0, resp.n_obs, CHUNK_ROWS):
            rows = slice(c0, min(c0 + CHUNK_ROWS, resp.n_obs))
            Y = resp.matrix(m, rows)
            R += Y.T @ Y
            if desired is not None:
                r += Y.T @ desired[m, rows]
    return R, r


def _accumulate(resp: UncontrolledResponses, desired: np.ndarray | None):
    """Same sums as :func:`_accumulate_direct`, exploiting the block-Toeplitz structure.

    With ``a = J-1-j`` the entry for loudspeakers (l, l') is
    ``C(a, b) = sum_n z_l[n+a] z_l'[n+b]``. The lag-0 edge ``C(e, 0)`` is a
    windowed cross-correlation (FFT); every other entry on the diagonal
    follows from ``C(a+1, b+1) = C(a, b) - z_l[a] z_l'[b] + z_l[N+a] z_l'[N+b]``.
    """
    z, n_obs, J, L = resp.z, resp.n_obs, resp.j_len, resp.l_count
    # lags 0..J-1 only: circular wrap of the negative lags stays clear of them
    nfft = next_pow2(z.shape[-1])
    G = np.zeros((L, L, nfft // 2 + 1), dtype=complex)
    g = np.zeros((L, nfft // 2 + 1), dtype=complex)
    for m in range(resp.n_points):
        FA = np.conj(np.fft.rfft(z[m, :, :n_obs], nfft))
        FB = np.fft.rfft(z[m], nfft)
        # G[l', l] correlates the window of z_l' with the lagged z_l
        G += FA[:, None, :] * FB[None, :, :]
        if desired is not None:
            g += np.conj(np.fft.rfft(desired[m], nfft))[None, :] * FB
    edge = np.fft.irfft(G, nfft)[..., :J]  # edge[l', l, e] = C_{l l'}(e, 0)
    edge = np.swapaxes(edge, 0, 1)

    C = np.zeros((L, J, L, J))  # C[l, a, l', b]
    head = z[:, :, :2 * J]
    tail = z[:, :, n_obs:n_obs + 2 * J]
    for e in range(J):
        k = J - 1 - e  # number of steps along this diagonal
        if k:
            delta = (np.einsum("mlk,mpk->lpk", tail[:, :, e:e + k], tail[:, :, :k])
                     - np.einsum("mlk,mpk->lpk", head[:, :, e:e + k], head[:, :, :k]))
            diag = edge[:, :, e, None] + np.concatenate([np.zeros((L, L, 1)), np.cumsum(delta, axis=-1)], axis=-1)
        else:
            diag = edge[:, :, e, None]
        b = np.arange(k + 1)
        C[:, e + b, :, b] = np.transpose(diag, (2, 0, 1))
    # upper triangle (a < b) from symmetry: C_{ll'}(a, b) = C_{l'l}(b, a)
    a_idx, b_idx = np.triu_indices(J, 1)
    C[:, a_idx, :, b_idx] = np.transpose(C[:, b_idx, :, a_idx], (0, 2, 1))
    # a = J-1-j: reverse the tap axes to return to (l, j) ordering
    R = C[:, ::-1, :, ::-1].reshape(L * J, L * J)
    r = np.zeros(L * J)
    if desired is not None:
        r = np.fft.irfft(g, nfft)[:, :J][:, ::-1].reshape(-1)
    return R, r


def build_stats(desired, resp_b: UncontrolledResponses, resp_d: UncontrolledResponses, n_obs: int | None = None) -> SpatialStats:
    """Average second-order statistics over points and observations.

    ``desired[m, n]`` is the (weighted) desired pressure at bright point ``m``
    and local observation ``n``, aligned with ``resp_b``.
    """
    n_obs = resp_b.n_obs if n_obs is None else n_obs
    if n_obs < 1:
        raise ValueError("need at least one observation")
    if resp_b.dim != resp_d.dim or resp_b.j_len != resp_d.j_len:
        raise ValueError(f"bright ({resp_b.dim}) and dark ({resp_d.dim}) responses differ in size")
    if resp_b.n_obs != n_obs or resp_d.n_obs != n_obs:
        raise ValueError("responses and n_obs disagree on the observation count")
    desired = np.asarray(desired, dtype=float)
    if desired.shape != (resp_b.n_points, n_obs):
        raise ValueError(f"desired signals have shape {desired.shape}, expected {(resp_b.n_points, n_obs)}")
    m_b, m_d = resp_b.n_points, resp_d.n_points
    R_b, r_b = _accumulate(resp_b, desired)
    R_d, _ = _accumulate(resp_d, None)
    R_b = (R_b + R_b.T) / (2.0 * m_b * n_obs)
    R_d = (R_d + R_d.T) / (2.0 * m_d * n_obs)
    return SpatialStats(
        sigma_d_sq=float(np.sum(desired ** 2)) / (m_b * n_obs),
        r_b=r_b / (m_b * n_obs),
        R_b=R_b,
        R_d=R_d,
        m_b=m_b,
        m_d=m_d,
        n_obs=n_obs,
        l_count=resp_b.l_count,
        j_len=resp_b.j_len,
    )


@dataclass
class RankDiagnostic:
    condition_met: bool
    lhs: int
    dim: int
    estimated_rank: int | None

    def message(self) -> str:
        rank = "" if self.estimated_rank is None else f", numerical rank of R_D = {self.estimated_rank}"
        verdict = "satisfied" if self.condition_met else "VIOLATED"
        return f"M_D*min(N, K+J-1) = {self.lhs} vs LJ = {self.dim}: {verdict}{rank}"


def numerical_rank(R: np.ndarray, rtol: float = 1e-10) -> int:
    s = np.linalg.svd(R, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.count_nonzero(s > rtol * s[0]))


def rank_condition(stats: SpatialStats | None, m_d: int, n_obs: int, k_taps: int, l_count: int, j_len: int) -> RankDiagnostic:
    """Check the sufficient-sample bound M_D * min(N, K + J - 1) >= L J for a full-rank R_D."""
    lhs = m_d * min(n_obs, k_taps + j_len - 1)
    dim = l_count * j_len
    rank = None if stats is None else numerical_rank(stats.R_d)
    return RankDiagnostic(lhs >= dim, lhs, dim, rank)
