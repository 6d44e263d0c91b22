"""Rendering of two-zone scenes with no control, VAST, P-VAST and AP-VAST.

Each input program is rendered on its own (its zone bright, the other zone
dark) and the two reproduced fields are superposed afterwards.

Masker assignment: the masking curve of a control point is always computed
from the desired signal of the program that belongs to that point's zone,
whichever program is currently being designed. Weighting shapes only the
statistics; playback filters the unweighted input.
"""
from __future__ import annotations

import logging
import time
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .eig import CholeskyError, fallback_regularization, joint_diagonalize
from .percept import (DEFAULT_MODEL, averaged_masking_curve, quiet_curve,
                      weighting_filter)
from .room import RIRSet, SceneGeometry
from .signals import Segmenter, fft_convolve, frame_slice, next_pow2
from .stats import (build_stats, build_uncontrolled, filtered_window,
                    rank_condition, uncontrolled_base)
from .vast import ControlFilterBank, VastParams, solve_vast

log = logging.getLogger(__name__)

METHODS = ("no_control", "vast", "p_vast", "ap_vast")
ZONES = ("alpha", "beta")


class RenderError(RuntimeError):
    pass


@dataclass
class ScenarioConfig:
    method: str = "vast"
    params: VastParams = field(default_factory=lambda: VastParams(1, 1.0))
    j_len: int = 240
    segment_length: int = 960
    overlap: int = 480
    weighting: bool | None = None
    weight_taps: int = 129
    regularization: float = 0.0
    masking_model: object = DEFAULT_MODEL

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.weighting is None:
            self.weighting = self.method in ("p_vast", "ap_vast")
        if self.method == "ap_vast" and 2 * self.overlap != self.segment_length:
            raise ValueError("ap_vast needs 50 % overlap (overlap = segment_length / 2)")
        if self.j_len < 1:
            raise ValueError("j_len must be >= 1")

    def segmenter(self) -> Segmenter:
        return Segmenter(self.segment_length, self.overlap, lead_in=True)


@dataclass
class RenderReport:
    method: str
    zone: str
    segment_count: int = 0
    fallback_count: int = 0
    silent_count: int = 0
    timings: dict = field(default_factory=lambda: defaultdict(float))


@dataclass
class RenderedField:
    """Reproduced pressure ``p`` and desired pressure ``d`` at every receiver, one program."""

    p: np.ndarray
    d: np.ndarray
    zone: str
    method: str
    filters: list
    window: tuple[int, int]
    report: RenderReport


@dataclass
class TwoZoneField:
    alpha: RenderedField
    beta: RenderedField

    @property
    def observed(self) -> np.ndarray:
        return self.alpha.p + self.beta.p

    def __getitem__(self, zone: str) -> RenderedField:
        return getattr(self, zone)


def other(zone: str) -> str:
    return "beta" if zone == "alpha" else "alpha"


def _samples(x) -> np.ndarray:
    return np.asarray(getattr(x, "samples", x), dtype=float)


def desired_field(x, rirs: RIRSet, bright_points) -> np.ndarray:
    """d_m = h_mz * x at bright receivers, zero elsewhere; shape (M, len(x) + K - 1)."""
    x = _samples(x)
    d = np.zeros((rirs.n_points, x.size + rirs.n_taps - 1))
    bright_points = np.asarray(bright_points, dtype=int)
    if bright_points.size:
        d[bright_points] = fft_convolve(x[None, :], rirs.h_virtual[bright_points])
    return d


def loudspeaker_signals(x, bank: ControlFilterBank) -> np.ndarray:
    """s_l = q_l * x, shape (L, len(x) + J - 1)."""
    return fft_convolve(_samples(x)[None, :], bank.q)


def propagate(s: np.ndarray, rirs: RIRSet) -> np.ndarray:
    """Receiver pressures p_m = sum_l h_ml * s_l for loudspeaker signals ``s`` (L, T)."""
    n_out = s.shape[-1] + rirs.n_taps - 1
    nfft = next_pow2(n_out)
    S = np.fft.rfft(s, nfft)
    p = np.empty((rirs.n_points, n_out))
    for m in range(rirs.n_points):
        p[m] = np.fft.irfft(np.sum(S * np.fft.rfft(rirs.h[m], nfft), axis=0), nfft)[:n_out]
    return p


def reproduce(x, rirs: RIRSet, bank: ControlFilterBank) -> np.ndarray:
    """Reproduced pressure at every receiver for a fixed filter bank."""
    return propagate(loudspeaker_signals(x, bank), rirs)


def masker_signals(x_own, x_other, rirs: RIRSet, scene: SceneGeometry, zone: str) -> np.ndarray:
    """Per-receiver masker: each zone's own desired signal; silence where that program is absent."""
    own = desired_field(x_own, rirs, scene.all_zone_points(zone))
    if x_other is None:
        return own
    oth = desired_field(x_other, rirs, scene.all_zone_points(other(zone)))
    n = max(own.shape[1], oth.shape[1])
    return frame_slice(own, 0, n) + frame_slice(oth, 0, n)


def _pad(a: np.ndarray, n: int) -> np.ndarray:
    return frame_slice(a, 0, n)


def solve_with_fallback(stats, params: VastParams, regularization: float, report: RenderReport, k_taps: int):
    """Joint diagonalization plus filter solve, retrying once with diagonal loading."""
    t0 = time.perf_counter()
    try:
        jd = joint_diagonalize(stats, regularization)
    except CholeskyError:
        reg = max(regularization, fallback_regularization(stats.R_d))
        if reg <= regularization:
            diag = rank_condition(stats, stats.m_d, stats.n_obs, k_taps, stats.l_count, stats.j_len)
            raise RenderError(f"R_D is singular and cannot be regularized ({diag.message()})")
        log.info("Cholesky failed; retrying with regularization %.3e", reg)
        report.fallback_count += 1
        try:
            jd = joint_diagonalize(stats, reg)
        except CholeskyError as exc:
            diag = rank_condition(stats, stats.m_d, stats.n_obs, k_taps, stats.l_count, stats.j_len)
            raise RenderError(f"joint diagonalization failed after regularization: {diag.message()}") from exc
    report.timings["gevd"] += time.perf_counter() - t0
    params.check(jd.dim)
    return solve_vast(jd, stats.r_b, params)


def zone_statistics(x, d, rirs, bright, dark, j_len, weighting=None, start=0, n_obs=None, base=None):
    """Spatial statistics for one program: ``d`` holds desired signals for all receivers.

    ``weighting`` maps receiver index to filter (or is ``None``); ``base``
    holds :func:`uncontrolled_base` rows for ``bright`` followed by ``dark``.
    """
    bright = np.asarray(bright, dtype=int)
    dark = np.asarray(dark, dtype=int)
    if base is None:
        base = uncontrolled_base(x, rirs, np.concatenate([bright, dark]))
    if n_obs is None:
        n_obs = base.shape[-1] + j_len - 1
    wb = None if weighting is None else [weighting[m] for m in bright]
    wd = None if weighting is None else [weighting[m] for m in dark]
    nb = bright.size
    resp_b = build_uncontrolled(x, rirs, bright, j_len, wb, start, n_obs, base[:nb])
    resp_d = build_uncontrolled(x, rirs, dark, j_len, wd, start, n_obs, base[nb:])
    if wb is None:
        dt = frame_slice(d[bright], start, n_obs)
    else:
        dt = np.stack([filtered_window(d[m], start, n_obs, w) for m, w in zip(bright, wb)])
    return build_stats(dt, resp_b, resp_d, n_obs)


def _averaged_weighting(masker: np.ndarray, points, config: ScenarioConfig, fs: int) -> dict:
    seg = config.segmenter()
    weights = {}
    for m in points:
        starts = seg.starts(masker.shape[1])
        curves = [config.masking_model(seg.window * frame_slice(masker[m], s, seg.n_len), fs) for s in starts]
        weights[m] = weighting_filter(averaged_masking_curve(curves), config.weight_taps, point=m)
    return weights


def render_static(x, rirs: RIRSet, scene: SceneGeometry, config: ScenarioConfig, zone: str = "alpha", x_other=None) -> RenderedField:
    """Render one program with a single filter bank for the whole signal.

    ``x_other`` is the other zone's program; it only supplies maskers for the
    dark-zone control points under P-VAST (silence when absent).
    """
    if config.method not in ("no_control", "vast", "p_vast"):
        raise ValueError(f"render_static does not handle {config.method!r}")
    x = _samples(x)
    report = RenderReport(config.method, zone, segment_count=1)
    bright, dark = scene.zone_points(zone), scene.zone_points(other(zone))
    d = desired_field(x, rirs, scene.all_zone_points(zone))
    if config.method == "no_control":
        bank = ControlFilterBank.delta(rirs.n_loudspeakers, config.j_len)
    else:
        weighting = None
        t0 = time.perf_counter()
        if config.weighting:
            masker = masker_signals(x, x_other, rirs, scene, zone)
            weighting = _averaged_weighting(masker, np.concatenate([bright, dark]), config, rirs.sample_rate)
        report.timings["masking"] += time.perf_counter() - t0
        t0 = time.perf_counter()
        stats = zone_statistics(x, d, rirs, bright, dark, config.j_len, weighting)
        report.timings["stats"] += time.perf_counter() - t0
        bank = solve_with_fallback(stats, config.params, config.regularization, report, rirs.n_taps)
    t0 = time.perf_counter()
    p = reproduce(x, rirs, bank)
    report.timings["filtering"] += time.perf_counter() - t0
    return RenderedField(p, _pad(d, p.shape[1]), zone, config.method, [bank], (0, p.shape[1]), report)


def render_ap_vast(x, rirs: RIRSet, scene: SceneGeometry, config: ScenarioConfig, zone: str = "alpha", x_other=None) -> RenderedField:
    """Segment-wise adaptive rendering of one program.

    Per segment: masking curves of the windowed maskers, weighting filters,
    weighted statistics over the segment's observations (with signal history),
    joint diagonalization and filter solve; the input frame, windowed by the
    squared sine window (analysis times synthesis), is filtered by linear
    convolution and overlap-added into the loudspeaker signals, which are
    finally propagated through the RIRs.
    """
    if config.method != "ap_vast":
        raise ValueError("render_ap_vast needs method='ap_vast'")
    x = _samples(x)
    seg = config.segmenter()
    report = RenderReport("ap_vast", zone)
    bright, dark = scene.zone_points(zone), scene.zone_points(other(zone))
    control = np.concatenate([bright, dark])
    d = desired_field(x, rirs, scene.all_zone_points(zone))
    masker = masker_signals(x, x_other, rirs, scene, zone) if config.weighting else None
    base = uncontrolled_base(x, rirs, control)
    starts = seg.starts(x.size)
    report.segment_count = len(starts)
    n, j, L = seg.n_len, config.j_len, rirs.n_loudspeakers
    fs = rirs.sample_rate
    out_len = x.size + j - 1
    speakers = np.zeros((L, out_len))
    g2 = seg.window ** 2
    filters = []
    for i, s in enumerate(starts):
        t0 = time.perf_counter()
        weighting = None
        if config.weighting:
            weighting = {}
            for m in control:
                frame = seg.window * frame_slice(masker[m], s, n)
                curve = config.masking_model(frame, fs, i) if np.any(frame) else quiet_curve(n, fs)
                weighting[m] = weighting_filter(curve, config.weight_taps, point=m)
        report.timings["masking"] += time.perf_counter() - t0
        t0 = time.perf_counter()
        stats = zone_statistics(x, d, rirs, bright, dark, j, weighting, start=s, n_obs=n, base=base)
        report.timings["stats"] += time.perf_counter() - t0
        if not np.any(stats.R_d) and not np.any(stats.r_b):
            report.silent_count += 1
            bank = ControlFilterBank(np.zeros((L, j)))
        else:
            bank = solve_with_fallback(stats, config.params, config.regularization, report, rirs.n_taps)
        filters.append(bank)
        t0 = time.perf_counter()
        frame = g2 * frame_slice(x, s, n)
        if np.any(frame) and np.any(bank.q):
            nfft = next_pow2(n + j - 1)
            y = np.fft.irfft(np.fft.rfft(frame, nfft)[None, :] * np.fft.rfft(bank.q, nfft), nfft)[:, :n + j - 1]
            lo, hi = max(s, 0), min(s + n + j - 1, out_len)
            speakers[:, lo:hi] += y[:, lo - s:hi - s]
        report.timings["filtering"] += time.perf_counter() - t0
    t0 = time.perf_counter()
    p = propagate(speakers, rirs)
    report.timings["filtering"] += time.perf_counter() - t0
    window = (n, p.shape[1] - n)
    return RenderedField(p, _pad(d, p.shape[1]), zone, "ap_vast", filters, window, report)


def render(x, rirs, scene, config, zone="alpha", x_other=None) -> RenderedField:
    fn = render_ap_vast if config.method == "ap_vast" else render_static
    return fn(x, rirs, scene, config, zone, x_other)


def render_two_zone(x_alpha, x_beta, rirs: RIRSet, scene: SceneGeometry, config: ScenarioConfig, jobs: int = 1) -> TwoZoneField:
    """Render both programs (alpha bright for x_alpha, beta bright for x_beta) on a common time axis."""
    xa, xb = _samples(x_alpha), _samples(x_beta)
    n = max(xa.size, xb.size)
    xa, xb = _pad(xa, n), _pad(xb, n)
    tasks = [(xa, "alpha", xb), (xb, "beta", xa)]
    if jobs > 1:
        with ThreadPoolExecutor(2) as pool:
            fa, fb = pool.map(lambda t: render(t[0], rirs, scene, config, t[1], t[2]), tasks)
    else:
        fa, fb = (render(t[0], rirs, scene, config, t[1], t[2]) for t in tasks)
    return TwoZoneField(fa, fb)
