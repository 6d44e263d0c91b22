"""Physical evaluation metrics: acoustic contrast, normalized signal distortion power, TIR."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

SENTINEL_DB = 200.0
Z_95 = 1.96


def _window(a: np.ndarray, window) -> np.ndarray:
    if window is None:
        return a
    lo, hi = window
    if hi <= lo:
        raise ValueError(f"empty metric window [{lo}, {hi})")
    return a[..., lo:hi]


def _db_ratio(num: float, den: float) -> float:
    if den <= 0:
        return math.inf if num > 0 else math.nan
    if num <= 0:
        return -math.inf
    return 10.0 * math.log10(num / den)


def acoustic_contrast_db(p: np.ndarray, bright, dark, window=None) -> float:
    """10 log10[(M_D / M_B) sum |p_bright|^2 / sum |p_dark|^2]; +inf for a silent dark zone."""
    bright, dark = np.asarray(bright, dtype=int), np.asarray(dark, dtype=int)
    p = _window(np.asarray(p, dtype=float), window)
    eb = float(np.sum(p[bright] ** 2))
    ed = float(np.sum(p[dark] ** 2))
    return _db_ratio(dark.size * eb, bright.size * ed)


def nsdp_db(p_m: np.ndarray, d_m: np.ndarray, window=None, point=None) -> float:
    """10 log10[sum |p - d|^2 / sum |d|^2] at one point; -inf for perfect reproduction."""
    p_m = _window(np.asarray(p_m, dtype=float), window)
    d_m = _window(np.asarray(d_m, dtype=float), window)
    ed = float(np.sum(d_m ** 2))
    if ed <= 0:
        raise ValueError(f"point {point}: desired signal has zero energy")
    return _db_ratio(float(np.sum((p_m - d_m) ** 2)), ed)


def tir_db(p_target: np.ndarray, p_interferer: np.ndarray, window=None) -> float:
    """10 log10[sum |p_target|^2 / sum |p_interferer|^2] at one point; +inf without interference."""
    et = float(np.sum(_window(np.asarray(p_target, dtype=float), window) ** 2))
    ei = float(np.sum(_window(np.asarray(p_interferer, dtype=float), window) ** 2))
    return _db_ratio(et, ei)


@dataclass
class Aggregate:
    mean: float
    ci_half_width: float | None
    n_points: int
    excluded: int = 0


def aggregate(values) -> Aggregate:
    """Mean and normal-approximation 95 % CI half-width; non-finite values are excluded."""
    values = np.asarray(list(values), dtype=float)
    if values.size == 0:
        raise ValueError("need at least one value")
    finite = values[np.isfinite(values)]
    excluded = values.size - finite.size
    if finite.size == 0:
        return Aggregate(math.nan, None, 0, excluded)
    ci = None
    if finite.size >= 2:
        ci = Z_95 * float(np.std(finite, ddof=1)) / math.sqrt(finite.size)
    return Aggregate(float(np.mean(finite)), ci, int(finite.size), excluded)


def clamp_db(v: float, sentinel: float = SENTINEL_DB) -> float:
    if math.isinf(v):
        return math.copysign(sentinel, v)
    return v


@dataclass
class MetricRow:
    method: str
    zone: str
    signal: str
    metric: str
    mean: float
    ci_half_width: float | None
    n_points: int
    values: tuple = ()


def evaluate(field, scene, method: str, points: str = "monitor") -> list[MetricRow]:
    """AC and nSDP per program (in its bright zone) and TIR per zone.

    ``field`` is a :class:`~vastzones.pipeline.TwoZoneField`; ``points`` is
    ``"monitor"`` or ``"control"``. Monitor points fall back to control
    points when the scene has none.
    """
    idx = scene.indices()
    kind = points if points == "control" or idx["monitor_alpha"].size else "control"
    zone_pts = {z: idx[f"{kind}_{z}"] for z in ("alpha", "beta")}
    rows = []
    for zone in ("alpha", "beta"):
        own, oth = field[zone], field["beta" if zone == "alpha" else "alpha"]
        win = own.window
        bright, dark = zone_pts[zone], zone_pts["beta" if zone == "alpha" else "alpha"]
        ac = acoustic_contrast_db(own.p, bright, dark, win)
        rows.append(MetricRow(method, zone, zone, "ac_db", ac, None, 1, (ac,)))
        nsdp = [nsdp_db(own.p[m], own.d[m], win, m) for m in bright]
        a = aggregate(nsdp)
        rows.append(MetricRow(method, zone, zone, "nsdp_db", a.mean, a.ci_half_width, a.n_points, tuple(nsdp)))
        tir = [tir_db(own.p[m], oth.p[m], win) for m in bright]
        a = aggregate(tir)
        rows.append(MetricRow(method, zone, "both", "tir_db", a.mean, a.ci_half_width, a.n_points, tuple(tir)))
    return rows


METRIC_COLUMNS = ("method", "zone", "signal", "metric", "mean", "ci_half_width", "n_points")


def write_metrics_csv(path, rows: list[MetricRow]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(METRIC_COLUMNS)
        for r in rows:
            ci = "" if r.ci_half_width is None else repr(r.ci_half_width)
            w.writerow([r.method, r.zone, r.signal, r.metric, repr(clamp_db(r.mean)), ci, r.n_points])
