"""Batch experiment runner.

Usage::

    vastzones validate configs/table2.toml
    vastzones run configs/table2.toml --override method.j_len=32 --jobs 2 --out results/

Exit status: 0 on success (including partial failures, which are recorded in
the manifest), 1 when every requested method failed, 2 for configuration
errors.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config, validate_config
from .eig import joint_diagonalize
from .metrics import evaluate, write_metrics_csv
from .percept import averaged_masking_curve, masking_curve, quiet_curve, write_curves_csv
from .pipeline import ScenarioConfig, RenderError, masker_signals, render_two_zone, zone_statistics, desired_field
from .room import RIRSet, generate_rirs
from .signals import AudioSignal, Segmenter, frame_slice, read_wav, write_wav
from .vast import VastParams, sweep, write_sweep_csv

log = logging.getLogger("vastzones")

CACHE_VERSION = "1"


class RunError(RuntimeError):
    pass


# --- inputs --------------------------------------------------------------------

def load_signals(cfg: ExperimentConfig) -> dict[str, np.ndarray]:
    fs = int(cfg.raw["room"]["sample_rate"])
    out = {}
    for i, zone in enumerate(("alpha", "beta")):
        spec = cfg.raw["signals"][zone]
        if spec["kind"] == "wav":
            path = cfg.signal_path(zone)
            if not path.exists():
                raise RunError(f"signals.{zone}: WAV file {path} not found")
            sig = read_wav(path)
            if sig.sample_rate != fs:
                raise RunError(f"signals.{zone}: {path} is sampled at {sig.sample_rate} Hz, expected {fs} Hz")
            x = sig.samples
            if x.ndim == 2:
                log.warning("%s has %d channels; using the first", path, x.shape[1])
                x = x[:, 0]
        else:
            rng = np.random.default_rng([cfg.seed, i])
            n = int(round(float(spec["duration"]) * fs))
            x = float(spec.get("rms", 0.05)) * rng.standard_normal(n)
        out[zone] = x
    if cfg.raw["signals"]["calibrate_energy"]:
        ea, eb = (float(np.sum(out[z] ** 2)) for z in ("alpha", "beta"))
        if ea > 0 and eb > 0:
            out["beta"] = out["beta"] * np.sqrt(ea / eb)
    return out


def _cache_dir(out_dir: Path) -> Path:
    env = os.environ.get("VASTZONES_CACHE")
    return Path(env) if env else out_dir / "rir_cache"


def rir_cache_key(cfg: ExperimentConfig, scene) -> str:
    r = cfg.raw["room"]
    payload = json.dumps({
        "version": CACHE_VERSION, "scene": scene.digest(), "room": r,
    }, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:24]


def obtain_rirs(cfg: ExperimentConfig, scene, out_dir: Path) -> tuple[RIRSet, Path, bool]:
    cache = _cache_dir(out_dir)
    cache.mkdir(parents=True, exist_ok=True)
    path = cache / f"{rir_cache_key(cfg, scene)}.vzrir"
    if path.exists():
        try:
            return RIRSet.load(path), path, True
        except ValueError as exc:
            log.warning("ignoring unreadable RIR cache entry: %s", exc)
    r = cfg.raw["room"]
    rirs = generate_rirs(scene, cfg.room, int(r["k_taps"]), int(r["max_order"]), r["absorption"])
    tmp = path.with_suffix(".tmp")
    rirs.save(tmp)
    tmp.replace(path)
    return rirs, path, False


# --- outputs -------------------------------------------------------------------

class Manifest:
    """Collects run facts and emitted paths; written once at the end as text."""

    def __init__(self, cfg: ExperimentConfig, out_dir: Path):
        self.cfg = cfg
        self.out_dir = out_dir
        self.lines: list[str] = []
        self.files: list[Path] = []

    def add(self, key: str, value) -> None:
        self.lines.append(f"{key}: {value}")

    def file(self, path: Path) -> Path:
        self.files.append(path)
        return path

    def write(self) -> Path:
        path = self.out_dir / "manifest.txt"
        self.files.append(path)
        with open(path, "w") as f:
            f.write("# vastzones run manifest\n")
            f.write(f"config_file: {self.cfg.source}\n")
            f.write(f"seed: {self.cfg.seed}\n")
            f.write("config: " + json.dumps(self.cfg.raw, sort_keys=True) + "\n")
            for line in self.lines:
                f.write(line + "\n")
            f.write("files:\n")
            for p in self.files:
                f.write(f"  {p.relative_to(self.out_dir) if p.is_relative_to(self.out_dir) else p}\n")
        return path


def _scenario(cfg: ExperimentConfig, method: str) -> ScenarioConfig:
    m = cfg.method
    return ScenarioConfig(
        method=method, params=VastParams(cfg.v, float(m["mu"])), j_len=int(m["j_len"]),
        segment_length=int(m["segment_length"]), overlap=int(m["overlap"]),
        weight_taps=int(m["weight_taps"]), regularization=float(m["regularization"]),
    )


def _write_field_wavs(out_dir, method, field, fs, fmt, manifest) -> int:
    clipped = 0
    for zone in ("alpha", "beta"):
        path = manifest.file(out_dir / f"{method}_reproduced_{zone}.wav")
        clipped += write_wav(path, AudioSignal(field[zone].p.T, fs), fmt)
    path = manifest.file(out_dir / f"{method}_superposed.wav")
    clipped += write_wav(path, AudioSignal(field.observed.T, fs), fmt)
    return clipped


def _masking_curves(x, rirs, scene, cfg, scen: ScenarioConfig) -> dict:
    """Averaged and per-segment masking curves at the first control point of each zone."""
    curves = {}
    fs = rirs.sample_rate
    seg = Segmenter(scen.segment_length, scen.overlap, lead_in=True)
    for zone in ("alpha", "beta"):
        oth = "beta" if zone == "alpha" else "alpha"
        masker = masker_signals(x[zone], x[oth], rirs, scene, zone)
        m = int(scene.zone_points(zone)[0])
        per_seg = []
        for i, s in enumerate(seg.starts(masker.shape[1])):
            frame = seg.window * frame_slice(masker[m], s, seg.n_len)
            c = masking_curve(frame, fs, i) if np.any(frame) else quiet_curve(seg.n_len, fs)
            per_seg.append(c)
        curves[f"{zone}/point{m}/average"] = averaged_masking_curve(per_seg)
        for i, c in enumerate(per_seg):
            curves[f"{zone}/point{m}/segment{i:04d}"] = c
    return curves


def _run_sweep(x, rirs, scene, cfg, jobs) -> dict:
    """Closed-form (V, mu) sweep on the unweighted full-signal statistics of each program."""
    out = {}
    j = int(cfg.method["j_len"])
    for zone in ("alpha", "beta"):
        oth = "beta" if zone == "alpha" else "alpha"
        bright, dark = scene.zone_points(zone), scene.zone_points(oth)
        d = desired_field(x[zone], rirs, bright)
        stats = zone_statistics(x[zone], d, rirs, bright, dark, j)
        jd = joint_diagonalize(stats, float(cfg.method["regularization"]))
        out[zone] = sweep(jd, stats.r_b, stats.sigma_d_sq, cfg.v_grid(), cfg.raw["sweep"]["mu_grid"], stats, jobs)
    return out


def run(cfg: ExperimentConfig, out_dir: Path, jobs: int = 1) -> int:
    errors, warnings = validate_config(cfg)
    for w in warnings:
        log.warning(w)
    if errors:
        raise ConfigError("; ".join(errors))
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(cfg, out_dir)
    manifest.add("jobs", jobs)
    for w in warnings:
        manifest.add("warning", w)
    fs = int(cfg.raw["room"]["sample_rate"])
    fmt = cfg.raw["output"]["wav_format"]

    t0 = time.perf_counter()
    scene = cfg.scene()
    rirs, rir_path, cached = obtain_rirs(cfg, scene, out_dir)
    manifest.add("rir_cache", f"{rir_path} ({'loaded' if cached else 'generated'})")
    manifest.add("timing.rirs_s", f"{time.perf_counter() - t0:.6f}")
    x = load_signals(cfg)
    manifest.add("samples", {z: int(v.size) for z, v in x.items()})

    if cfg.raw["output"]["write_wav"]:
        for zone in ("alpha", "beta"):
            d = desired_field(x[zone], rirs, scene.all_zone_points(zone))
            write_wav(manifest.file(out_dir / f"desired_{zone}.wav"), AudioSignal(d.T, fs), fmt)

    rows, failures = [], []
    methods = list(cfg.method["methods"])
    for method in methods:
        scen = _scenario(cfg, method)
        t0 = time.perf_counter()
        try:
            field = render_two_zone(x["alpha"], x["beta"], rirs, scene, scen, jobs)
        except (RenderError, ValueError, ZeroDivisionError, np.linalg.LinAlgError) as exc:
            log.error("%s failed: %s", method, exc)
            failures.append(method)
            manifest.add(f"{method}.error", str(exc))
            continue
        manifest.add(f"{method}.wall_s", f"{time.perf_counter() - t0:.6f}")
        for zone in ("alpha", "beta"):
            rep = field[zone].report
            manifest.add(f"{method}.{zone}.segments", rep.segment_count)
            manifest.add(f"{method}.{zone}.fallbacks", rep.fallback_count)
            manifest.add(f"{method}.{zone}.silent_segments", rep.silent_count)
            for stage in ("gevd", "stats", "masking", "filtering"):
                manifest.add(f"{method}.{zone}.timing.{stage}_s", f"{rep.timings.get(stage, 0.0):.6f}")
        rows.extend(evaluate(field, scene, method, cfg.method["metric_points"]))
        if cfg.raw["output"]["write_wav"]:
            clipped = _write_field_wavs(out_dir, method, field, fs, fmt, manifest)
            if clipped:
                manifest.add(f"{method}.clipped_samples", clipped)
    if rows:
        write_metrics_csv(manifest.file(out_dir / "metrics.csv"), rows)

    if any(m in ("p_vast", "ap_vast") for m in methods):
        t0 = time.perf_counter()
        curves = _masking_curves(x, rirs, scene, cfg, _scenario(cfg, "p_vast"))
        write_curves_csv(manifest.file(out_dir / "masking_curves.csv"), curves)
        manifest.add("timing.masking_csv_s", f"{time.perf_counter() - t0:.6f}")

    sweep_ok = True
    if cfg.raw["sweep"]["enabled"]:
        t0 = time.perf_counter()
        try:
            result = _run_sweep(x, rirs, scene, cfg, jobs)
            for zone, cells in result.items():
                write_sweep_csv(manifest.file(out_dir / f"sweep_{zone}.csv"), cells)
                bad = sum(1 for c in cells if c.error)
                if bad:
                    manifest.add(f"sweep.{zone}.failed_cells", bad)
        except (ValueError, np.linalg.LinAlgError) as exc:
            log.error("sweep failed: %s", exc)
            manifest.add("sweep.error", str(exc))
            sweep_ok = False
        manifest.add("timing.sweep_s", f"{time.perf_counter() - t0:.6f}")

    manifest.add("failed_methods", ",".join(failures) or "none")
    manifest.write()
    total_failure = (methods and len(failures) == len(methods)) or (not methods and not sweep_ok)
    return 1 if total_failure else 0


def validate(cfg: ExperimentConfig) -> int:
    errors, warnings = validate_config(cfg)
    for e in errors:
        print(f"error: {e}")
    for w in warnings:
        print(f"warning: {w}")
    if not errors:
        print(f"ok: L={cfg.l_count}, J={cfg.method['j_len']}, LJ={cfg.dim}, V={cfg.v}, mu={cfg.method['mu']}")
    return 2 if errors else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vastzones", description="Two-zone VAST / P-VAST / AP-VAST experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run", "validate"):
        s = sub.add_parser(name)
        s.add_argument("config", nargs="?", help="TOML experiment file (defaults apply when omitted)")
        s.add_argument("--override", "-o", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted config override, e.g. method.j_len=32 (repeatable)")
        s.add_argument("--jobs", "-j", type=int, default=1)
        s.add_argument("--out", help="output directory (overrides output.directory)")
        s.add_argument("--verbose", "-v", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.override)
        if args.command == "validate":
            return validate(cfg)
        return run(cfg, cfg.output_dir(args.out), max(1, args.jobs))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except RunError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
