"""Experiment configuration: TOML file -> validated dataclasses.

Defaults reproduce the simulation parameters of the two-zone circular-array
set-up (fs = 16 kHz, c = 343 m/s, K = 3200, J = 240, L = 8, 25 control and
16 monitor points per zone).
"""
from __future__ import annotations

import copy
import re
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .pipeline import METHODS
from .room import RoomSpec, SceneGeometry, circular_scene

DEFAULTS = {
    "seed": 0,
    "room": {
        "t60": 0.0,
        "dimensions": [8.0, 6.0, 3.0],
        "speed_of_sound": 343.0,
        "sample_rate": 16000,
        "k_taps": 3200,
        "max_order": 10,
        "absorption": "sabine",
    },
    "scene": {
        "layout": "circular",
        "n_loudspeakers": 8,
        "radius": 2.0,
        "zone_distance": 2.0,
        "spacing": 0.05,
        "grid": 5,
        "height": 1.5,
        "virtual_source_loudspeaker": 7,
        "virtual_source_offset": 0.5,
        "center": [4.0, 3.0],
    },
    "signals": {
        "alpha": {"kind": "noise", "duration": 6.0, "rms": 0.05},
        "beta": {"kind": "noise", "duration": 6.0, "rms": 0.05},
        "calibrate_energy": True,
    },
    "method": {
        "methods": ["no_control", "vast", "p_vast", "ap_vast"],
        "v": "LJ/4",
        "mu": 1.0,
        "j_len": 240,
        "segment_length": 960,
        "overlap": 480,
        "weight_taps": 129,
        "regularization": 0.0,
        "metric_points": "monitor",
    },
    "sweep": {
        "enabled": True,
        "v_grid": [],
        "mu_grid": [0.0, 0.1, 1.0, 10.0, 100.0],
    },
    "output": {
        "directory": "vastzones_out",
        "wav_format": "float32",
        "write_wav": True,
    },
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, new: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in new.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config field '{where}'")
        if isinstance(base[key], dict) and key not in ("alpha", "beta"):
            if not isinstance(val, dict):
                raise ConfigError(f"'{where}' must be a table")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = val
    return out


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_override(raw: dict, item: str) -> None:
    """Apply ``dotted.key=value``; the value is parsed as a TOML literal when possible."""
    if "=" not in item:
        raise ConfigError(f"override '{item}' is not of the form key=value")
    key, text = item.split("=", 1)
    parts = key.strip().split(".")
    node = raw
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override '{key}': '{p}' is not a table")
    node[parts[-1]] = _parse_value(text.strip())


def resolve_v(v, dim: int) -> int:
    """Accept an integer or an expression like ``"LJ"``, ``"LJ/4"``, ``"3LJ/4"``."""
    if isinstance(v, int):
        return v
    m = re.fullmatch(r"\s*(\d*)\s*LJ\s*(?:/\s*(\d+))?\s*", str(v))
    if not m:
        raise ConfigError(f"method.v: cannot interpret {v!r} (use an integer or e.g. 'LJ/4')")
    num = int(m.group(1) or 1)
    den = int(m.group(2) or 1)
    return max(1, (num * dim) // den)


@dataclass
class ExperimentConfig:
    raw: dict
    source: Path | None = None
    base_dir: Path = field(default_factory=Path.cwd)

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def room(self) -> RoomSpec:
        r = self.raw["room"]
        dims = tuple(r["dimensions"]) if r["t60"] > 0 else None
        return RoomSpec(dims, float(r["t60"]), float(r["speed_of_sound"]), int(r["sample_rate"]))

    @property
    def k_taps(self) -> int:
        return int(self.raw["room"]["k_taps"])

    def scene(self) -> SceneGeometry:
        s = self.raw["scene"]
        if s["layout"] == "circular":
            center = tuple(s["center"]) if self.raw["room"]["t60"] > 0 else (0.0, 0.0)
            return circular_scene(
                n_loudspeakers=int(s["n_loudspeakers"]), radius=s["radius"], zone_distance=s["zone_distance"],
                spacing=s["spacing"], grid=int(s["grid"]), height=s["height"],
                virtual_source_loudspeaker=int(s["virtual_source_loudspeaker"]),
                virtual_source_offset=s["virtual_source_offset"], center=center,
            )
        if s["layout"] == "explicit":
            try:
                return SceneGeometry(
                    loudspeakers=s["loudspeakers"], control_alpha=s["control_alpha"], control_beta=s["control_beta"],
                    virtual_source=s["virtual_source"], monitor_alpha=s.get("monitor_alpha"),
                    monitor_beta=s.get("monitor_beta"),
                )
            except KeyError as exc:
                raise ConfigError(f"scene.{exc.args[0]} is required for an explicit layout") from exc
        raise ConfigError(f"scene.layout must be 'circular' or 'explicit', got {s['layout']!r}")

    @property
    def method(self) -> dict:
        return self.raw["method"]

    @property
    def l_count(self) -> int:
        s = self.raw["scene"]
        return int(s["n_loudspeakers"]) if s["layout"] == "circular" else len(s["loudspeakers"])

    @property
    def dim(self) -> int:
        return self.l_count * int(self.method["j_len"])

    @property
    def v(self) -> int:
        return resolve_v(self.method["v"], self.dim)

    def v_grid(self) -> list[int]:
        from .vast import default_v_grid
        grid = self.raw["sweep"]["v_grid"]
        return [resolve_v(v, self.dim) for v in grid] if grid else default_v_grid(self.dim)

    def signal_path(self, zone: str) -> Path | None:
        spec = self.raw["signals"][zone]
        if spec.get("kind") != "wav":
            return None
        p = Path(spec["path"])
        return p if p.is_absolute() else self.base_dir / p

    def output_dir(self, override: str | None = None) -> Path:
        d = Path(override or self.raw["output"]["directory"])
        return d if d.is_absolute() else self.base_dir / d


# "scene" can hold explicit position lists that are absent from DEFAULTS
_FREE_SCENE_KEYS = {"loudspeakers", "control_alpha", "control_beta", "monitor_alpha", "monitor_beta", "virtual_source"}


def load_config(path=None, overrides=()) -> ExperimentConfig:
    raw: dict = {}
    base_dir = Path.cwd()
    if path is not None:
        path = Path(path)
        try:
            raw = tomllib.loads(path.read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file {path} not found") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        base_dir = path.parent.resolve()
    for item in overrides:
        apply_override(raw, item)
    scene_extra = {k: raw.get("scene", {}).pop(k) for k in list(raw.get("scene", {})) if k in _FREE_SCENE_KEYS}
    merged = _merge(DEFAULTS, raw)
    merged["scene"].update(scene_extra)
    return ExperimentConfig(merged, path, base_dir)


def validate_config(cfg: ExperimentConfig) -> tuple[list[str], list[str]]:
    """Return (errors, warnings) for a loaded configuration."""
    from .stats import rank_condition

    errors, warnings = [], []
    raw, m = cfg.raw, cfg.method
    try:
        room = cfg.room
    except (ValueError, TypeError) as exc:
        errors.append(f"room: {exc}")
        room = None
    if int(raw["room"]["k_taps"]) < 1:
        errors.append("room.k_taps must be >= 1")
    if raw["room"]["absorption"] not in ("sabine", "eyring"):
        errors.append("room.absorption must be 'sabine' or 'eyring'")
    try:
        scene = cfg.scene()
        if room is not None:
            scene.check_inside(room)
    except (ValueError, TypeError) as exc:
        errors.append(f"scene: {exc}")
        scene = None
    for name in m["methods"]:
        if name not in METHODS:
            errors.append(f"method.methods: unknown method {name!r}")
    if int(m["j_len"]) < 1:
        errors.append("method.j_len must be >= 1")
    dim = cfg.dim
    try:
        v = cfg.v
        if not 1 <= v <= dim:
            errors.append(f"method.v = {v} outside [1, LJ = {dim}]")
    except ConfigError as exc:
        errors.append(str(exc))
    if not float(m["mu"]) >= 0:
        errors.append(f"method.mu = {m['mu']} must be >= 0")
    if float(m["regularization"]) < 0:
        errors.append("method.regularization must be >= 0")
    n, eta = int(m["segment_length"]), int(m["overlap"])
    if n < 64 or n % 2:
        errors.append("method.segment_length must be even and >= 64")
    if "ap_vast" in m["methods"] and 2 * eta != n:
        errors.append("method.overlap must equal segment_length / 2 for ap_vast")
    if int(m["weight_taps"]) % 2 == 0 or int(m["weight_taps"]) > n:
        errors.append("method.weight_taps must be odd and <= segment_length")
    if m["metric_points"] not in ("monitor", "control"):
        errors.append("method.metric_points must be 'monitor' or 'control'")
    try:
        for v in cfg.v_grid():
            if not 1 <= v <= dim:
                errors.append(f"sweep.v_grid: V = {v} outside [1, LJ = {dim}]")
    except ConfigError as exc:
        errors.append(f"sweep.v_grid: {exc}")
    for mu in raw["sweep"]["mu_grid"]:
        if not float(mu) >= 0:
            errors.append(f"sweep.mu_grid: mu = {mu} must be >= 0")
    for zone in ("alpha", "beta"):
        spec = raw["signals"][zone]
        kind = spec.get("kind")
        if kind == "wav":
            p = cfg.signal_path(zone)
            if not p.exists():
                errors.append(f"signals.{zone}.path: file {p} does not exist")
        elif kind == "noise":
            if float(spec.get("duration", 0)) <= 0:
                errors.append(f"signals.{zone}.duration must be > 0")
        else:
            errors.append(f"signals.{zone}.kind must be 'wav' or 'noise'")
    if scene is not None:
        k = int(raw["room"]["k_taps"])
        m_d = min(len(scene.control_alpha), len(scene.control_beta))
        static_n = int(float(raw["signals"]["alpha"].get("duration", 1.0)) * int(raw["room"]["sample_rate"]))
        for label, n_obs in (("static", static_n), ("per-segment", n)):
            diag = rank_condition(None, m_d, n_obs, k, cfg.l_count, int(m["j_len"]))
            if not diag.condition_met:
                warnings.append(f"rank condition ({label}): {diag.message()}")
    return errors, warnings
