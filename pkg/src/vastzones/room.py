"""Scene geometry and synthetic room impulse responses.

Two generators are provided: a free-field one (direct path only) and an
Allen-Berkley image-source model for shoebox rooms with a uniform wall
reflection coefficient. Both realize fractional delays with a Hann-windowed
sinc so the impulses are band-limited.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SINC_HALF_WIDTH = 32
RIR_MAGIC = b"VZRIR1"


@dataclass(frozen=True)
class RoomSpec:
    """Acoustic environment. ``dimensions=None`` means an unbounded (anechoic) space."""

    dimensions: tuple[float, float, float] | None = None
    t60: float = 0.0
    speed_of_sound: float = 343.0
    sample_rate: int = 16000

    def __post_init__(self):
        if self.dimensions is not None:
            dims = tuple(float(d) for d in self.dimensions)
            if len(dims) != 3 or min(dims) <= 0:
                raise ValueError(f"room dimensions must be three positive lengths, got {self.dimensions}")
            object.__setattr__(self, "dimensions", dims)
        if self.t60 < 0:
            raise ValueError("t60 must be >= 0")
        if self.speed_of_sound <= 0 or self.sample_rate <= 0:
            raise ValueError("speed_of_sound and sample_rate must be positive")

    @property
    def anechoic(self) -> bool:
        return self.dimensions is None or self.t60 == 0

    @property
    def volume(self) -> float:
        lx, ly, lz = self.dimensions
        return lx * ly * lz

    @property
    def surface(self) -> float:
        lx, ly, lz = self.dimensions
        return 2.0 * (lx * ly + lx * lz + ly * lz)


def _as_points(points, name: str) -> np.ndarray:
    if points is None:
        return np.zeros((0, 3))
    arr = np.atleast_2d(np.asarray(points, dtype=float))
    if arr.size == 0:
        return np.zeros((0, 3))
    if arr.shape[1] != 3:
        raise ValueError(f"{name} must be a list of 3-vectors, got shape {arr.shape}")
    return arr


@dataclass
class SceneGeometry:
    """Loudspeakers, two zones of control points, optional monitor points, virtual source.

    Receiver rows of an :class:`RIRSet` follow :meth:`receivers`: control
    points of zone alpha, control points of zone beta, monitor points of
    alpha, monitor points of beta.
    """

    loudspeakers: np.ndarray
    control_alpha: np.ndarray
    control_beta: np.ndarray
    virtual_source: np.ndarray
    monitor_alpha: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    monitor_beta: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def __post_init__(self):
        self.loudspeakers = _as_points(self.loudspeakers, "loudspeakers")
        self.control_alpha = _as_points(self.control_alpha, "control_alpha")
        self.control_beta = _as_points(self.control_beta, "control_beta")
        self.monitor_alpha = _as_points(self.monitor_alpha, "monitor_alpha")
        self.monitor_beta = _as_points(self.monitor_beta, "monitor_beta")
        self.virtual_source = np.asarray(self.virtual_source, dtype=float).reshape(3)
        if len(self.loudspeakers) < 1:
            raise ValueError("need at least one loudspeaker")
        if len(self.control_alpha) < 1 or len(self.control_beta) < 1:
            raise ValueError("each zone needs at least one control point")

    @property
    def n_loudspeakers(self) -> int:
        return len(self.loudspeakers)

    def receivers(self) -> np.ndarray:
        return np.vstack([self.control_alpha, self.control_beta, self.monitor_alpha, self.monitor_beta])

    def indices(self) -> dict[str, np.ndarray]:
        """Row indices into :meth:`receivers` for each point group."""
        sizes = [len(self.control_alpha), len(self.control_beta), len(self.monitor_alpha), len(self.monitor_beta)]
        bounds = np.cumsum([0] + sizes)
        names = ["control_alpha", "control_beta", "monitor_alpha", "monitor_beta"]
        return {n: np.arange(bounds[i], bounds[i + 1]) for i, n in enumerate(names)}

    def zone_points(self, zone: str, kind: str = "control") -> np.ndarray:
        return self.indices()[f"{kind}_{zone}"]

    def all_zone_points(self, zone: str) -> np.ndarray:
        """Control and monitor receiver indices of ``zone``."""
        idx = self.indices()
        return np.concatenate([idx[f"control_{zone}"], idx[f"monitor_{zone}"]])

    def check_inside(self, room: RoomSpec) -> None:
        if room.dimensions is None:
            return
        dims = np.asarray(room.dimensions)
        pts = np.vstack([self.loudspeakers, self.receivers(), self.virtual_source[None]])
        bad = np.where(np.any((pts <= 0) | (pts >= dims), axis=1))[0]
        if bad.size:
            raise ValueError(f"positions {pts[bad].tolist()} lie outside the room {room.dimensions}")

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.loudspeakers, self.receivers(), self.virtual_source):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
            h.update(b"|")
        return h.hexdigest()


@dataclass
class RIRSet:
    """Impulse responses ``h[m, l, k]`` and virtual-source responses ``h_virtual[m, k]``."""

    h: np.ndarray
    h_virtual: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=float)
        self.h_virtual = np.asarray(self.h_virtual, dtype=float)
        if self.h.ndim != 3 or self.h_virtual.ndim != 2:
            raise ValueError("h must be [M, L, K] and h_virtual [M, K]")
        if self.h.shape[2] < 1 or self.h.shape[0] != self.h_virtual.shape[0] or self.h.shape[2] != self.h_virtual.shape[1]:
            raise ValueError(f"inconsistent RIR shapes {self.h.shape} and {self.h_virtual.shape}")
        if not (np.all(np.isfinite(self.h)) and np.all(np.isfinite(self.h_virtual))):
            raise ValueError("RIRs must be finite")

    @property
    def n_points(self) -> int:
        return self.h.shape[0]

    @property
    def n_loudspeakers(self) -> int:
        return self.h.shape[1]

    @property
    def n_taps(self) -> int:
        return self.h.shape[2]

    def subset(self, points) -> "RIRSet":
        points = np.asarray(points, dtype=int)
        return RIRSet(self.h[points], self.h_virtual[points], self.sample_rate)

    def save(self, path) -> None:
        m, l, k = self.h.shape
        with open(path, "wb") as f:
            f.write(RIR_MAGIC)
            f.write(struct.pack("<4I", m, l, k, int(self.sample_rate)))
            f.write(np.ascontiguousarray(self.h, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(self.h_virtual, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "RIRSet":
        data = Path(path).read_bytes()
        if data[:6] != RIR_MAGIC:
            raise ValueError(f"{path}: not a {RIR_MAGIC.decode()} container")
        m, l, k, fs = struct.unpack_from("<4I", data, 6)
        off = 6 + 16
        n_h, n_v = m * l * k, m * k
        expected = off + 8 * (n_h + n_v)
        if len(data) != expected:
            raise ValueError(f"{path}: expected {expected} bytes, found {len(data)}")
        h = np.frombuffer(data, dtype="<f8", count=n_h, offset=off).reshape(m, l, k)
        hv = np.frombuffer(data, dtype="<f8", count=n_v, offset=off + 8 * n_h).reshape(m, k)
        return cls(h.astype(float), hv.astype(float), fs)


def _add_impulses(out: np.ndarray, delays: np.ndarray, gains: np.ndarray) -> None:
    """Accumulate Hann-windowed sinc pulses at fractional ``delays`` (samples) into ``out``."""
    k_taps = out.shape[-1]
    offsets = np.arange(-SINC_HALF_WIDTH + 1, SINC_HALF_WIDTH + 1)
    base = np.floor(delays).astype(int)
    taps = base[:, None] + offsets[None, :]
    t = taps - delays[:, None]
    kernel = 0.5 * (1.0 + np.cos(np.pi * t / SINC_HALF_WIDTH)) * np.sinc(t)
    kernel[np.abs(t) >= SINC_HALF_WIDTH] = 0.0
    valid = (taps >= 0) & (taps < k_taps)
    np.add.at(out, taps[valid], (gains[:, None] * kernel)[valid])


def _direct_path(src: np.ndarray, rcv: np.ndarray, room: RoomSpec, k_taps: int, label: str) -> np.ndarray:
    d = float(np.linalg.norm(rcv - src))
    if d == 0.0:
        raise ValueError(f"{label}: source and receiver coincide")
    delay = d / room.speed_of_sound * room.sample_rate
    if delay + SINC_HALF_WIDTH >= k_taps:
        raise ValueError(f"{label}: direct-path delay {delay:.1f} samples does not fit in {k_taps} taps")
    out = np.zeros(k_taps)
    _add_impulses(out, np.array([delay]), np.array([1.0 / (4.0 * np.pi * d)]))
    return out


def _for_all_pairs(scene: SceneGeometry, fn) -> RIRSet:
    receivers = scene.receivers()
    h = np.stack([
        np.stack([fn(spk, rcv, f"receiver {m} / loudspeaker {l}") for l, spk in enumerate(scene.loudspeakers)])
        for m, rcv in enumerate(receivers)
    ])
    hv = np.stack([fn(scene.virtual_source, rcv, f"receiver {m} / virtual source") for m, rcv in enumerate(receivers)])
    return h, hv


def generate_anechoic_rirs(scene: SceneGeometry, room: RoomSpec, k_taps: int) -> RIRSet:
    """Free-field responses: one band-limited impulse of gain 1/(4 pi d) at delay d/c per pair."""
    h, hv = _for_all_pairs(scene, lambda s, r, label: _direct_path(s, r, room, k_taps, label))
    return RIRSet(h, hv, room.sample_rate)


def sabine_reflection(room: RoomSpec) -> float:
    """Uniform wall reflection coefficient from T60 via Sabine's formula."""
    if room.dimensions is None or room.t60 <= 0:
        raise ValueError("reflection coefficient needs a bounded room with t60 > 0")
    alpha = 24.0 * np.log(10.0) * room.volume / (room.speed_of_sound * room.surface * room.t60)
    if alpha > 1.0:
        raise ValueError(
            f"t60={room.t60} s is too short for a {room.volume:.1f} m^3 room under Sabine "
            f"(absorption {alpha:.2f} > 1)"
        )
    return float(np.sqrt(1.0 - alpha))


def eyring_reflection(room: RoomSpec) -> float:
    """Uniform wall reflection coefficient from T60 via Eyring's formula."""
    if room.dimensions is None or room.t60 <= 0:
        raise ValueError("reflection coefficient needs a bounded room with t60 > 0")
    nepers = 24.0 * np.log(10.0) * room.volume / (room.speed_of_sound * room.surface * room.t60)
    return float(np.exp(-0.5 * nepers))


def _image_source(src, rcv, room: RoomSpec, k_taps: int, max_order: int, beta: float, label: str) -> np.ndarray:
    dims = np.asarray(room.dimensions)
    span = max_order // 2 + 1
    n = np.arange(-span, span + 1)
    per_dim = []
    for ax in range(3):
        # image coordinate (1 - 2q) s + 2 n L; reflections |n - q| + |n|
        coords, orders = [], []
        for q in (0, 1):
            coords.append((1 - 2 * q) * src[ax] + 2 * n * dims[ax] - rcv[ax])
            orders.append(np.abs(n - q) + np.abs(n))
        per_dim.append((np.concatenate(coords), np.concatenate(orders)))
    (dx, ox), (dy, oy), (dz, oz) = per_dim
    order = ox[:, None, None] + oy[None, :, None] + oz[None, None, :]
    dist = np.sqrt(dx[:, None, None] ** 2 + dy[None, :, None] ** 2 + dz[None, None, :] ** 2)
    keep = order <= max_order
    order, dist = order[keep], dist[keep]
    if np.any(dist == 0):
        raise ValueError(f"{label}: source and receiver coincide")
    delays = dist / room.speed_of_sound * room.sample_rate
    direct = np.argmin(np.where(order == 0, dist, np.inf))
    if delays[direct] + SINC_HALF_WIDTH >= k_taps:
        raise ValueError(f"{label}: direct-path delay {delays[direct]:.1f} samples does not fit in {k_taps} taps")
    gains = beta ** order / (4.0 * np.pi * dist)
    inside = delays - SINC_HALF_WIDTH < k_taps
    out = np.zeros(k_taps)
    _add_impulses(out, delays[inside], gains[inside])
    return out


def generate_image_source_rirs(
    scene: SceneGeometry,
    room: RoomSpec,
    k_taps: int,
    max_order: int = 10,
    absorption: str = "sabine",
) -> RIRSet:
    """Shoebox image-source responses up to ``max_order`` reflections.

    ``absorption`` selects how T60 is converted into the wall reflection
    coefficient: ``"sabine"`` (default) or ``"eyring"``.
    """
    if room.dimensions is None or room.t60 <= 0:
        raise ValueError("image-source model needs a bounded room with t60 > 0; use generate_anechoic_rirs")
    if max_order < 0:
        raise ValueError("max_order must be >= 0")
    scene.check_inside(room)
    beta = {"sabine": sabine_reflection, "eyring": eyring_reflection}[absorption](room)
    h, hv = _for_all_pairs(
        scene, lambda s, r, label: _image_source(s, r, room, k_taps, max_order, beta, label)
    )
    return RIRSet(h, hv, room.sample_rate)


def generate_rirs(scene: SceneGeometry, room: RoomSpec, k_taps: int, max_order: int = 10, absorption: str = "sabine") -> RIRSet:
    if room.anechoic:
        return generate_anechoic_rirs(scene, room, k_taps)
    return generate_image_source_rirs(scene, room, k_taps, max_order, absorption)


def schroeder_decay_db(h: np.ndarray) -> np.ndarray:
    """Backward-integrated energy decay curve in dB, normalized to 0 dB at t=0."""
    edc = np.cumsum(h[::-1] ** 2)[::-1]
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(edc / edc[0])


def circular_scene(
    n_loudspeakers: int = 8,
    radius: float = 2.0,
    zone_distance: float = 2.0,
    spacing: float = 0.05,
    grid: int = 5,
    height: float = 1.5,
    virtual_source_loudspeaker: int = 7,
    virtual_source_offset: float = 0.5,
    center: tuple[float, float] = (0.0, 0.0),
) -> SceneGeometry:
    """Circular array with two square zones of control points.

    Zones sit on the x axis, ``zone_distance`` apart, so the layout is
    mirror-symmetric about the y axis when the loudspeaker count is even.
    Monitor points fall midway between control points ((grid-1)^2 per zone).
    The virtual source lies ``virtual_source_offset`` outside loudspeaker
    ``virtual_source_loudspeaker`` (1-based).
    """
    cx, cy = center
    angles = 2 * np.pi * np.arange(n_loudspeakers) / n_loudspeakers
    spk = np.column_stack([cx + radius * np.cos(angles), cy + radius * np.sin(angles), np.full(n_loudspeakers, height)])

    def square(x0, n, step):
        offs = (np.arange(n) - (n - 1) / 2) * step
        gx, gy = np.meshgrid(offs, offs, indexing="ij")
        return np.column_stack([x0 + gx.ravel(), cy + gy.ravel(), np.full(n * n, height)])

    xa, xb = cx - zone_distance / 2, cx + zone_distance / 2
    a = angles[(virtual_source_loudspeaker - 1) % n_loudspeakers]
    vs = np.array([cx + (radius + virtual_source_offset) * np.cos(a), cy + (radius + virtual_source_offset) * np.sin(a), height])
    return SceneGeometry(
        loudspeakers=spk,
        control_alpha=square(xa, grid, spacing),
        control_beta=square(xb, grid, spacing),
        monitor_alpha=square(xa, grid - 1, spacing) if grid > 1 else None,
        monitor_beta=square(xb, grid - 1, spacing) if grid > 1 else None,
        virtual_source=vs,
    )
