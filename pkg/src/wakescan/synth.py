"""Synthetic sea-clutter scenes with planted, ground-truthed wake half-lines.

A scene is a speckled background with an optional single-sinusoid swell.
Wakes are half-lines leaving the ship apex; each multiplies the local
intensity by ``1 + contrast`` inside an anti-aliased band of the given width.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .transform import image_coords

__all__ = [
    "WAKE_KINDS",
    "WakeSpec",
    "ClutterSpec",
    "SceneSpec",
    "GroundTruth",
    "generate_scene",
    "wake_line",
    "SUITE_VISIBILITY",
    "paper_case_specs",
    "paper_case_suite",
    "noise_scene_specs",
]

WAKE_KINDS = ("turbulent", "narrow1", "narrow2", "kelvin1", "kelvin2")
NARROW_MAX_DEG = 4.0
KELVIN_RANGE_DEG = (10.0, 20.0)


def _angdiff(a: float, b: float) -> float:
    """Unsigned difference of two line angles, modulo 180 degrees."""
    d = (a - b) % 180.0
    return min(d, 180.0 - d)


def wake_line(theta_deg: float, r: float, side: int):
    """Foot point on the line closest to the image centre and the half-line direction."""
    t = math.radians(theta_deg)
    n = np.array([math.cos(t), math.sin(t)])
    d = side * np.array([-math.sin(t), math.cos(t)])
    return r * n, d


@dataclass(frozen=True)
class WakeSpec:
    kind: str
    theta: float
    r: float
    contrast: float
    width: float = 2.0
    side: int = 1
    # where the half-line starts; defaults to the foot point of the centre
    apex: tuple | None = None

    def __post_init__(self):
        if self.kind not in WAKE_KINDS:
            raise ValueError(f"unknown wake kind {self.kind!r}")
        if not -0.9 <= self.contrast <= 5:
            raise ValueError(f"contrast {self.contrast} outside [-0.9, 5]")
        if self.side not in (1, -1):
            raise ValueError("side must be +1 or -1")
        if self.width <= 0:
            raise ValueError("width must be positive")
        if not 0 <= self.theta < 180:
            raise ValueError("theta must lie in [0, 180)")


@dataclass(frozen=True)
class ClutterSpec:
    mean: float = 1000.0
    noise: float = 0.1
    swell_amplitude: float = 0.0
    swell_wavelength: float = 24.0
    swell_direction: float = 0.0


@dataclass(frozen=True)
class SceneSpec:
    size: int = 128
    clutter: ClutterSpec = field(default_factory=ClutterSpec)
    wakes: tuple = ()
    seed: int = 0
    ship_radius: float = 0.0
    ship_contrast: float = 3.0
    ship_position: tuple = (0.0, 0.0)
    scene_id: str = "scene"
    # physical parameters the simplified generator cannot use; kept as metadata
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        kinds = [w.kind for w in self.wakes]
        if len(set(kinds)) != len(kinds):
            raise ValueError("each wake kind may appear at most once")
        by_kind = {w.kind: w for w in self.wakes}
        turb = by_kind.get("turbulent")
        others = [w for w in self.wakes if w.kind != "turbulent"]
        if others and turb is None:
            raise ValueError("narrow-V and Kelvin wakes need a turbulent wake")
        for w in others:
            d = _angdiff(w.theta, turb.theta)
            if w.kind.startswith("narrow") and not 0 < d <= NARROW_MAX_DEG:
                raise ValueError(f"{w.kind} at {d:.2f} deg from the turbulent wake, need (0, 4]")
            if w.kind.startswith("kelvin") and not KELVIN_RANGE_DEG[0] <= d <= KELVIN_RANGE_DEG[1]:
                raise ValueError(f"{w.kind} at {d:.2f} deg from the turbulent wake, need [10, 20]")


@dataclass(frozen=True)
class GroundTruth:
    """Visibility and Radon coordinates of each wake kind for one scene."""

    scene_id: str
    size: int
    ship_center: tuple
    wakes: dict

    def visible(self, kind: str) -> bool:
        return bool(self.wakes[kind]["visible"])

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "size": self.size,
            "ship_center": list(self.ship_center),
            "wakes": self.wakes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        return cls(d["scene_id"], int(d["size"]), tuple(d["ship_center"]), d["wakes"])


def _render_halfline(x, y, wake: WakeSpec) -> np.ndarray:
    foot, d = wake_line(wake.theta, wake.r, wake.side)
    start = foot if wake.apex is None else np.asarray(wake.apex, float)
    t = math.radians(wake.theta)
    dist = np.abs(x * math.cos(t) + y * math.sin(t) - wake.r)
    along = (x - start[0]) * d[0] + (y - start[1]) * d[1]
    w = np.clip(0.5 * wake.width + 0.5 - dist, 0.0, 1.0)
    w *= np.clip(along + 0.5, 0.0, 1.0)
    return w


def generate_scene(spec: SceneSpec):
    """Render a scene; returns ``(pixels, truth)``."""
    m = spec.size
    x, y = image_coords(m)
    rng = np.random.default_rng(spec.seed)
    c = spec.clutter

    img = np.full((m, m), float(c.mean))
    if c.swell_amplitude:
        phi = math.radians(c.swell_direction)
        phase = rng.uniform(0, 2 * math.pi)
        k = 2 * math.pi / c.swell_wavelength
        img *= 1 + c.swell_amplitude * np.sin(k * (x * math.cos(phi) + y * math.sin(phi)) + phase)
    for wake in spec.wakes:
        img *= 1 + wake.contrast * _render_halfline(x, y, wake)
    if spec.ship_radius > 0:
        sx, sy = spec.ship_position
        blob = np.clip(spec.ship_radius + 0.5 - np.hypot(x - sx, y - sy), 0.0, 1.0)
        img *= 1 + spec.ship_contrast * blob
    if c.noise > 0:
        looks = 1.0 / c.noise ** 2
        img *= rng.gamma(looks, 1.0 / looks, size=(m, m))

    wakes = {}
    present = {w.kind: w for w in spec.wakes}
    for kind in WAKE_KINDS:
        w = present.get(kind)
        if w is None:
            wakes[kind] = {"visible": False, "r": None, "theta": None, "side": None}
        else:
            wakes[kind] = {"visible": True, "r": float(w.r), "theta": float(w.theta), "side": int(w.side)}
    truth = GroundTruth(spec.scene_id, m, tuple(map(float, spec.ship_position)), wakes)
    return img, truth


# Visible wake pattern per tile: turbulent, narrow1, narrow2, kelvin1, kelvin2.
SUITE_VISIBILITY = {
    "1.1": (1, 1, 1, 1, 1),
    "1.2": (1, 1, 0, 1, 0),
    "1.3": (1, 1, 0, 1, 0),
    "1.4": (1, 1, 0, 0, 0),
    "2.1": (1, 1, 0, 1, 1),
    "2.2": (1, 1, 0, 0, 0),
    "2.3": (1, 1, 0, 1, 0),
    "2.4": (1, 1, 0, 1, 0),
    "2.5": (1, 1, 1, 1, 1),
    "3.1": (1, 1, 0, 1, 0),
    "3.2": (1, 1, 0, 1, 0),
    "3.3": (1, 1, 0, 1, 0),
    "4.1": (1, 1, 0, 0, 0),
    "5.1": (1, 1, 0, 0, 0),
    "5.2": (1, 1, 0, 0, 0),
    "5.3": (1, 1, 0, 1, 0),
    "6.1": (1, 1, 1, 1, 0),
    "6.2": (1, 1, 0, 0, 0),
    "6.3": (1, 1, 0, 1, 0),
    "7.1": (1, 1, 0, 1, 0),
    "8.1": (1, 1, 0, 0, 0),
    "8.2": (1, 1, 0, 1, 0),
    "8.3": (1, 1, 0, 0, 0),
    "9.1": (1, 1, 0, 0, 0),
    "10.1": (1, 1, 0, 0, 0),
    "10.2": (1, 1, 0, 0, 0),
    "10.3": (1, 1, 0, 0, 0),
    "11.1": (1, 1, 0, 0, 0),
}

SIMULATION_METADATA = {"wind_speed_m_s": 4.0, "ship_length_m": 50.0, "ship_speed_m_s": 9.0}


def _line_through(point, heading_deg: float):
    """Radon ``(theta, r, side)`` of the half-line leaving ``point`` along ``heading_deg``."""
    theta = (heading_deg - 90.0) % 180.0
    side = 1 if math.isclose((theta + 90.0) % 360.0, heading_deg % 360.0, abs_tol=1e-9) else -1
    t = math.radians(theta)
    r = point[0] * math.cos(t) + point[1] * math.sin(t)
    return theta, r, side


def paper_case_specs(
    seed: int = 0,
    size: int = 128,
    noise: float = 0.1,
    contrast_min: float = 0.3,
    swell_amplitude: float = 0.05,
) -> list[SceneSpec]:
    """Scene specs replicating the 28 per-tile visibility patterns, with random geometry."""
    rng = np.random.default_rng(seed)
    specs = []
    for k, (sid, vis) in enumerate(SUITE_VISIBILITY.items()):
        apex = tuple(np.round(rng.uniform(-2, 2, size=2), 2))
        theta_turb = rng.uniform(35.0, 145.0)
        heading = theta_turb + 90.0 + (180.0 if rng.random() < 0.5 else 0.0)
        narrow_side = 1 if rng.random() < 0.5 else -1
        kelvin_side = 1 if rng.random() < 0.5 else -1
        offsets = {
            "turbulent": 0.0,
            "narrow1": narrow_side * rng.uniform(3.0, NARROW_MAX_DEG),
            "narrow2": -narrow_side * rng.uniform(3.0, NARROW_MAX_DEG),
            "kelvin1": kelvin_side * rng.uniform(12.0, 19.0),
            "kelvin2": -kelvin_side * rng.uniform(12.0, 19.0),
        }
        contrast = {
            "turbulent": -rng.uniform(contrast_min, max(contrast_min, 0.6)),
            "narrow1": rng.uniform(max(contrast_min, 0.4), 0.8),
            "narrow2": rng.uniform(max(contrast_min, 0.4), 0.8),
            "kelvin1": rng.uniform(contrast_min, max(contrast_min, 0.6)),
            "kelvin2": rng.uniform(contrast_min, max(contrast_min, 0.6)),
        }
        wakes = []
        for kind, on in zip(WAKE_KINDS, vis):
            if not on:
                continue
            theta, r, side = _line_through(apex, heading + offsets[kind])
            width = 3.0 if kind == "turbulent" else 2.0
            wakes.append(WakeSpec(kind, theta, r, contrast[kind], width, side, apex=apex))
        clutter = ClutterSpec(
            noise=noise,
            swell_amplitude=swell_amplitude,
            swell_direction=float(rng.uniform(0, 180)),
            swell_wavelength=float(rng.uniform(16, 32)),
        )
        specs.append(
            SceneSpec(
                size=size,
                clutter=clutter,
                wakes=tuple(wakes),
                seed=int(seed * 1000 + k),
                ship_radius=3.0,
                ship_position=apex,
                scene_id=sid,
                metadata=dict(SIMULATION_METADATA),
            )
        )
    return specs


def paper_case_suite(seed: int = 0, size: int = 128, **kwargs):
    """The 28 scenes as ``(pixels, truth)`` pairs."""
    return [generate_scene(s) for s in paper_case_specs(seed, size, **kwargs)]


def noise_scene_specs(n: int, seed: int = 0, size: int = 128, noise: float = 0.1) -> list[SceneSpec]:
    """Wake-free scenes (speckle and a ship blob only)."""
    return [
        SceneSpec(
            size=size,
            clutter=ClutterSpec(noise=noise),
            seed=int(seed * 100003 + i),
            ship_radius=3.0,
            scene_id=f"noise{i:03d}",
        )
        for i in range(n)
    ]


def spec_to_dict(spec: SceneSpec) -> dict:
    return asdict(spec)
