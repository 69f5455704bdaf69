"""Radon-domain wake search and spatial-domain confirmation.

The pipeline masks the ship, inverts the image into a sparse sinogram,
searches a sine-shaped band of it for the turbulent/narrow-V pair, the second
narrow-V arm and the two Kelvin arms, turns every Radon-domain point into a
half-line leaving the ship and finally keeps or discards each candidate by
the sign and size of its F-index (relative brightness along the half-line).

Conventions
-----------
Angles are in degrees on the sinogram grid.  Angular distances are taken
modulo 180 degrees.  Ties are broken lexicographically, smallest angle first
and then smallest offset.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.ndimage import map_coordinates

from .solver import SolverConfig, solve
from .transform import RadonOperator, image_coords

__all__ = [
    "WakeKind",
    "Status",
    "DetectConfig",
    "WakeCandidate",
    "WakeReport",
    "Analysis",
    "NoCandidates",
    "InsufficientSupport",
    "mask_ship",
    "restrict_search",
    "detect_tn_pair",
    "detect_second_narrow",
    "detect_kelvin",
    "resolve_halfline",
    "f_index",
    "confirm_wakes",
    "analyze",
    "detect_pipeline",
    "angular_distance",
    "signed_angle",
    "REPORT_SCHEMA",
]

log = logging.getLogger(__name__)


class WakeKind(str, enum.Enum):
    TURBULENT = "turbulent"
    NARROW1 = "narrow1"
    NARROW2 = "narrow2"
    KELVIN1 = "kelvin1"
    KELVIN2 = "kelvin2"


class Status(str, enum.Enum):
    CONFIRMED = "confirmed"
    DISCARDED = "discarded"
    NOT_SEARCHED = "not_searched"


class NoCandidates(ValueError):
    """The restricted search region holds no admissible bins."""


class InsufficientSupport(ValueError):
    """Too few unmasked samples along a half-line to form an F-index."""


MIN_SUPPORT = 5


@dataclass(frozen=True)
class DetectConfig:
    """Search windows and confirmation margins.

    Parameters
    ----------
    A : float, optional
        Largest azimuth shift in pixels; ``None`` means ``M / 4``.
    tn_window : float
        Largest angular separation of the turbulent/narrow-V pair, degrees.
    tn_min_sep : float
        Smallest separation of the pair; keeps both members off the same
        angle column, where ramp-filter side lobes sit.
    kelvin_window : float
        Width of each Kelvin window, starting at ``kelvin_offset``.
    kelvin_offset : float
        Inner edge of each Kelvin window, degrees from the turbulent wake.
    f_margin : float
        Narrow-V and Kelvin candidates need ``F > f_margin``.
    turbulent_margin : float
        Turbulent candidates need ``F < turbulent_margin``.
    mask_radius : float
        Radius of the disk masked around the ship, pixels.
    halfline_cone : float
        Half-lines other than the turbulent one must point within this many
        degrees of the turbulent half-line.
    """

    A: float | None = None
    tn_window: float = 4.0
    tn_min_sep: float = 1.0
    kelvin_window: float = 10.0
    kelvin_offset: float = 10.0
    f_margin: float = 0.1
    turbulent_margin: float = 0.0
    mask_radius: float = 8.0
    halfline_cone: float = 45.0

    def __post_init__(self):
        if self.A is not None and not self.A > 0:
            raise ValueError("A must be positive")
        if not self.tn_window > 0 or not self.kelvin_window > 0:
            raise ValueError("search windows must be positive")
        if not 0 <= self.tn_min_sep <= self.tn_window:
            raise ValueError("tn_min_sep must lie in [0, tn_window]")
        if self.kelvin_offset < 0 or self.kelvin_offset + self.kelvin_window > 90:
            raise ValueError("Kelvin window must lie within 90 degrees of the turbulent wake")
        if not self.mask_radius >= 0:
            raise ValueError("mask_radius must be non-negative")
        if not 0 < self.halfline_cone <= 90:
            raise ValueError("halfline_cone must lie in (0, 90]")

    def resolved_A(self, size: int) -> float:
        a = size / 4.0 if self.A is None else float(self.A)
        if not a < size / math.sqrt(2):
            raise ValueError(f"A = {a} must be below M / sqrt(2) = {size / math.sqrt(2):.2f}")
        return a


@dataclass(frozen=True)
class WakeCandidate:
    kind: WakeKind
    r: float | None = None
    theta: float | None = None
    peak_value: float | None = None
    endpoints: tuple | None = None
    f_index: float | None = None
    status: Status = Status.NOT_SEARCHED
    note: str = ""

    @property
    def searched(self) -> bool:
        return self.r is not None

    def to_dict(self) -> dict:
        ends = None
        if self.endpoints is not None:
            ends = [[float(v) for v in p] for p in self.endpoints]
        return {
            "kind": WakeKind(self.kind).value,
            "r": None if self.r is None else float(self.r),
            "theta_deg": None if self.theta is None else float(self.theta),
            "peak_value": None if self.peak_value is None else float(self.peak_value),
            "f_index": None if self.f_index is None else float(self.f_index),
            "status": Status(self.status).value,
            "endpoints": ends,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WakeCandidate":
        ends = d.get("endpoints")
        return cls(
            kind=WakeKind(d["kind"]),
            r=d.get("r"),
            theta=d.get("theta_deg"),
            peak_value=d.get("peak_value"),
            endpoints=None if ends is None else tuple(tuple(p) for p in ends),
            f_index=d.get("f_index"),
            status=Status(d["status"]),
        )


@dataclass(frozen=True)
class WakeReport:
    candidates: tuple
    source_id: str = ""
    config: dict = field(default_factory=dict)
    diagnostics: tuple = ()

    def __post_init__(self):
        kinds = [WakeKind(c.kind) for c in self.candidates]
        if sorted(kinds) != sorted(WakeKind):
            raise ValueError("a report needs exactly one candidate of each wake kind")

    def get(self, kind) -> WakeCandidate:
        kind = WakeKind(kind)
        return next(c for c in self.candidates if c.kind is kind)

    def to_dict(self) -> dict:
        return {
            "source_id": self.source_id,
            "candidates": [c.to_dict() for c in self.candidates],
            "config": self.config,
            "diagnostics": list(self.diagnostics),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WakeReport":
        return cls(
            tuple(WakeCandidate.from_dict(c) for c in d["candidates"]),
            d.get("source_id", ""),
            d.get("config", {}),
            tuple(d.get("diagnostics", ())),
        )


_NUM_OR_NULL = {"type": ["number", "null"]}
_POINT = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "WakeReport",
    "type": "object",
    "required": ["source_id", "candidates", "config", "diagnostics"],
    "properties": {
        "source_id": {"type": "string"},
        "config": {"type": "object"},
        "diagnostics": {"type": "array", "items": {"type": "string"}},
        "candidates": {
            "type": "array",
            "minItems": 5,
            "maxItems": 5,
            "items": {
                "type": "object",
                "required": ["kind", "r", "theta_deg", "peak_value", "f_index", "status", "endpoints"],
                "additionalProperties": False,
                "properties": {
                    "kind": {"enum": [k.value for k in WakeKind]},
                    "r": _NUM_OR_NULL,
                    "theta_deg": {"type": ["number", "null"], "minimum": 0, "exclusiveMaximum": 180},
                    "peak_value": _NUM_OR_NULL,
                    "f_index": _NUM_OR_NULL,
                    "status": {"enum": [s.value for s in Status]},
                    "endpoints": {
                        "oneOf": [
                            {"type": "null"},
                            {"type": "array", "items": _POINT, "minItems": 2, "maxItems": 2},
                        ]
                    },
                },
            },
        },
    },
}


def angular_distance(a, b):
    """Unsigned distance between line angles, modulo 180 degrees."""
    d = np.mod(np.asarray(a, float) - b, 180.0)
    out = np.minimum(d, 180.0 - d)
    return out if out.ndim else float(out)


def signed_angle(a, b):
    """``a - b`` wrapped into ``[-90, 90)`` degrees."""
    out = np.mod(np.asarray(a, float) - b + 90.0, 180.0) - 90.0
    return out if out.ndim else float(out)


# Stage 1: masking and the search region


def mask_ship(size: int, center, radius: float) -> np.ndarray:
    """Boolean mask that is ``False`` on pixels closer than ``radius`` to ``center``.

    ``center`` is ``(x, y)`` in centred pixel coordinates.  A radius below
    half a pixel covers nothing, so the mask is all ``True``.
    """
    if radius >= size / 2:
        raise ValueError(f"mask radius {radius} would cover the search area of a {size}px tile")
    cx, cy = float(center[0]), float(center[1])
    lim = size / 2
    if not (-lim <= cx < lim and -lim <= cy < lim):
        raise ValueError(f"ship center {center} lies outside the image")
    if radius < 0.5:
        return np.ones((size, size), bool)
    x, y = image_coords(size)
    return np.hypot(x - cx, y - cy) >= radius


def restrict_search(shape, A: float, angles) -> np.ndarray:
    """``True`` exactly where ``|r| <= A * sin(theta)``."""
    n_r, n_t = shape
    offs = np.arange(n_r) - (n_r - 1) // 2
    bound = A * np.sin(np.deg2rad(np.asarray(angles, float)))
    return np.abs(offs)[:, None] <= bound[None, :]


def _offsets(n_r: int) -> np.ndarray:
    return np.arange(n_r) - (n_r - 1) // 2


def _column_extrema(X, region):
    """Per-column masked (min, argmin, max, argmax); ``nan`` for empty columns."""
    lo = np.where(region, X, np.inf)
    hi = np.where(region, X, -np.inf)
    imin = lo.argmin(axis=0)
    imax = hi.argmax(axis=0)
    cols = np.arange(X.shape[1])
    vmin = lo[imin, cols]
    vmax = hi[imax, cols]
    empty = ~region.any(axis=0)
    vmin[empty] = np.nan
    vmax[empty] = np.nan
    return vmin, imin, vmax, imax


def _candidate(kind, X, i, j, angles):
    return WakeCandidate(
        kind=kind,
        r=float(_offsets(X.shape[0])[i]),
        theta=float(angles[j]),
        peak_value=float(X[i, j]),
    )


# Stage 2: Radon-domain search


def detect_tn_pair(X, region, angles, window: float = 4.0, min_sep: float = 1.0):
    """Pick the trough/peak pair with the largest amplitude difference.

    Admissible pairs lie inside ``region`` with angular separation in
    ``[min_sep, window]`` and are distinct bins.  Returns
    ``(turbulent, narrow1)``.
    """
    X = np.asarray(X, float)
    angles = np.asarray(angles, float)
    vmin, imin, vmax, imax = _column_extrema(X, region)
    best = None
    n_t = len(angles)
    for jt in range(n_t):
        if np.isnan(vmin[jt]):
            continue
        sep = angular_distance(angles, angles[jt])
        ok = (sep >= min_sep - 1e-9) & (sep <= window + 1e-9) & ~np.isnan(vmax)
        for jn in np.flatnonzero(ok):
            it, i_n = imin[jt], imax[jn]
            if jt == jn and it == i_n:
                continue
            gain = vmax[jn] - vmin[jt]
            if best is None or gain > best[0]:
                best = (gain, it, jt, i_n, jn)
    if best is None:
        raise NoCandidates("no candidates in restricted region")
    _, it, jt, i_n, jn = best
    return (
        _candidate(WakeKind.TURBULENT, X, it, jt, angles),
        _candidate(WakeKind.NARROW1, X, i_n, jn, angles),
    )


def _window_max(X, region, angles, center, lo, hi, kind):
    """Maximum over bins whose signed offset from ``center`` lies in ``[lo, hi]``."""
    off = signed_angle(angles, center)
    cols = (off >= lo - 1e-9) & (off <= hi + 1e-9)
    sel = region & cols[None, :]
    if not sel.any():
        return WakeCandidate(kind, note="window empty after masking")
    vals = np.where(sel, X, -np.inf)
    # argmax over a theta-major flattening gives the (theta, r) tie-break
    order = np.argsort(angles, kind="stable")
    sub = vals[:, order].T.ravel()
    k = int(np.argmax(sub))
    j = order[k // X.shape[0]]
    i = k % X.shape[0]
    return _candidate(kind, X, i, j, angles)


def detect_second_narrow(X, region, angles, turbulent: WakeCandidate, narrow1: WakeCandidate,
                         window: float = 4.0, min_sep: float = 1.0) -> WakeCandidate:
    """Maximum on the opposite angular side of the turbulent wake from ``narrow1``."""
    side = signed_angle(narrow1.theta, turbulent.theta)
    if side > 0:
        lo, hi = -window, -min_sep
    elif side < 0:
        lo, hi = min_sep, window
    else:
        # pair on one column; either side is "opposite", use the positive one
        lo, hi = min_sep, window
    return _window_max(np.asarray(X, float), region, np.asarray(angles, float),
                       turbulent.theta, lo, hi, WakeKind.NARROW2)


def detect_kelvin(X, region, angles, turbulent: WakeCandidate, window: float = 10.0,
                  offset: float = 10.0):
    """Maximum in each Kelvin window; ``kelvin1`` on the positive-angle side."""
    X = np.asarray(X, float)
    angles = np.asarray(angles, float)
    k1 = _window_max(X, region, angles, turbulent.theta, offset, offset + window, WakeKind.KELVIN1)
    k2 = _window_max(X, region, angles, turbulent.theta, -offset - window, -offset, WakeKind.KELVIN2)
    return k1, k2


# Stage 3: spatial-domain confirmation


def _border_exit(start, d, size: int) -> float:
    """Arclength at which ``start + t d`` leaves the pixel-centre box of the image."""
    c = size // 2
    lo, hi = -c, size - 1 - c
    t_max = math.inf
    for k in range(2):
        if abs(d[k]) < 1e-12:
            if not lo <= start[k] <= hi:
                return -math.inf
            continue
        ta = (lo - start[k]) / d[k]
        tb = (hi - start[k]) / d[k]
        t_max = min(t_max, max(ta, tb))
    return t_max


def _sample_halfline(image, mask, start, d):
    """Bilinear samples at unit steps from ``start`` along ``d``, unmasked only."""
    size = image.shape[0]
    t_end = _border_exit(start, d, size)
    if not t_end >= 0:
        return np.empty(0), None
    t = np.arange(0.0, math.floor(t_end) + 1.0)
    xs = start[0] + t * d[0]
    ys = start[1] + t * d[1]
    c = size // 2
    rows, cols = ys + c, xs + c
    vals = map_coordinates(image, [rows, cols], order=1, mode="nearest")
    if mask is not None:
        keep = map_coordinates(mask.astype(float), [rows, cols], order=0, mode="nearest") > 0.5
        vals = vals[keep]
    end = (start[0] + t[-1] * d[0], start[1] + t[-1] * d[1])
    return vals, end


def _unmasked_mean(image, mask) -> float:
    return float(image.mean() if mask is None else image[mask].mean())


def f_index(image, start, end, mask=None) -> float:
    """``mean(samples) / mean(image) - 1`` along the segment from ``start`` to ``end``.

    Samples are bilinear at unit arclength; masked pixels are skipped both on
    the line and in the image mean.
    """
    image = np.asarray(image, float)
    start = np.asarray(start, float)
    end = np.asarray(end, float)
    length = float(np.hypot(*(end - start)))
    if length == 0:
        raise InsufficientSupport("half-line has zero length")
    d = (end - start) / length
    t = np.arange(0.0, math.floor(length + 1e-9) + 1.0)
    c = image.shape[0] // 2
    rows = start[1] + t * d[1] + c
    cols = start[0] + t * d[0] + c
    vals = map_coordinates(image, [rows, cols], order=1, mode="nearest")
    if mask is not None:
        keep = map_coordinates(np.asarray(mask, float), [rows, cols], order=0, mode="nearest") > 0.5
        vals = vals[keep]
    if len(vals) < MIN_SUPPORT:
        raise InsufficientSupport(f"only {len(vals)} unmasked samples along the half-line")
    mean = _unmasked_mean(image, None if mask is None else np.asarray(mask, bool))
    if mean == 0:
        return 0.0
    return float(vals.mean() / mean - 1.0)


def _halves(candidate: WakeCandidate, ship_center, size: int):
    """Both half-lines of the candidate's line, split at the point nearest the ship."""
    t = math.radians(candidate.theta)
    n = np.array([math.cos(t), math.sin(t)])
    s = np.asarray(ship_center, float)
    foot = s + (candidate.r - float(s @ n)) * n
    out = []
    for side in (1, -1):
        d = side * np.array([-math.sin(t), math.cos(t)])
        t_end = _border_exit(foot, d, size)
        if not t_end >= 0:
            out.append(None)
            continue
        out.append((foot, foot + t_end * d, d))
    return out


def resolve_halfline(image, candidate: WakeCandidate, ship_center, mask=None,
                     turbulent_direction=None, cone: float = 45.0):
    """Choose the half of the candidate's line that belongs to the wake.

    The turbulent wake keeps the darker half.  Other wakes keep the half
    pointing within ``cone`` degrees of ``turbulent_direction``.  Returns
    ``(candidate, direction)``; a candidate with no usable half comes back
    ``DISCARDED`` with ``direction`` ``None``.
    """
    if not candidate.searched:
        return candidate, None
    image = np.asarray(image, float)
    halves = _halves(candidate, ship_center, image.shape[0])
    if turbulent_direction is None:
        means = []
        for h in halves:
            if h is None:
                means.append(math.inf)
                continue
            vals, _ = _sample_halfline(image, mask, h[0], h[2])
            means.append(vals.mean() if len(vals) >= MIN_SUPPORT else math.inf)
        if not np.isfinite(means).any():
            return replace(candidate, status=Status.DISCARDED, note="line misses the image"), None
        if means[0] == means[1]:
            # symmetric: the half ending at the larger (x, y) endpoint
            ends = [tuple(h[1]) for h in halves]
            pick = 0 if ends[0] >= ends[1] else 1
        else:
            pick = int(np.argmin(means))
    else:
        td = np.asarray(turbulent_direction, float)
        pick = None
        for k, h in enumerate(halves):
            if h is None:
                continue
            cosang = float(np.clip(h[2] @ td, -1.0, 1.0))
            if math.degrees(math.acos(cosang)) <= cone + 1e-9:
                pick = k
                break
        if pick is None:
            return replace(candidate, status=Status.DISCARDED, note="outside the half-line cone"), None
    foot, end, d = halves[pick]
    return replace(candidate, endpoints=(tuple(map(float, foot)), tuple(map(float, end)))), d


def confirm_wakes(candidates, config: DetectConfig, source_id: str = "", snapshot=None,
                  diagnostics=()) -> WakeReport:
    """Apply the F-index rule and assemble the report."""
    out = []
    for c in candidates:
        kind = WakeKind(c.kind)
        if not c.searched:
            out.append(replace(c, status=Status.NOT_SEARCHED))
            continue
        f = c.f_index
        if f is None or c.endpoints is None:
            ok = False
        elif kind is WakeKind.TURBULENT:
            ok = f < config.turbulent_margin
        else:
            ok = f > config.f_margin
        out.append(replace(c, status=Status.CONFIRMED if ok else Status.DISCARDED))
    order = {k: i for i, k in enumerate(WakeKind)}
    out.sort(key=lambda c: order[WakeKind(c.kind)])
    return WakeReport(tuple(out), source_id, dict(snapshot or {}), tuple(diagnostics))


@dataclass(frozen=True)
class Analysis:
    """Everything the pipeline computes before the F-index margins are applied."""

    candidates: tuple
    estimate: np.ndarray | None
    iterations: int
    diagnostics: tuple = ()
    source_id: str = ""

    def report(self, config: DetectConfig, snapshot=None) -> WakeReport:
        return confirm_wakes(self.candidates, config, self.source_id, snapshot, self.diagnostics)


def _search(X, angles, A, cfg: DetectConfig, diag):
    region = restrict_search(X.shape, A, angles)
    found = {}
    try:
        t, n1 = detect_tn_pair(X, region, angles, cfg.tn_window, cfg.tn_min_sep)
    except NoCandidates as exc:
        diag.append(f"tn_pair: {exc}")
        return {k: WakeCandidate(k) for k in WakeKind}
    found[WakeKind.TURBULENT], found[WakeKind.NARROW1] = t, n1
    found[WakeKind.NARROW2] = detect_second_narrow(X, region, angles, t, n1, cfg.tn_window, cfg.tn_min_sep)
    found[WakeKind.KELVIN1], found[WakeKind.KELVIN2] = detect_kelvin(
        X, region, angles, t, cfg.kelvin_window, cfg.kelvin_offset)
    return found


def _confirmable(image, mask, ship_center, found, cfg: DetectConfig, diag):
    out = {}
    turb, tdir = resolve_halfline(image, found[WakeKind.TURBULENT], ship_center, mask)
    out[WakeKind.TURBULENT] = turb
    for kind in WakeKind:
        if kind is WakeKind.TURBULENT:
            continue
        c = found[kind]
        if not c.searched:
            out[kind] = c
            continue
        if tdir is None:
            out[kind] = replace(c, status=Status.DISCARDED, note="turbulent half-line unresolved")
            continue
        out[kind], _ = resolve_halfline(image, c, ship_center, mask, tdir, cfg.halfline_cone)
    for kind, c in out.items():
        if c.endpoints is None:
            continue
        try:
            out[kind] = replace(c, f_index=f_index(image, c.endpoints[0], c.endpoints[1], mask))
        except InsufficientSupport as exc:
            diag.append(f"{kind.value}: {exc}")
            out[kind] = replace(c, endpoints=None, status=Status.DISCARDED, note=str(exc))
    return out


def analyze(image, ship_center, solver_config: SolverConfig, config: DetectConfig | None = None,
            n_angles: int = 180, source_id: str = "", op: RadonOperator | None = None,
            return_result: bool = False):
    """Run every pipeline stage except the final margin test.

    ``ship_center`` is ``(x, y)`` in centred pixel coordinates.  Solver
    failures (:class:`SolverDivergence`, ``FloatingPointError``) propagate;
    failures of later stages leave the affected wakes unsearched and are
    listed in the diagnostics.
    """
    cfg = config or DetectConfig()
    image = np.asarray(image, float)
    if image.ndim != 2 or image.shape[0] != image.shape[1]:
        raise ValueError(f"image must be square, got shape {image.shape}")
    if not np.all(np.isfinite(image)):
        raise ValueError("image contains non-finite pixels")
    size = image.shape[0]
    A = cfg.resolved_A(size)
    mask = mask_ship(size, ship_center, cfg.mask_radius)
    if op is None:
        op = RadonOperator(size, n_angles, mask)
    result = solve(image, solver_config, mask=mask, op=op)
    X = result.estimate
    angles = op.grid.degrees
    diag = []
    found = _search(X, angles, A, cfg, diag)
    try:
        resolved = _confirmable(image, mask, ship_center, found, cfg, diag)
    except (ValueError, ArithmeticError) as exc:
        log.warning("half-line stage failed: %s", exc)
        diag.append(f"halfline: {exc}")
        resolved = {k: WakeCandidate(k) for k in WakeKind}
    cands = tuple(resolved[k] for k in WakeKind)
    analysis = Analysis(cands, X, result.iterations, tuple(diag), source_id)
    return (analysis, result) if return_result else analysis


def detect_pipeline(image, ship_center, solver_config: SolverConfig, config: DetectConfig | None = None,
                    n_angles: int = 180, source_id: str = "", snapshot=None) -> WakeReport:
    """Mask, invert, search, resolve and confirm; returns the :class:`WakeReport`."""
    cfg = config or DetectConfig()
    analysis = analyze(image, ship_center, solver_config, cfg, n_angles, source_id)
    if snapshot is None:
        snapshot = {"detect": asdict(cfg)}
    return analysis.report(cfg, snapshot)
