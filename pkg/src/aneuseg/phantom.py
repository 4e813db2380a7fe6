"""Synthetic CTA phantoms with analytic ground truth.

A phantom is a contrast-bright tube (lumen) inside a wider soft-tissue tube
(thrombus) on a darker background, optionally decorated with metal marker
spheres on the lumen surface and contrast-bright leak spheres inside the
thrombus annulus.  Ground-truth masks come from the same analytic
classification, evaluated before noise is added, so every downstream claim
is testable without clinical data.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SpecInvalid
from .volume import BinaryMask, Volume

_BG, _THROMBUS, _LUMEN = 0, 1, 2


@dataclass(frozen=True)
class RadiusProfile:
    """Radius as a function of the axis parameter t in [0, 1]: a constant
    base plus an optional smooth cosine bump (zero value and slope at the
    bump edges)."""

    base: float
    bump_amplitude: float = 0.0
    bump_center: float = 0.5
    bump_width: float = 0.25

    def value(self, t):
        t = np.asarray(t, dtype=float)
        if self.bump_amplitude == 0.0 or self.bump_width <= 0.0:
            return np.full(t.shape, self.base)
        x = np.clip((t - self.bump_center) / self.bump_width, -1.0, 1.0)
        return self.base + self.bump_amplitude * 0.5 * (1.0 + np.cos(np.pi * x))

    def max_value(self):
        if self.bump_amplitude <= 0.0:
            return self.base
        if 0.0 <= self.bump_center <= 1.0:
            return self.base + self.bump_amplitude
        return float(np.max(self.value(np.linspace(0, 1, 2001))))

    def argmax_t(self):
        if self.bump_amplitude <= 0.0:
            return 0.0
        return float(np.clip(self.bump_center, 0.0, 1.0))

    def to_dict(self):
        return {"base": self.base, "bump_amplitude": self.bump_amplitude,
                "bump_center": self.bump_center, "bump_width": self.bump_width}

    @staticmethod
    def from_dict(d):
        if isinstance(d, (int, float)):
            return RadiusProfile(base=float(d))
        return RadiusProfile(**d)


class LineAxis:
    """Straight axis segment from start to end, parameterized t in [0, 1]."""

    kind = "line"

    def __init__(self, start, end):
        self.start = np.asarray(start, dtype=float).reshape(3)
        self.end = np.asarray(end, dtype=float).reshape(3)
        self._vec = self.end - self.start
        self.length = float(np.linalg.norm(self._vec))
        if self.length <= 0:
            raise SpecInvalid("line axis has zero length")
        self._dir = self._vec / self.length

    def point(self, t):
        t = np.asarray(t, dtype=float)
        return self.start + t[..., None] * self._vec

    def tangent(self, t):
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(self._dir, t.shape + (3,)).copy()

    def classify_coords(self, pts):
        """Per-point (t, perpendicular distance); t outside [0, 1] means the
        point projects beyond the segment ends."""
        rel = pts - self.start
        t = rel @ self._dir / self.length
        perp = rel - np.outer(t * self.length, self._dir)
        return t, np.linalg.norm(perp, axis=1)

    def arclength(self, t):
        return t * self.length

    def to_dict(self):
        return {"kind": "line", "start": self.start.tolist(),
                "end": self.end.tolist()}


class ArcAxis:
    """Circular arc: center, radius, orthonormal in-plane basis (e1, e2) and
    an angle range; point(t) = center + R (cos(a) e1 + sin(a) e2) with
    a = angle_start + t * (angle_end - angle_start)."""

    kind = "arc"

    def __init__(self, center, radius, e1, e2, angle_start, angle_end):
        self.center = np.asarray(center, dtype=float).reshape(3)
        self.radius = float(radius)
        e1 = np.asarray(e1, dtype=float).reshape(3)
        e2 = np.asarray(e2, dtype=float).reshape(3)
        self.e1 = e1 / np.linalg.norm(e1)
        e2 = e2 - (e2 @ self.e1) * self.e1
        self.e2 = e2 / np.linalg.norm(e2)
        self.angle_start = float(angle_start)
        self.angle_end = float(angle_end)
        self.span = self.angle_end - self.angle_start
        if self.radius <= 0 or abs(self.span) <= 0 or abs(self.span) >= 2 * np.pi:
            raise SpecInvalid("arc axis needs radius > 0 and 0 < |span| < 2*pi")
        self.length = self.radius * abs(self.span)

    def _angles(self, t):
        return self.angle_start + np.asarray(t, dtype=float) * self.span

    def point(self, t):
        a = self._angles(t)
        return (self.center + self.radius
                * (np.cos(a)[..., None] * self.e1
                   + np.sin(a)[..., None] * self.e2))

    def tangent(self, t):
        a = self._angles(t)
        d = (-np.sin(a)[..., None] * self.e1
             + np.cos(a)[..., None] * self.e2)
        return d * np.sign(self.span)

    def classify_coords(self, pts):
        rel = pts - self.center
        x = rel @ self.e1
        y = rel @ self.e2
        n = np.cross(self.e1, self.e2)
        h = rel @ n
        rho = np.hypot(x, y)
        theta = np.arctan2(y, x)
        psi = np.mod((theta - self.angle_start) * np.sign(self.span),
                     2.0 * np.pi)
        t = psi / abs(self.span)
        dist = np.sqrt(h ** 2 + (rho - self.radius) ** 2)
        return t, dist

    def arclength(self, t):
        return t * self.length

    def to_dict(self):
        return {"kind": "arc", "center": self.center.tolist(),
                "radius": self.radius, "e1": self.e1.tolist(),
                "e2": self.e2.tolist(), "angle_start": self.angle_start,
                "angle_end": self.angle_end}


def axis_from_dict(d):
    kind = d.get("kind")
    if kind == "line":
        return LineAxis(d["start"], d["end"])
    if kind == "arc":
        return ArcAxis(d["center"], d["radius"], d["e1"], d["e2"],
                       d["angle_start"], d["angle_end"])
    raise SpecInvalid(f"unknown axis kind '{kind}'")


def _axis_frame(axis, t):
    """Deterministic orthonormal (u, v) pair spanning the plane orthogonal to
    the axis tangent at t."""
    tan = axis.tangent(np.asarray(t, dtype=float))
    ref = np.zeros(3)
    ref[int(np.argmin(np.abs(tan)))] = 1.0
    u = ref - (ref @ tan) * tan
    u = u / np.linalg.norm(u)
    v = np.cross(tan, u)
    return u, v


@dataclass(frozen=True)
class MarkerSpec:
    """Metal marker sphere sitting on the lumen surface."""
    t: float
    angle: float
    radius_mm: float = 1.0


@dataclass(frozen=True)
class LeakSpec:
    """Contrast-bright sphere stamped inside the thrombus annulus."""
    t: float
    angle: float
    offset_mm: float
    radius_mm: float
    hu: float = 250.0

    def analytic_volume_mm3(self):
        return 4.0 / 3.0 * math.pi * self.radius_mm ** 3


@dataclass
class PhantomSpec:
    dims: tuple = (128, 128, 128)
    spacing: tuple = (1.0, 1.0, 1.0)
    origin: tuple = (0.0, 0.0, 0.0)
    axis: object = None
    lumen_radius: RadiusProfile = field(
        default_factory=lambda: RadiusProfile(base=8.0))
    outer_radius: RadiusProfile = field(
        default_factory=lambda: RadiusProfile(base=13.0, bump_amplitude=8.0,
                                              bump_center=0.5,
                                              bump_width=0.35))
    hu_background: float = -50.0
    hu_thrombus: float = 40.0
    hu_lumen: float = 300.0
    hu_metal: float = 2000.0
    min_gap: float = 2.0
    stent_markers: list = field(default_factory=list)
    leaks: list = field(default_factory=list)
    noise_sigma: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.axis is None:
            self.axis = LineAxis((64.0, 64.0, 6.0), (64.0, 64.0, 122.0))

    def validate(self):
        tgrid = np.linspace(0.0, 1.0, 512)
        r_in = self.lumen_radius.value(tgrid)
        r_out = self.outer_radius.value(tgrid)
        if np.any(r_in <= 0):
            raise SpecInvalid("lumen radius must be positive for all t")
        if np.any(r_out < r_in + self.min_gap - 1e-9):
            raise SpecInvalid(
                "outer_radius must exceed lumen_radius + min_gap for all t")
        if not (self.hu_lumen > self.hu_thrombus):
            raise SpecInvalid("lumen HU must exceed thrombus HU")
        if not (self.hu_metal > self.hu_lumen):
            raise SpecInvalid("metal HU must exceed lumen HU")
        for leak in self.leaks:
            if not (leak.hu > self.hu_thrombus):
                raise SpecInvalid("leak HU must exceed thrombus HU")
        if self.noise_sigma < 0:
            raise SpecInvalid("noise_sigma must be >= 0")
        # outer surface plus 2 voxels of margin must fit into the grid; a
        # disc orthogonal to the tangent extends r*sqrt(1 - tangent_a^2)
        # along world axis a
        spacing = np.asarray(self.spacing, dtype=float)
        origin = np.asarray(self.origin, dtype=float)
        hi = origin + (np.asarray(self.dims) - 1) * spacing
        pts = self.axis.point(tgrid)
        tan = self.axis.tangent(tgrid)
        disc = np.sqrt(np.maximum(0.0, 1.0 - tan ** 2))
        pad = r_out[:, None] * disc + 2.0 * spacing[None, :]
        if np.any(pts - pad < origin - 1e-9) or np.any(pts + pad > hi + 1e-9):
            raise SpecInvalid(
                "dims too small: outer surface plus 2 voxel margin exceeds "
                "the grid")
        return self

    def to_dict(self):
        return {
            "dims": list(self.dims),
            "spacing": list(self.spacing),
            "origin": list(self.origin),
            "axis": self.axis.to_dict(),
            "lumen_radius": self.lumen_radius.to_dict(),
            "outer_radius": self.outer_radius.to_dict(),
            "hu_background": self.hu_background,
            "hu_thrombus": self.hu_thrombus,
            "hu_lumen": self.hu_lumen,
            "hu_metal": self.hu_metal,
            "min_gap": self.min_gap,
            "stent_markers": [[m.t, m.angle, m.radius_mm]
                              for m in self.stent_markers],
            "leaks": [[l.t, l.angle, l.offset_mm, l.radius_mm, l.hu]
                      for l in self.leaks],
            "noise_sigma": self.noise_sigma,
            "rng_seed": self.rng_seed,
        }

    @staticmethod
    def from_dict(d):
        return PhantomSpec(
            dims=tuple(d["dims"]),
            spacing=tuple(d["spacing"]),
            origin=tuple(d["origin"]),
            axis=axis_from_dict(d["axis"]),
            lumen_radius=RadiusProfile.from_dict(d["lumen_radius"]),
            outer_radius=RadiusProfile.from_dict(d["outer_radius"]),
            hu_background=float(d.get("hu_background", -50.0)),
            hu_thrombus=float(d.get("hu_thrombus", 40.0)),
            hu_lumen=float(d.get("hu_lumen", 300.0)),
            hu_metal=float(d.get("hu_metal", 2000.0)),
            min_gap=float(d.get("min_gap", 2.0)),
            stent_markers=[MarkerSpec(*m) for m in d.get("stent_markers", [])],
            leaks=[LeakSpec(*l) for l in d.get("leaks", [])],
            noise_sigma=float(d.get("noise_sigma", 0.0)),
            rng_seed=int(d.get("rng_seed", 0)),
        )


@dataclass
class GroundTruth:
    lumen_mask: BinaryMask
    aneurysm_mask: BinaryMask
    leak_masks: list
    axis_t: np.ndarray
    axis_points: np.ndarray
    axis_length_mm: float
    d_max_mm: float
    d_max_t: float
    d_max_arclength_mm: float
    seed_start_voxel: tuple
    seed_end_voxel: tuple
    leak_info: list
    marker_info: list

    def manifest(self, spec):
        return {
            "phantom": spec.to_dict(),
            "axis_length_mm": self.axis_length_mm,
            "axis_samples_t": self.axis_t.tolist(),
            "axis_samples_xyz": self.axis_points.tolist(),
            "d_max_mm": self.d_max_mm,
            "d_max_t": self.d_max_t,
            "d_max_arclength_mm": self.d_max_arclength_mm,
            "seed_start_voxel": list(self.seed_start_voxel),
            "seed_end_voxel": list(self.seed_end_voxel),
            "leaks": self.leak_info,
            "markers": self.marker_info,
        }


def _sphere_indices(center, radius, dims, spacing, origin):
    """Voxel indices (N, 3) whose centers lie within radius of center."""
    center = np.asarray(center, dtype=float)
    spacing = np.asarray(spacing, dtype=float)
    origin = np.asarray(origin, dtype=float)
    lo = np.maximum(np.ceil((center - radius - origin) / spacing), 0).astype(int)
    hi = np.minimum(np.floor((center + radius - origin) / spacing),
                    np.asarray(dims) - 1).astype(int)
    if np.any(lo > hi):
        return np.empty((0, 3), dtype=int)
    ii, jj, kk = np.meshgrid(np.arange(lo[0], hi[0] + 1),
                             np.arange(lo[1], hi[1] + 1),
                             np.arange(lo[2], hi[2] + 1), indexing="ij")
    idx = np.column_stack([ii.ravel(), jj.ravel(), kk.ravel()])
    world = origin + idx * spacing
    keep = np.linalg.norm(world - center, axis=1) <= radius + 1e-12
    return idx[keep]


def _nearest_voxel(p, dims, spacing, origin):
    idx = np.rint((np.asarray(p) - np.asarray(origin))
                  / np.asarray(spacing)).astype(int)
    idx = np.clip(idx, 0, np.asarray(dims) - 1)
    return tuple(int(v) for v in idx)


def generate(spec):
    """Generate a phantom Volume plus its analytic GroundTruth.

    Every voxel is classified by the distance from its center to the axis
    curve (lumen / thrombus / background, with no end caps beyond the
    parameter range); markers and leaks are stamped afterwards, and i.i.d.
    Gaussian noise is added last so the ground-truth masks stay exact.
    """
    spec.validate()
    dims = tuple(int(d) for d in spec.dims)
    spacing = np.asarray(spec.spacing, dtype=float)
    origin = np.asarray(spec.origin, dtype=float)

    ii, jj, kk = np.meshgrid(np.arange(dims[0]), np.arange(dims[1]),
                             np.arange(dims[2]), indexing="ij")
    pts = np.column_stack([ii.ravel(), jj.ravel(), kk.ravel()]) * spacing + origin

    t, dist = spec.axis.classify_coords(pts)
    in_band = (t >= 0.0) & (t <= 1.0)
    r_in = spec.lumen_radius.value(np.clip(t, 0.0, 1.0))
    r_out = spec.outer_radius.value(np.clip(t, 0.0, 1.0))

    cls = np.full(len(pts), _BG, dtype=np.uint8)
    cls[in_band & (dist < r_out)] = _THROMBUS
    cls[in_band & (dist < r_in)] = _LUMEN
    cls = cls.reshape(dims)

    lumen_mask = BinaryMask(dims, spacing, origin, cls == _LUMEN)
    aneurysm_mask = BinaryMask(dims, spacing, origin, cls != _BG)

    hu = np.full(dims, spec.hu_background, dtype=np.float64)
    hu[cls == _THROMBUS] = spec.hu_thrombus
    hu[cls == _LUMEN] = spec.hu_lumen

    marker_info = []
    for m in spec.stent_markers:
        u, v = _axis_frame(spec.axis, m.t)
        center = (spec.axis.point(np.float64(m.t))
                  + float(spec.lumen_radius.value(np.float64(m.t)))
                  * (math.cos(m.angle) * u + math.sin(m.angle) * v))
        idx = _sphere_indices(center, m.radius_mm, dims, spacing, origin)
        if len(idx):
            hu[idx[:, 0], idx[:, 1], idx[:, 2]] = spec.hu_metal
        marker_info.append({"center_xyz": center.tolist(),
                            "radius_mm": m.radius_mm,
                            "voxels": int(len(idx))})

    leak_masks = []
    leak_info = []
    for leak in spec.leaks:
        u, v = _axis_frame(spec.axis, leak.t)
        center = (spec.axis.point(np.float64(leak.t))
                  + leak.offset_mm
                  * (math.cos(leak.angle) * u + math.sin(leak.angle) * v))
        idx = _sphere_indices(center, leak.radius_mm, dims, spacing, origin)
        mask = np.zeros(dims, dtype=bool)
        if len(idx):
            inside_annulus = cls[idx[:, 0], idx[:, 1], idx[:, 2]] == _THROMBUS
            idx = idx[inside_annulus]
            mask[idx[:, 0], idx[:, 1], idx[:, 2]] = True
            hu[idx[:, 0], idx[:, 1], idx[:, 2]] = leak.hu
        lm = BinaryMask(dims, spacing, origin, mask)
        leak_masks.append(lm)
        leak_info.append({
            "center_xyz": center.tolist(),
            "radius_mm": leak.radius_mm,
            "hu": leak.hu,
            "analytic_volume_mm3": leak.analytic_volume_mm3(),
            "mask_volume_mm3": lm.volume_mm3(),
        })

    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.rng_seed)
        hu = hu + rng.normal(0.0, spec.noise_sigma, size=dims)
    hu = np.clip(np.rint(hu), -32768, 32767).astype(np.int16)
    vol = Volume(dims, spacing, origin, hu)

    tgrid = np.linspace(0.0, 1.0, 257)
    axis_pts = spec.axis.point(tgrid)
    t_star = spec.outer_radius.argmax_t()
    truth = GroundTruth(
        lumen_mask=lumen_mask,
        aneurysm_mask=aneurysm_mask,
        leak_masks=leak_masks,
        axis_t=tgrid,
        axis_points=axis_pts,
        axis_length_mm=float(spec.axis.length),
        d_max_mm=2.0 * spec.outer_radius.max_value(),
        d_max_t=t_star,
        d_max_arclength_mm=float(spec.axis.arclength(np.float64(t_star))),
        seed_start_voxel=_nearest_voxel(spec.axis.point(np.float64(0.0)),
                                        dims, spacing, origin),
        seed_end_voxel=_nearest_voxel(spec.axis.point(np.float64(1.0)),
                                      dims, spacing, origin),
        leak_info=leak_info,
        marker_info=marker_info,
    )
    return vol, truth


def save_manifest(path, spec, truth):
    with open(path, "w") as fh:
        json.dump(truth.manifest(spec), fh, indent=1)
        fh.write("\n")
