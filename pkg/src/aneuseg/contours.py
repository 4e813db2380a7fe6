"""Radial contours and contour stacks.

A contour is a closed curve on an MPR plane, parameterized as radii along
fixed-angle rays from the centerline point: ray k points along
cos(k*delta)*u + sin(k*delta)*v with delta = 2*pi / n_rays.  A stack of
contours, one per centerline point, forms a tube.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import GeometryMismatch, InvalidParam

FLAG_THRESHOLD_HIT = 0
FLAG_R_MAX = 1
FLAG_OUT_OF_VOLUME = 2

FLAG_NAMES = ("threshold_hit", "r_max", "out_of_volume")
_FLAG_CODES = {name: code for code, name in enumerate(FLAG_NAMES)}


def ray_directions(u, v, n_rays):
    """Unit ray directions (n_rays, 3) in the plane spanned by (u, v)."""
    ang = np.arange(n_rays) * (2.0 * np.pi / n_rays)
    return np.cos(ang)[:, None] * np.asarray(u) \
        + np.sin(ang)[:, None] * np.asarray(v)


@dataclass
class RadialContour:
    """One closed contour: center, MPR frame and per-ray radii/flags."""

    center: np.ndarray
    frame_u: np.ndarray
    frame_v: np.ndarray
    radii: np.ndarray
    flags: np.ndarray = None

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float).reshape(3)
        self.frame_u = np.asarray(self.frame_u, dtype=float).reshape(3)
        self.frame_v = np.asarray(self.frame_v, dtype=float).reshape(3)
        self.radii = np.asarray(self.radii, dtype=float).reshape(-1)
        if self.flags is None:
            self.flags = np.zeros(len(self.radii), dtype=np.uint8)
        else:
            self.flags = np.asarray(self.flags, dtype=np.uint8).reshape(-1)
        if len(self.radii) < 3:
            raise InvalidParam("a contour needs at least 3 rays")
        if len(self.flags) != len(self.radii):
            raise InvalidParam("flags and radii lengths differ")

    @property
    def n_rays(self):
        return len(self.radii)

    @property
    def delta(self):
        return 2.0 * np.pi / self.n_rays

    def ray_dirs(self):
        return ray_directions(self.frame_u, self.frame_v, self.n_rays)

    def vertices(self):
        """World positions (n_rays, 3) of the contour vertices."""
        return self.center + self.radii[:, None] * self.ray_dirs()

    def inplane(self):
        """In-plane (u, v) coordinates (n_rays, 2)."""
        ang = np.arange(self.n_rays) * self.delta
        return np.column_stack([self.radii * np.cos(ang),
                                self.radii * np.sin(ang)])


@dataclass
class ContourStack:
    """Ordered contours sharing n_rays; order matches the centerline."""

    centers: np.ndarray      # (n, 3)
    frames_u: np.ndarray     # (n, 3)
    frames_v: np.ndarray     # (n, 3)
    radii: np.ndarray        # (n, n_rays)
    flags: np.ndarray = None  # (n, n_rays) uint8

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=float).reshape(-1, 3)
        self.frames_u = np.asarray(self.frames_u, dtype=float).reshape(-1, 3)
        self.frames_v = np.asarray(self.frames_v, dtype=float).reshape(-1, 3)
        self.radii = np.atleast_2d(np.asarray(self.radii, dtype=float))
        n = len(self.centers)
        if self.frames_u.shape != (n, 3) or self.frames_v.shape != (n, 3):
            raise InvalidParam("frames must match the number of centers")
        if self.radii.shape[0] != n:
            raise InvalidParam("radius grid must match the number of centers")
        if self.radii.shape[1] < 3:
            raise InvalidParam("a contour stack needs at least 3 rays")
        if self.flags is None:
            self.flags = np.zeros(self.radii.shape, dtype=np.uint8)
        else:
            self.flags = np.asarray(self.flags, dtype=np.uint8)
            if self.flags.shape != self.radii.shape:
                raise InvalidParam("flags grid must match radii grid")

    @property
    def n_slices(self):
        return self.radii.shape[0]

    @property
    def n_rays(self):
        return self.radii.shape[1]

    @property
    def delta(self):
        return 2.0 * np.pi / self.n_rays

    def contour(self, i):
        return RadialContour(self.centers[i], self.frames_u[i],
                             self.frames_v[i], self.radii[i], self.flags[i])

    def __iter__(self):
        return (self.contour(i) for i in range(self.n_slices))

    def ray_dirs(self):
        """Unit ray directions (n, n_rays, 3)."""
        ang = np.arange(self.n_rays) * self.delta
        return (np.cos(ang)[None, :, None] * self.frames_u[:, None, :]
                + np.sin(ang)[None, :, None] * self.frames_v[:, None, :])

    def vertices(self):
        """World vertex positions (n, n_rays, 3)."""
        return self.centers[:, None, :] + self.radii[..., None] * self.ray_dirs()

    def with_radii(self, radii, flags=None):
        return ContourStack(self.centers, self.frames_u, self.frames_v,
                            radii, self.flags if flags is None else flags)


def check_same_geometry(a, b):
    """Raise GeometryMismatch unless both stacks share centers, frames and
    ray counts."""
    if a.n_rays != b.n_rays or a.n_slices != b.n_slices:
        raise GeometryMismatch(
            f"stack geometry differs: {a.n_slices}x{a.n_rays} vs "
            f"{b.n_slices}x{b.n_rays}")
    if not (np.allclose(a.centers, b.centers, atol=1e-9)
            and np.allclose(a.frames_u, b.frames_u, atol=1e-9)
            and np.allclose(a.frames_v, b.frames_v, atol=1e-9)):
        raise GeometryMismatch("stack centers/frames differ")


def save_stack(path, stack, extra=None):
    doc = {
        "n_rays": stack.n_rays,
        "delta_rad": stack.delta,
        "contours": [
            {
                "center": stack.centers[i].tolist(),
                "u": stack.frames_u[i].tolist(),
                "v": stack.frames_v[i].tolist(),
                "radii": stack.radii[i].tolist(),
                "flags": [FLAG_NAMES[c] for c in stack.flags[i]],
            }
            for i in range(stack.n_slices)
        ],
    }
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_stack(path):
    with open(path) as fh:
        doc = json.load(fh)
    cs = doc["contours"]
    stack = ContourStack(
        centers=[c["center"] for c in cs],
        frames_u=[c["u"] for c in cs],
        frames_v=[c["v"] for c in cs],
        radii=[c["radii"] for c in cs],
        flags=[[_FLAG_CODES[name] for name in c["flags"]] for c in cs],
    )
    if stack.n_rays != doc.get("n_rays", stack.n_rays):
        raise InvalidParam(f"{path}: inconsistent n_rays")
    return stack
