"""Lumen centerline extraction.

Dijkstra's shortest path on the 26-connected voxel graph with an
inverse-contrast edge cost keeps the path inside bright contrast-filled
lumen; the path is then resampled to equidistant points, and each point gets
a unit tangent plus an orthonormal (u, v) MPR-plane frame propagated by
minimal rotation so contours vary smoothly between adjacent planes.
"""

from __future__ import annotations

import heapq
import itertools
import json
from dataclasses import dataclass

import numpy as np

from .errors import (DegeneratePath, InvalidParam, NoPath,
                     SeedBelowThreshold, TooShort)

# lexicographic 26-neighborhood offsets
_OFFSETS = np.array([o for o in itertools.product((-1, 0, 1), repeat=3)
                     if o != (0, 0, 0)], dtype=np.int64)


@dataclass(frozen=True)
class PathCostParams:
    """Edge cost model: step_length_mm * (1 + dark_penalty / (1 +
    max(0, min(HU_target, soft_cap) - lumen_floor))).  Bright voxels up to
    soft_cap are progressively cheaper to enter."""

    lumen_floor: float = 150.0   # HU, shared with the lumen threshold
    soft_cap: float = 400.0      # HU above which cost stops decreasing
    dark_penalty: float = 100.0
    connectivity: int = 26

    def validate(self):
        if self.soft_cap <= self.lumen_floor:
            raise InvalidParam("soft_cap must exceed lumen_floor")
        if self.dark_penalty <= 0:
            raise InvalidParam("dark_penalty must be > 0")
        if self.connectivity != 26:
            raise InvalidParam("only 26-connectivity is supported")
        return self


def _enter_cost(data, pc):
    lifted = np.maximum(0.0, np.minimum(data, pc.soft_cap) - pc.lumen_floor)
    return 1.0 + pc.dark_penalty / (1.0 + lifted)


def extract_path(vol, start, end, pc):
    """Minimum-cost 26-connected voxel path from start to end.

    Ties are broken deterministically by lexicographic neighbor ordering.
    Returns an (n, 3) int array of voxel indices including both seeds.
    """
    pc.validate()
    nx, ny, nz = vol.dims
    start = tuple(int(v) for v in start)
    end = tuple(int(v) for v in end)
    for name, seed in (("start", start), ("end", end)):
        if not all(0 <= seed[a] < vol.dims[a] for a in range(3)):
            raise InvalidParam(f"{name} voxel {seed} outside the volume")
        if vol.value_at_voxel(seed) < pc.lumen_floor:
            raise SeedBelowThreshold(
                f"{name} voxel {seed} has HU "
                f"{vol.value_at_voxel(seed)} < {pc.lumen_floor}")
    if start == end:
        return np.array([start], dtype=int)

    # pad a blocked border so 26-neighbor flat arithmetic never wraps
    px, py, pz = nx + 2, ny + 2, nz + 2
    enter = np.full((px, py, pz), np.inf)
    enter[1:-1, 1:-1, 1:-1] = _enter_cost(
        np.asarray(vol.data, dtype=np.float64), pc)
    enter = enter.ravel(order="C")
    visited = np.zeros(px * py * pz, dtype=bool)
    border = np.zeros((px, py, pz), dtype=bool)
    border[0, :, :] = border[-1, :, :] = True
    border[:, 0, :] = border[:, -1, :] = True
    border[:, :, 0] = border[:, :, -1] = True
    visited |= border.ravel(order="C")

    def to_flat(v):
        return ((v[0] + 1) * py + (v[1] + 1)) * pz + (v[2] + 1)

    flat_offsets = (_OFFSETS[:, 0] * py * pz + _OFFSETS[:, 1] * pz
                    + _OFFSETS[:, 2])
    step_mm = np.linalg.norm(_OFFSETS * vol.spacing[None, :], axis=1)

    dist = np.full(px * py * pz, np.inf)
    pred = np.full(px * py * pz, -1, dtype=np.int64)
    s_flat, e_flat = to_flat(start), to_flat(end)
    dist[s_flat] = 0.0
    counter = itertools.count()
    heap = [(0.0, next(counter), s_flat)]
    offs = list(zip(flat_offsets.tolist(), step_mm.tolist()))

    while heap:
        d, _, u = heapq.heappop(heap)
        if visited[u]:
            continue
        visited[u] = True
        if u == e_flat:
            break
        for foff, smm in offs:
            v = u + foff
            if visited[v]:
                continue
            nd = d + smm * enter[v]
            if nd < dist[v]:
                dist[v] = nd
                pred[v] = u
                heapq.heappush(heap, (nd, next(counter), v))

    if not np.isfinite(dist[e_flat]):
        raise NoPath(f"no finite-cost path from {start} to {end}")

    flat_path = [e_flat]
    while flat_path[-1] != s_flat:
        flat_path.append(int(pred[flat_path[-1]]))
    flat_path.reverse()
    flat = np.asarray(flat_path)
    k = flat % pz - 1
    j = (flat // pz) % py - 1
    i = flat // (py * pz) - 1
    return np.column_stack([i, j, k]).astype(int)


def path_cost(vol, path, pc):
    """Total cost of a voxel path under the same edge-cost model (the target
    voxel of each step pays the contrast-dependent factor)."""
    path = np.asarray(path, dtype=int)
    if len(path) < 2:
        return 0.0
    enter = _enter_cost(np.asarray(vol.data, dtype=np.float64), pc)
    steps = np.diff(path, axis=0)
    step_mm = np.linalg.norm(steps * vol.spacing[None, :], axis=1)
    tgt = path[1:]
    return float(np.sum(step_mm * enter[tgt[:, 0], tgt[:, 1], tgt[:, 2]]))


def resample(points, step_mm):
    """Arc-length resampling of a world polyline at spacing step_mm; the
    first and last original endpoints are preserved (the final segment may
    be shorter than step_mm)."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total < step_mm:
        raise TooShort(
            f"polyline length {total:.3f} mm < step {step_mm:.3f} mm")
    targets = np.arange(0.0, total, step_mm)
    if total - targets[-1] > 1e-9:
        targets = np.append(targets, total)
    out = np.column_stack([np.interp(targets, cum, points[:, a])
                           for a in range(3)])
    out[0] = points[0]
    out[-1] = points[-1]
    return out


def build_frames(points):
    """Tangents by central differences plus minimal-rotation (u, v) frames.

    The first frame picks the coordinate axis least aligned with the tangent
    and projects it; subsequent frames re-project the previous u onto the new
    normal plane, which avoids frame flips on smooth paths.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(points)
    if n < 2:
        raise DegeneratePath("need at least 2 points to build frames")
    seg = np.diff(points, axis=0)
    if np.any(np.linalg.norm(seg, axis=1) < 1e-12):
        raise DegeneratePath("coincident consecutive points")

    tangents = np.empty_like(points)
    tangents[0] = seg[0]
    tangents[-1] = seg[-1]
    if n > 2:
        tangents[1:-1] = points[2:] - points[:-2]
    tangents /= np.linalg.norm(tangents, axis=1)[:, None]

    def fresh_u(t):
        ref = np.zeros(3)
        ref[int(np.argmin(np.abs(t)))] = 1.0
        u = ref - (ref @ t) * t
        return u / np.linalg.norm(u)

    us = np.empty_like(points)
    vs = np.empty_like(points)
    us[0] = fresh_u(tangents[0])
    vs[0] = np.cross(tangents[0], us[0])
    for i in range(1, n):
        t = tangents[i]
        u = us[i - 1] - (us[i - 1] @ t) * t
        norm = np.linalg.norm(u)
        u = u / norm if norm > 1e-9 else fresh_u(t)
        us[i] = u
        vs[i] = np.cross(t, u)
    return tangents, us, vs


@dataclass
class Centerline:
    """Equidistant world-space points with unit tangents and per-point
    orthonormal MPR plane frames (normal = tangent)."""

    points: np.ndarray
    tangents: np.ndarray
    frames_u: np.ndarray
    frames_v: np.ndarray
    step_mm: float

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        self.tangents = np.asarray(self.tangents, dtype=float).reshape(-1, 3)
        self.frames_u = np.asarray(self.frames_u, dtype=float).reshape(-1, 3)
        self.frames_v = np.asarray(self.frames_v, dtype=float).reshape(-1, 3)

    def __len__(self):
        return len(self.points)

    def arclengths(self):
        seg = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(seg)])

    @staticmethod
    def from_polyline(points, step_mm):
        pts = resample(points, step_mm)
        tangents, us, vs = build_frames(pts)
        return Centerline(pts, tangents, us, vs, float(step_mm))


def save_centerline(path, cl):
    doc = {
        "step_mm": cl.step_mm,
        "points": cl.points.tolist(),
        "tangents": cl.tangents.tolist(),
        "frames_u": cl.frames_u.tolist(),
        "frames_v": cl.frames_v.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_centerline(path):
    with open(path) as fh:
        doc = json.load(fh)
    return Centerline(doc["points"], doc["tangents"], doc["frames_u"],
                      doc["frames_v"], float(doc["step_mm"]))
