"""Inner (lumen) boundary segmentation.

Rays are sent out radially with equal angular spacing on each MPR plane and
marched until the intensity drops below the lower lumen threshold; metal
samples above the stent threshold are capped and treated as lumen interior so
rays pass through markers.  The resulting contour stack is regularized by a
simple threshold-based 3D active contour: angular/longitudinal Laplacian
smoothing plus a unit balloon force toward the threshold crossing.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .contours import (FLAG_OUT_OF_VOLUME, FLAG_R_MAX, FLAG_THRESHOLD_HIT,
                       ContourStack, RadialContour, ray_directions)
from .errors import CenterBelowThreshold, InvalidParam
from .volume import _blend, trilinear_clamped, trilinear_sample


@dataclass(frozen=True)
class LumenParams:
    threshold: float = 150.0        # lower lumen threshold, HU
    upper_threshold: float = 800.0  # auxiliary threshold, diagnostics only
    metal_threshold: float = 1500.0  # stent metal, HU (shared with endoleak)
    ray_step: float = 0.25          # mm
    r_max: float = 40.0             # mm
    n_rays: int = 72                # 5 degree angular spacing
    w_tension: float = 1.0          # angular Laplacian weight
    w_rigidity: float = 0.5         # longitudinal Laplacian weight
    step_size: float = 0.2          # mm per unit force
    max_iterations: int = 200
    tolerance: float = 0.01         # mm, convergence on max |delta r|
    balloon: float = 1.0            # threshold force weight, 0 disables

    def validate(self):
        if not (self.threshold < self.upper_threshold < self.metal_threshold):
            raise InvalidParam(
                "thresholds must satisfy threshold < upper_threshold < "
                "metal_threshold")
        if self.ray_step <= 0:
            raise InvalidParam("ray_step must be > 0")
        if self.r_max <= self.ray_step:
            raise InvalidParam("r_max must exceed ray_step")
        if self.n_rays < 8:
            raise InvalidParam("n_rays must be >= 8")
        if self.max_iterations < 1 or self.tolerance <= 0 or self.step_size <= 0:
            raise InvalidParam("bad ACM iteration parameters")
        return self


def _first_true(mask):
    """Per-row index of the first True, or ncols when a row has none."""
    has = mask.any(axis=1)
    return np.where(has, mask.argmax(axis=1), mask.shape[1])


def cast_lumen_contour(vol, center, frame_u, frame_v, lp):
    """March rays outward from the centerline point until HU < threshold.

    The boundary radius is refined by one linear interpolation between the
    bracketing samples.  Rays reaching r_max or leaving the volume are
    flagged instead.
    """
    lp.validate()
    center = np.asarray(center, dtype=float).reshape(3)
    center_val = min(trilinear_sample(vol, center), lp.metal_threshold)
    if center_val < lp.threshold:
        raise CenterBelowThreshold(
            f"center HU {center_val:.1f} < threshold {lp.threshold}")

    dirs = ray_directions(frame_u, frame_v, lp.n_rays)
    n_steps = int(np.floor(lp.r_max / lp.ray_step + 1e-9))
    s = (np.arange(n_steps) + 1) * lp.ray_step
    pts = center[None, None, :] + s[None, :, None] * dirs[:, None, :]

    q = vol.world_to_index(pts.reshape(-1, 3))
    dims = np.asarray(vol.dims, dtype=float)
    inb = np.all((q >= -1e-9) & (q <= dims - 1.0 + 1e-9), axis=1)
    vals = np.full(len(q), -np.inf)
    if inb.any():
        vals[inb] = _blend(vol, q[inb])
    vals = vals.reshape(lp.n_rays, n_steps)
    inb = inb.reshape(lp.n_rays, n_steps)

    capped = np.minimum(vals, lp.metal_threshold)  # metal is lumen-interior
    oob_idx = _first_true(~inb)
    below_idx = _first_true((capped < lp.threshold) & inb)

    radii = np.full(lp.n_rays, lp.r_max)
    flags = np.full(lp.n_rays, FLAG_R_MAX, dtype=np.uint8)

    hit = below_idx < oob_idx
    if hit.any():
        m = below_idx[hit]
        prev = np.concatenate(
            [np.full((lp.n_rays, 1), center_val), capped[:, :-1]], axis=1)
        v_prev = prev[hit, m]
        v_cur = capped[hit, m]
        frac = (v_prev - lp.threshold) / (v_prev - v_cur)
        radii[hit] = m * lp.ray_step + frac * lp.ray_step
        flags[hit] = FLAG_THRESHOLD_HIT

    left = (~hit) & (oob_idx < n_steps)
    if left.any():
        last_inside = np.maximum(oob_idx[left], 1) * lp.ray_step
        radii[left] = np.minimum(last_inside, lp.r_max)
        flags[left] = FLAG_OUT_OF_VOLUME

    radii = np.maximum(radii, 1e-9)
    return RadialContour(center, frame_u, frame_v, radii, flags)


def _worker_count():
    env = os.environ.get("ANEU_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def cast_lumen_stack(vol, centerline, lp):
    """Cast one contour per centerline point (independent per plane; worker
    count capped by ANEU_THREADS)."""
    items = list(zip(centerline.points, centerline.frames_u,
                     centerline.frames_v))
    workers = _worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            contours = list(pool.map(
                lambda it: cast_lumen_contour(vol, it[0], it[1], it[2], lp),
                items))
    else:
        contours = [cast_lumen_contour(vol, p, u, v, lp)
                    for p, u, v in items]
    return ContourStack(
        centers=[c.center for c in contours],
        frames_u=[c.frame_u for c in contours],
        frames_v=[c.frame_v for c in contours],
        radii=[c.radii for c in contours],
        flags=[c.flags for c in contours],
    )


def _laplacians(r):
    l_ang = np.roll(r, 1, axis=1) - 2.0 * r + np.roll(r, -1, axis=1)
    up = np.vstack([r[:1], r[:-1]])      # slice index clamped at ends
    down = np.vstack([r[1:], r[-1:]])
    l_lon = up - 2.0 * r + down
    return l_ang, l_lon


def regularize_lumen(stack, vol, lp):
    """Threshold-based 3D ACM over the (angle, slice) radius grid.

    Jacobi updates: r += step * (w_t * L_angular + w_r * L_longitudinal + F)
    with F = +-balloon depending on whether the vertex still samples above
    the threshold.  When an update would carry a vertex across the sub-voxel
    threshold crossing, the vertex lands on the crossing instead, which makes
    the converged contour a true fixed point.  Radii stay in
    (ray_step, r_max].
    """
    lp.validate()
    r = stack.radii.astype(float).copy()
    dirs = stack.ray_dirs()
    centers = stack.centers[:, None, :]
    thr = lp.threshold

    def sample(radii):
        pts = centers + radii[..., None] * dirs
        return trilinear_clamped(vol, pts.reshape(-1, 3)).reshape(radii.shape)

    for _ in range(lp.max_iterations):
        l_ang, l_lon = _laplacians(r)
        f = sample(r)
        force = np.where(f >= thr, 1.0, -1.0) * lp.balloon
        r_new = r + lp.step_size * (lp.w_tension * l_ang
                                    + lp.w_rigidity * l_lon + force)
        r_new = np.clip(r_new, lp.ray_step, lp.r_max)
        if lp.balloon != 0.0:
            f_new = sample(r_new)
            crossed = (f >= thr) != (f_new >= thr)
            if crossed.any():
                denom = np.where(crossed, f - f_new, 1.0)
                frac = np.clip((f - thr) / denom, 0.0, 1.0)
                r_new = np.where(crossed, r + frac * (r_new - r), r_new)
        delta = float(np.max(np.abs(r_new - r)))
        r = r_new
        if delta < lp.tolerance:
            break
    return stack.with_radii(r)


def threshold_band_report(vol, stack, lp):
    """Diagnostic: per slice, the fraction of ray samples (up to the cast
    radius) whose HU lies in [threshold, upper_threshold).  Large fractions
    flag planes where a single threshold is ambiguous."""
    out = []
    for c in stack:
        n_steps = np.maximum((c.radii / lp.ray_step).astype(int), 1)
        total = 0
        in_band = 0
        smax = int(n_steps.max())
        s = (np.arange(smax) + 1) * lp.ray_step
        pts = c.center[None, None, :] + s[None, :, None] * c.ray_dirs()[:, None, :]
        vals = trilinear_clamped(vol, pts.reshape(-1, 3)).reshape(len(c.radii),
                                                                  smax)
        for k in range(len(c.radii)):
            v = vals[k, :n_steps[k]]
            total += len(v)
            in_band += int(np.count_nonzero(
                (v >= lp.threshold) & (v < lp.upper_threshold)))
        out.append(in_band / max(total, 1))
    return out
