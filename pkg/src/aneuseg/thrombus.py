"""Outer (thrombus) boundary segmentation.

The outer contour stack starts as the inner stack dilated by a fixed offset
and is then deformed under four radial force terms: the opacity image force
(a derivative-of-Gaussian convolved along each ray, with the kernel width
reduced over a coarse-to-fine schedule), angular and longitudinal Laplacian
smoothing, and a distance constraint that pulls each vertex toward the local
average inner/outer separation.  A hard clamp keeps every outer radius at
least min_gap beyond the inner radius, so the boundaries can never intersect.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter

from .contours import check_same_geometry
from .errors import InvalidParam
from .volume import (DerivKernel, OpacityParams, _opacity_from_fg,
                     make_deriv_kernel, opacity_clamped)


@dataclass(frozen=True)
class ThrombusParams:
    init_offset: float = 3.0                 # mm, inner-contour dilation
    sigma_schedule: tuple = (4.0, 2.0, 1.0)  # mm, strictly decreasing
    iterations_per_scale: int = 100
    step_size: float = 0.2                   # mm per unit force
    w_image: float = 12.0
    w_tension: float = 0.6                   # angular Laplacian
    w_rigidity: float = 0.3                  # longitudinal Laplacian
    w_constraint: float = 0.5                # distance constraint weight
    neighborhood: tuple = (2, 2)             # half-widths (slices, rays)
    min_gap: float = 0.5                     # mm, hard inner/outer separation
    tolerance: float = 0.01                  # mm
    r_max: float = 40.0                      # mm
    kernel_step: float = 0.5                 # mm, kernel sample spacing
    opacity: OpacityParams = field(default_factory=OpacityParams)

    def validate(self):
        sched = tuple(self.sigma_schedule)
        if not sched or any(s <= 0 for s in sched):
            raise InvalidParam("sigma_schedule must be positive")
        if any(a <= b for a, b in zip(sched, sched[1:])):
            raise InvalidParam("sigma_schedule must be strictly decreasing")
        if self.min_gap <= 0:
            raise InvalidParam("min_gap must be > 0")
        if self.w_constraint < 0:
            raise InvalidParam("w_constraint must be >= 0")
        if self.kernel_step <= 0 or self.step_size <= 0:
            raise InvalidParam("step sizes must be > 0")
        if self.iterations_per_scale < 1:
            raise InvalidParam("iterations_per_scale must be >= 1")
        a, b = self.neighborhood
        if a < 0 or b < 0:
            raise InvalidParam("neighborhood half-widths must be >= 0")
        self.opacity.validate()
        return self


def init_outer(inner, offset):
    """Dilate the inner contours radially by a fixed offset (same centers,
    frames and ray count)."""
    return inner.with_radii(inner.radii + float(offset))


# ---------------------------------------------------------------------------
# Image force (opacity convolved with a derivative-of-Gaussian along rays)
# ---------------------------------------------------------------------------

def ray_convolve(opacity_fn, vertices, ray_dirs, kernel):
    """Discrete convolution of the opacity with the derivative kernel along
    each ray: sum_k taps[k] * alpha(v - k*step*dir).

    This is the directional derivative of the sigma-smoothed opacity, so
    applying it as radial velocity drives a vertex toward the nearest local
    opacity maximum along its ray.  Accepts (..., 3) vertex/direction arrays.
    """
    vertices = np.asarray(vertices, dtype=float)
    ray_dirs = np.asarray(ray_dirs, dtype=float)
    offs = kernel.offsets
    pts = (vertices[..., None, :]
           - offs[..., :, None] * ray_dirs[..., None, :])
    alpha = opacity_fn(pts.reshape(-1, 3)).reshape(pts.shape[:-1])
    return alpha @ kernel.taps


def image_force(vol, vertex, ray_dir, kernel, op):
    """Signed image force along ray_dir at a vertex; out-of-range kernel
    samples use the nearest in-range opacity."""
    out = ray_convolve(lambda pts: opacity_clamped(vol, pts, op),
                       vertex, ray_dir, kernel)
    return float(out) if np.ndim(out) == 0 else out


class OpacityField:
    """Fast opacity sampler backed by precomputed central-difference fields.

    Per-point math is identical to opacity_clamped: trilinear blending is
    linear, so blending the voxelwise central differences equals differencing
    two shifted trilinear samples.
    """

    def __init__(self, vol, op):
        if min(vol.dims) < 3:
            raise InvalidParam("opacity sampling needs dims >= 3 per axis")
        self.vol = vol
        self.op = op
        d = np.asarray(vol.data, dtype=np.float64)
        fields = [d]
        for ax in range(3):
            g = np.zeros_like(d)
            sl_mid = [slice(None)] * 3
            sl_hi = [slice(None)] * 3
            sl_lo = [slice(None)] * 3
            sl_mid[ax] = slice(1, -1)
            sl_hi[ax] = slice(2, None)
            sl_lo[ax] = slice(None, -2)
            g[tuple(sl_mid)] = d[tuple(sl_hi)] - d[tuple(sl_lo)]
            fields.append(g / (2.0 * vol.spacing[ax]))
        # (n_voxels, 4) layout: one contiguous gather per corner serves all
        # four fields
        self._flat = np.ascontiguousarray(
            np.stack([f.reshape(-1) for f in fields], axis=1))

    def __call__(self, pts):
        vol = self.vol
        nx, ny, nz = vol.dims
        q = vol.world_to_index(np.atleast_2d(np.asarray(pts, dtype=float)))
        dims = np.asarray(vol.dims)
        q = np.clip(q, 1.0, np.maximum(dims - 2.0, 1.0))
        i0 = np.clip(np.floor(q).astype(np.intp), 0, np.maximum(dims - 2, 0))
        f = q - i0
        fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]
        gx, gy, gz = 1.0 - fx, 1.0 - fy, 1.0 - fz
        base = (i0[:, 0] * ny + i0[:, 1]) * nz + i0[:, 2]
        sx, sy, sz = ny * nz, nz, 1
        w = (gx * gy * gz, fx * gy * gz, gx * fy * gz, gx * gy * fz,
             fx * fy * gz, fx * gy * fz, gx * fy * fz, fx * fy * fz)
        offs = (0, sx, sy, sz, sx + sy, sx + sz, sy + sz, sx + sy + sz)
        acc = np.zeros((len(q), 4))
        for wi, off in zip(w, offs):
            acc += wi[:, None] * self._flat.take(base + off, axis=0)
        val, dx, dy, dz = acc.T
        grad = np.sqrt(dx * dx + dy * dy + dz * dz)
        return _opacity_from_fg(val, grad, self.op)


# ---------------------------------------------------------------------------
# Distance constraint force
# ---------------------------------------------------------------------------

def _min_distance_grid(outer_vertices, inner_vertices):
    """Per-vertex shortest distance from each outer vertex to any inner
    vertex on the same or adjacent slices (slice indices clamped).

    The candidate search runs on the expanded-square form (one matmul); the
    returned distance is then recomputed exactly on the winning pair.
    """
    n, m = outer_vertices.shape[:2]
    nb = np.stack([np.clip(np.arange(n) + d, 0, n - 1) for d in (-1, 0, 1)],
                  axis=1)
    cand = inner_vertices[nb].reshape(n, 3 * m, 3)
    o = outer_vertices
    dot = o @ cand.transpose(0, 2, 1)                       # (n, m, 3m)
    d2 = (np.einsum("abc,abc->ab", o, o)[:, :, None]
          + np.einsum("abc,abc->ab", cand, cand)[:, None, :] - 2.0 * dot)
    amin = d2.argmin(axis=2)
    nearest = cand[np.arange(n)[:, None], amin]
    return np.linalg.norm(o - nearest, axis=-1)


def _mean_separation_grid(outer_radii, inner_radii, neighborhood):
    """Windowed mean of the per-ray separations r_outer - r_inner; the window
    wraps in angle and clamps at the end slices."""
    a, b = neighborhood
    sep = outer_radii - inner_radii
    if a == 0 and b == 0:
        return sep.copy()
    return uniform_filter(sep, size=(2 * a + 1, 2 * b + 1),
                          mode=("nearest", "wrap"))


def eq_constraint(w_con, d_min, d_mean, inward_normal):
    """Constraint force vector w_con * (d_min - d_mean) * n for given scalars
    and inward unit normal."""
    return w_con * (d_min - d_mean) * np.asarray(inward_normal, dtype=float)


def constraint_force(outer, inner, i, k, tp):
    """Distance constraint force at outer vertex (slice i, ray k).

    Returns (vector, radial scalar): the vector along the inward normal
    (approximated by -ray_dir) and its projection onto +ray_dir.  Vertices
    farther out than the local average separation are pulled inward.
    """
    check_same_geometry(outer, inner)
    d_min = _min_distance_grid(outer.vertices(), inner.vertices())[i, k]
    d_mean = _mean_separation_grid(outer.radii, inner.radii,
                                   tp.neighborhood)[i, k]
    ray_dir = outer.ray_dirs()[i, k]
    vec = eq_constraint(tp.w_constraint, d_min, d_mean, -ray_dir)
    radial = -tp.w_constraint * (d_min - d_mean)
    return vec, float(radial)


# ---------------------------------------------------------------------------
# Multi-scale deformation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScaleLog:
    sigma: float
    iterations: int
    final_delta: float
    converged: bool


def _laplacians(r):
    l_ang = np.roll(r, 1, axis=1) - 2.0 * r + np.roll(r, -1, axis=1)
    up = np.vstack([r[:1], r[:-1]])
    down = np.vstack([r[1:], r[-1:]])
    return l_ang, up - 2.0 * r + down


def deform_step(radii, inner_radii, dirs, centers, inner_vertices,
                opacity_fn, kernel, tp):
    """One Jacobi iteration of the outer-contour update; returns the clamped
    next radius grid."""
    verts = centers[:, None, :] + radii[..., None] * dirs
    f_img = ray_convolve(opacity_fn, verts, dirs, kernel)
    l_ang, l_lon = _laplacians(radii)
    d_min = _min_distance_grid(verts, inner_vertices)
    d_mean = _mean_separation_grid(radii, inner_radii, tp.neighborhood)
    f_con = -tp.w_constraint * (d_min - d_mean)
    r_new = radii + tp.step_size * (tp.w_image * f_img
                                    + tp.w_tension * l_ang
                                    + tp.w_rigidity * l_lon
                                    + f_con)
    # the non-intersection clamp wins over r_max if the two ever conflict
    r_new = np.minimum(r_new, tp.r_max)
    r_new = np.maximum(r_new, inner_radii + tp.min_gap)
    return r_new


def deform(outer, inner, vol, tp, opacity_fn=None, on_iteration=None):
    """Deform the outer stack under image, smoothing and constraint forces
    over the coarse-to-fine sigma schedule.

    The inner stack stays fixed.  Returns (deformed stack, per-scale
    convergence log).  ``opacity_fn`` defaults to a precomputed-difference
    sampler with the same math as opacity_clamped; ``on_iteration`` is an
    optional hook fed the radius grid after every iteration (diagnostics).
    """
    tp.validate()
    check_same_geometry(outer, inner)
    if opacity_fn is None:
        opacity_fn = OpacityField(vol, tp.opacity)

    radii = outer.radii.astype(float).copy()
    inner_radii = inner.radii
    dirs = outer.ray_dirs()
    centers = outer.centers
    inner_vertices = inner.vertices()

    logs = []
    for sigma in tp.sigma_schedule:
        kernel = make_deriv_kernel(sigma, tp.kernel_step)
        delta = np.inf
        iterations = 0
        for _ in range(tp.iterations_per_scale):
            r_new = deform_step(radii, inner_radii, dirs, centers,
                                inner_vertices, opacity_fn, kernel, tp)
            delta = float(np.max(np.abs(r_new - radii)))
            radii = r_new
            iterations += 1
            if on_iteration is not None:
                on_iteration(sigma, iterations, radii)
            if delta < tp.tolerance:
                break
        logs.append(ScaleLog(sigma=float(sigma), iterations=iterations,
                             final_delta=delta,
                             converged=delta < tp.tolerance))
    return outer.with_radii(radii), logs
