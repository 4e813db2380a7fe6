"""Volumetric containers, trilinear sampling, gradients, the opacity transfer
function and derivative-of-Gaussian kernels.

World convention: a voxel index (i, j, k) sits at ``origin + index * spacing``
(voxel-center convention); sampling is valid on [0, dim-1] per axis in index
space.  Data arrays are indexed ``data[i, j, k]`` with i along x, and stored
x-fastest on disk (RVOL format).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParam, OutOfBounds, RvolError

_EPS = 1e-9


def _as_triple(v, dtype=float):
    a = np.asarray(v, dtype=dtype).reshape(3)
    a.flags.writeable = False
    return a


@dataclass
class Volume:
    """3D scalar grid of CT intensities (HU) with anisotropic spacing.

    Immutable after construction: the data buffer is marked read-only and all
    sampling operations are pure, so concurrent readers are safe.
    """

    dims: tuple
    spacing: np.ndarray
    origin: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        self.dims = tuple(int(d) for d in np.asarray(self.dims).reshape(3))
        if any(d < 1 for d in self.dims):
            raise InvalidParam(f"dims must all be >= 1, got {self.dims}")
        self.spacing = _as_triple(self.spacing)
        if np.any(self.spacing <= 0):
            raise InvalidParam(f"spacing must be > 0, got {self.spacing}")
        self.origin = _as_triple(self.origin)
        data = np.asarray(self.data)
        if data.size != self.dims[0] * self.dims[1] * self.dims[2]:
            raise InvalidParam(
                f"data length {data.size} != product of dims {self.dims}")
        if data.ndim != 3:
            data = data.reshape(self.dims, order="F")
        data = data.copy() if not data.flags.owndata else data
        data.flags.writeable = False
        self.data = data

    @property
    def grid(self):
        return self.dims, tuple(self.spacing), tuple(self.origin)

    def world_to_index(self, pts):
        """World mm -> continuous index coordinates (no bounds check)."""
        return (np.asarray(pts, dtype=float) - self.origin) / self.spacing

    def index_to_world(self, idx):
        return self.origin + np.asarray(idx, dtype=float) * self.spacing

    def value_at_voxel(self, idx):
        i, j, k = (int(v) for v in idx)
        return float(self.data[i, j, k])


@dataclass
class BinaryMask:
    """Voxel occupancy grid with geometry identical to a companion Volume."""

    dims: tuple
    spacing: np.ndarray
    origin: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        self.dims = tuple(int(d) for d in np.asarray(self.dims).reshape(3))
        self.spacing = _as_triple(self.spacing)
        self.origin = _as_triple(self.origin)
        data = np.asarray(self.data)
        if data.size != self.dims[0] * self.dims[1] * self.dims[2]:
            raise InvalidParam(
                f"mask length {data.size} != product of dims {self.dims}")
        if data.ndim != 3:
            data = data.reshape(self.dims, order="F")
        self.data = data.astype(bool)

    @property
    def grid(self):
        return self.dims, tuple(self.spacing), tuple(self.origin)

    def count(self):
        return int(np.count_nonzero(self.data))

    def voxel_volume(self):
        return float(np.prod(self.spacing))

    def volume_mm3(self):
        return self.count() * self.voxel_volume()


def same_grid(a, b):
    return (a.dims == b.dims
            and np.allclose(a.spacing, b.spacing, atol=1e-9)
            and np.allclose(a.origin, b.origin, atol=1e-9))


def empty_mask_like(grid):
    dims = grid.dims
    return BinaryMask(dims, grid.spacing, grid.origin,
                      np.zeros(dims, dtype=bool))


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def _check_region(vol, q, lo, hi_margin, what):
    """Raise OutOfBounds unless q lies in [lo, dim - 1 - hi_margin] per axis."""
    dims = np.asarray(vol.dims, dtype=float)
    hi = dims - 1.0 - hi_margin
    bad = np.any((q < lo - _EPS) | (q > hi + _EPS), axis=-1)
    if np.any(bad):
        p_bad = np.asarray(q)[bad][0] * vol.spacing + vol.origin
        raise OutOfBounds(f"{what}: point {p_bad} outside sampleable region")


def _blend(vol, q):
    """Trilinear blend at continuous index coords q (in-bounds, (N, 3))."""
    dims = np.asarray(vol.dims)
    i0 = np.clip(np.floor(q).astype(np.intp), 0, np.maximum(dims - 2, 0))
    f = q - i0
    i1 = np.minimum(i0 + 1, dims - 1)
    d = vol.data
    x0, y0, z0 = i0[:, 0], i0[:, 1], i0[:, 2]
    x1, y1, z1 = i1[:, 0], i1[:, 1], i1[:, 2]
    fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]
    gx, gy, gz = 1.0 - fx, 1.0 - fy, 1.0 - fz
    return (d[x0, y0, z0] * gx * gy * gz
            + d[x1, y0, z0] * fx * gy * gz
            + d[x0, y1, z0] * gx * fy * gz
            + d[x0, y0, z1] * gx * gy * fz
            + d[x1, y1, z0] * fx * fy * gz
            + d[x1, y0, z1] * fx * gy * fz
            + d[x0, y1, z1] * gx * fy * fz
            + d[x1, y1, z1] * fx * fy * fz)


def trilinear_sample(vol, p):
    """Trilinear interpolation of the volume at world point(s) p (mm).

    Accepts a single (3,) point or an (N, 3) array; returns a float or an
    (N,) array.  Raises OutOfBounds for points outside the voxel-center
    bounding box.
    """
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    q = vol.world_to_index(np.atleast_2d(p))
    _check_region(vol, q, 0.0, 0.0, "trilinear_sample")
    out = _blend(vol, q)
    return float(out[0]) if single else out


def trilinear_clamped(vol, pts):
    """Trilinear sampling with points clamped to the voxel-center bounding
    box (used by ray marching and contour relaxation near the border)."""
    q = vol.world_to_index(np.atleast_2d(np.asarray(pts, dtype=float)))
    dims = np.asarray(vol.dims, dtype=float)
    return _blend(vol, np.clip(q, 0.0, dims - 1.0))


def gradient_at(vol, p):
    """Intensity gradient in HU/mm via central differences of trilinear
    samples, one voxel per axis.  Points must be at least one voxel inside
    the boundary."""
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    pts = np.atleast_2d(p)
    q = vol.world_to_index(pts)
    _check_region(vol, q, 1.0, 1.0, "gradient_at")
    g = np.empty_like(pts)
    for ax in range(3):
        step = np.zeros(3)
        step[ax] = vol.spacing[ax]
        hi = _blend(vol, vol.world_to_index(pts + step))
        lo = _blend(vol, vol.world_to_index(pts - step))
        g[:, ax] = (hi - lo) / (2.0 * vol.spacing[ax])
    return g[0] if single else g


@dataclass(frozen=True)
class OpacityParams:
    """Iso-surface opacity transfer function combining intensity and gradient
    magnitude.  Opacity peaks where the intensity equals ``iso_value`` and the
    gradient is strong; ``gradient_floor`` suppresses flat-region response.
    """

    iso_value: float = 60.0          # HU
    transition_width: float = 2.0    # HU per unit gradient magnitude
    max_opacity: float = 1.0         # in (0, 1]
    gradient_floor: float = 1.0      # HU/mm

    def validate(self):
        if self.transition_width <= 0:
            raise InvalidParam("opacity transition_width must be > 0")
        if not (0.0 < self.max_opacity <= 1.0):
            raise InvalidParam("max_opacity must be in (0, 1]")
        if self.gradient_floor < 0:
            raise InvalidParam("gradient_floor must be >= 0")
        return self


def _opacity_from_fg(f, g, op):
    dev = np.abs(op.iso_value - f)
    flat = g <= op.gradient_floor
    denom = np.where(flat, 1.0, op.transition_width * g)
    band = np.maximum(0.0, 1.0 - dev / denom)
    flat_val = np.where(dev == 0.0, op.max_opacity, 0.0)
    return np.where(flat, flat_val, op.max_opacity * band)


def opacity_at(vol, p, op):
    """Opacity in [0, max_opacity] at world point(s) p.

    With f the trilinear sample and g the gradient magnitude: zero whenever
    |f - iso_value| >= transition_width * g, rising linearly to max_opacity
    on the iso-surface.  Flat regions (g <= gradient_floor) respond only at
    exact iso intensity.
    """
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    pts = np.atleast_2d(p)
    f = trilinear_sample(vol, pts)
    g = np.linalg.norm(gradient_at(vol, pts), axis=-1)
    out = _opacity_from_fg(f, g, op)
    return float(out[0]) if single else out


def opacity_clamped(vol, pts, op):
    """Opacity with out-of-range points clamped to the nearest in-range
    position (the clamped extension used by ray convolution)."""
    q = vol.world_to_index(np.atleast_2d(np.asarray(pts, dtype=float)))
    dims = np.asarray(vol.dims, dtype=float)
    q = np.clip(q, 1.0, np.maximum(dims - 2.0, 1.0))
    pts_c = q * vol.spacing + vol.origin
    f = _blend(vol, q)
    g2 = np.zeros(len(q))
    for ax in range(3):
        step = np.zeros(3)
        step[ax] = vol.spacing[ax]
        hi = _blend(vol, vol.world_to_index(pts_c + step))
        lo = _blend(vol, vol.world_to_index(pts_c - step))
        g2 += ((hi - lo) / (2.0 * vol.spacing[ax])) ** 2
    return _opacity_from_fg(f, np.sqrt(g2), op)


# ---------------------------------------------------------------------------
# Derivative-of-Gaussian kernel
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DerivKernel:
    """Sampled derivative-of-Gaussian kernel along a ray.

    Taps are antisymmetric about the center, sum to zero, and are normalized
    so that convolving a unit ramp (slope 1 per mm) yields exactly 1.
    """

    sigma: float
    step: float
    taps: np.ndarray = field(repr=False)

    @property
    def half_width(self):
        return (len(self.taps) - 1) // 2

    @property
    def offsets(self):
        """Signed tap offsets k*step in mm, k = -K..K."""
        k = np.arange(-self.half_width, self.half_width + 1)
        return k * self.step


def make_deriv_kernel(sigma, step):
    """Build a DerivKernel with 2*ceil(3*sigma/step)+1 taps.

    Taps sample -x/sigma^2 * exp(-x^2 / (2 sigma^2)) at offsets k*step and
    are rescaled so the ramp response -sum(taps[k] * k*step) is exactly 1;
    antisymmetry makes the tap sum exactly zero.
    """
    if sigma <= 0 or step <= 0:
        raise InvalidParam(f"sigma and step must be > 0, got {sigma}, {step}")
    half = int(math.ceil(3.0 * sigma / step - _EPS))
    half = max(half, 1)
    x = np.arange(1, half + 1) * step
    pos = -x / sigma ** 2 * np.exp(-x ** 2 / (2.0 * sigma ** 2))
    taps = np.concatenate([-pos[::-1], [0.0], pos])
    offsets = np.arange(-half, half + 1) * step
    norm = -float(np.dot(taps, offsets))
    taps = taps / norm
    taps.flags.writeable = False
    return DerivKernel(sigma=float(sigma), step=float(step), taps=taps)


# ---------------------------------------------------------------------------
# RVOL file format
# ---------------------------------------------------------------------------

_RVOL_DTYPES = {"int16": np.dtype("<i2"), "uint8": np.dtype("u1")}


def _rvol_header(dims, spacing, origin, dtype_name):
    return "\n".join([
        "RVOL 1",
        "dims {} {} {}".format(*dims),
        "spacing {:.17g} {:.17g} {:.17g}".format(*spacing),
        "origin {:.17g} {:.17g} {:.17g}".format(*origin),
        f"dtype {dtype_name}",
        "data raw-le",
        "",
        "",
    ]).encode("ascii")


def save_volume(path, vol):
    """Write a Volume as RVOL v1 with int16 little-endian data."""
    raw = np.asarray(vol.data)
    data = np.rint(raw).astype("<i2") if raw.dtype.kind == "f" \
        else raw.astype("<i2")
    with open(path, "wb") as fh:
        fh.write(_rvol_header(vol.dims, vol.spacing, vol.origin, "int16"))
        fh.write(data.ravel(order="F").tobytes())


def save_mask(path, mask):
    """Write a BinaryMask as RVOL v1 with uint8 0/1 data."""
    with open(path, "wb") as fh:
        fh.write(_rvol_header(mask.dims, mask.spacing, mask.origin, "uint8"))
        fh.write(mask.data.astype("u1").ravel(order="F").tobytes())


def _load_rvol(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    sep = blob.find(b"\n\n")
    if sep < 0:
        raise RvolError(f"{path}: missing blank line after header")
    try:
        lines = blob[:sep].decode("ascii").splitlines()
    except UnicodeDecodeError as exc:
        raise RvolError(f"{path}: non-ASCII header") from exc
    if not lines or lines[0].strip() != "RVOL 1":
        raise RvolError(f"{path}: not an RVOL v1 file")
    fields = {}
    for line in lines[1:]:
        key, _, rest = line.partition(" ")
        fields[key] = rest.strip()
    try:
        dims = tuple(int(v) for v in fields["dims"].split())
        spacing = tuple(float(v) for v in fields["spacing"].split())
        origin = tuple(float(v) for v in fields["origin"].split())
        dtype_name = fields["dtype"]
    except (KeyError, ValueError) as exc:
        raise RvolError(f"{path}: malformed header ({exc})") from exc
    if fields.get("data") != "raw-le":
        raise RvolError(f"{path}: unsupported data encoding")
    if dtype_name not in _RVOL_DTYPES:
        raise RvolError(f"{path}: unsupported dtype '{dtype_name}'")
    dt = _RVOL_DTYPES[dtype_name]
    n = dims[0] * dims[1] * dims[2]
    payload = blob[sep + 2:]
    if len(payload) != n * dt.itemsize:
        raise RvolError(
            f"{path}: expected {n * dt.itemsize} data bytes, "
            f"got {len(payload)}")
    data = np.frombuffer(payload, dtype=dt, count=n).reshape(dims, order="F")
    return dims, spacing, origin, dtype_name, data


def load_volume(path):
    dims, spacing, origin, dtype_name, data = _load_rvol(path)
    if dtype_name != "int16":
        raise RvolError(f"{path}: expected int16 volume, got {dtype_name}")
    return Volume(dims, spacing, origin, data.astype(np.int16))


def load_mask(path):
    dims, spacing, origin, dtype_name, data = _load_rvol(path)
    if dtype_name != "uint8":
        raise RvolError(f"{path}: expected uint8 mask, got {dtype_name}")
    return BinaryMask(dims, spacing, origin, data != 0)
