"""Mesh construction from contour stacks, voxelization, mask morphology and
Euclidean distance maps."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import (DegenerateStack, EmptyMask, GridMismatch, InvalidParam,
                     NonWatertight)
from .volume import BinaryMask, same_grid


@dataclass
class TriMesh:
    """Triangulated surface: world-mm vertices and index triples, oriented
    outward (positive signed volume) when produced by triangulate()."""

    vertices: np.ndarray   # (V, 3) float
    triangles: np.ndarray  # (F, 3) int

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles,
                                    dtype=np.intp).reshape(-1, 3)

    def signed_volume(self):
        a = self.vertices[self.triangles[:, 0]]
        b = self.vertices[self.triangles[:, 1]]
        c = self.vertices[self.triangles[:, 2]]
        return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)

    def edge_count(self):
        edges = set()
        for t in self.triangles:
            for e in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
                edges.add((min(e), max(e)))
        return len(edges)


def is_watertight(mesh):
    """True iff every directed edge appears exactly once (each undirected
    edge shared by exactly two consistently oriented triangles)."""
    directed = Counter()
    for t in mesh.triangles:
        for e in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            directed[e] += 1
    for (a, b), n in directed.items():
        if n != 1 or directed.get((b, a), 0) != 1:
            return False
    return True


def triangulate(stack):
    """Close a contour stack into a watertight triangle mesh.

    Consecutive contours are joined by quad strips (matching ray indices),
    each quad split into two triangles; the tube ends are closed by fans to
    the contour centroids.  Output is oriented so the signed volume is
    positive.
    """
    n, m = stack.n_slices, stack.n_rays
    if n < 2:
        raise DegenerateStack("need at least 2 contours to triangulate")
    ring = stack.vertices().reshape(n * m, 3)
    c0 = stack.vertices()[0].mean(axis=0)
    c1 = stack.vertices()[-1].mean(axis=0)
    verts = np.vstack([ring, c0[None, :], c1[None, :]])
    i_c0, i_c1 = n * m, n * m + 1

    tris = []
    for i in range(n - 1):
        base0 = i * m
        base1 = (i + 1) * m
        for k in range(m):
            k1 = (k + 1) % m
            a, b = base0 + k, base0 + k1
            c, d = base1 + k1, base1 + k
            tris.append((a, b, c))
            tris.append((a, c, d))
    for k in range(m):
        k1 = (k + 1) % m
        tris.append((i_c0, k1, k))                          # start cap
        tris.append((i_c1, (n - 1) * m + k, (n - 1) * m + k1))  # end cap

    mesh = TriMesh(verts, np.asarray(tris))
    if mesh.signed_volume() < 0:
        mesh = TriMesh(verts, mesh.triangles[:, ::-1])
    if not is_watertight(mesh):
        raise DegenerateStack("triangulation produced a non-watertight mesh")
    return mesh


def save_obj(path, mesh):
    """ASCII OBJ export (v/f records, mm units, 1-based indices)."""
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write("v {:.9g} {:.9g} {:.9g}\n".format(*v))
        for t in mesh.triangles:
            fh.write("f {} {} {}\n".format(t[0] + 1, t[1] + 1, t[2] + 1))


def load_obj(path):
    verts, tris = [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                tris.append([int(x.split("/")[0]) - 1 for x in parts[1:4]])
    return TriMesh(np.asarray(verts), np.asarray(tris))


# ---------------------------------------------------------------------------
# Voxelization: x-axis ray parity with perturbation tie-breaking
# ---------------------------------------------------------------------------

def voxelize(mesh, grid):
    """Binary mask of voxel centers inside a watertight mesh.

    Parity counting along +x rays: for each (y, z) voxel row the mesh
    triangles are projected onto the yz plane and crossings toggle occupancy
    along x.  Query rows are jittered by a fixed sub-nanometer offset so a
    row through a shared edge or vertex is counted consistently exactly once.
    """
    if not is_watertight(mesh):
        raise NonWatertight("voxelize requires a watertight mesh")
    nx, ny, nz = grid.dims
    sx, sy, sz = (float(s) for s in grid.spacing)
    ox, oy, oz = (float(o) for o in grid.origin)

    toggles = np.zeros((ny, nz, nx + 1), dtype=np.uint8)
    tv = mesh.vertices[mesh.triangles]  # (F, 3, 3)

    # deterministic jitter, far below any meaningful geometry scale
    jy = 1e-7 * sy * 0.6180339887498949
    jz = 1e-7 * sz * 0.4142135623730951

    ys = oy + np.arange(ny) * sy + jy
    zs = oz + np.arange(nz) * sz + jz

    for tri in tv:
        y0, y1, y2 = tri[:, 1]
        z0, z1, z2 = tri[:, 2]
        # twice the signed projected area; degenerate projections cannot be
        # crossed transversally by an x-ray
        area = (y1 - y0) * (z2 - z0) - (z1 - z0) * (y2 - y0)
        if area == 0.0:
            continue
        jlo = max(0, int(np.ceil((min(y0, y1, y2) - jy - oy) / sy)))
        jhi = min(ny - 1, int(np.floor((max(y0, y1, y2) - jy - oy) / sy)))
        klo = max(0, int(np.ceil((min(z0, z1, z2) - jz - oz) / sz)))
        khi = min(nz - 1, int(np.floor((max(z0, z1, z2) - jz - oz) / sz)))
        if jlo > jhi or klo > khi:
            continue
        yq = ys[jlo:jhi + 1][:, None]
        zq = zs[klo:khi + 1][None, :]
        w0 = ((y2 - y1) * (zq - z1) - (z2 - z1) * (yq - y1)) / area
        w1 = ((y0 - y2) * (zq - z2) - (z0 - z2) * (yq - y2)) / area
        w2 = 1.0 - w0 - w1
        inside = (w0 > 0) & (w1 > 0) & (w2 > 0)
        if not inside.any():
            continue
        xc = (w0 * tri[0, 0] + w1 * tri[1, 0] + w2 * tri[2, 0])
        jj, kk = np.nonzero(inside)
        # first voxel index whose center lies beyond the crossing
        idx = np.floor((xc[jj, kk] - ox) / sx).astype(int) + 1
        idx = np.clip(idx, 0, nx)
        np.add.at(toggles, (jj + jlo, kk + klo, idx), 1)

    parity = np.cumsum(toggles[:, :, :nx], axis=2) % 2
    occ = np.ascontiguousarray(np.moveaxis(parity, 2, 0)).astype(bool)
    return BinaryMask(grid.dims, grid.spacing, grid.origin, occ)


# ---------------------------------------------------------------------------
# Mask morphology and distance maps
# ---------------------------------------------------------------------------

def ball_offsets(radius, spacing):
    """Structuring element covering voxel offsets within Euclidean distance
    <= radius, anisotropic-spacing aware."""
    spacing = np.asarray(spacing, dtype=float)
    r = np.floor(radius / spacing + 1e-9).astype(int)
    dx = np.arange(-r[0], r[0] + 1)
    dy = np.arange(-r[1], r[1] + 1)
    dz = np.arange(-r[2], r[2] + 1)
    d2 = ((dx[:, None, None] * spacing[0]) ** 2
          + (dy[None, :, None] * spacing[1]) ** 2
          + (dz[None, None, :] * spacing[2]) ** 2)
    return d2 <= radius ** 2 * (1.0 + 1e-12) + 1e-12


def dilate(mask, radius):
    """Occupied iff any originally occupied voxel center lies within
    Euclidean distance <= radius."""
    if radius < 0:
        raise InvalidParam("dilation radius must be >= 0")
    if radius == 0 or not mask.data.any():
        return BinaryMask(mask.dims, mask.spacing, mask.origin,
                          mask.data.copy())
    selem = ball_offsets(radius, mask.spacing)
    out = ndimage.binary_dilation(mask.data, structure=selem)
    return BinaryMask(mask.dims, mask.spacing, mask.origin, out)


def erode(mask, radius):
    """Keep voxels whose distance to the nearest unoccupied voxel center
    exceeds radius (complement of dilating the complement)."""
    if radius < 0:
        raise InvalidParam("erosion radius must be >= 0")
    if radius == 0:
        return BinaryMask(mask.dims, mask.spacing, mask.origin,
                          mask.data.copy())
    dist = ndimage.distance_transform_edt(mask.data,
                                          sampling=tuple(mask.spacing))
    return BinaryMask(mask.dims, mask.spacing, mask.origin, dist > radius)


def subtract(a, b):
    """Voxelwise a AND NOT b."""
    if not same_grid(a, b):
        raise GridMismatch("subtract: masks live on different grids")
    return BinaryMask(a.dims, a.spacing, a.origin, a.data & ~b.data)


def distance_map(mask):
    """Exact Euclidean distance (mm) from each voxel center to the nearest
    occupied voxel center; 0 on occupied voxels."""
    if not mask.data.any():
        raise EmptyMask("distance_map of an empty mask")
    return ndimage.distance_transform_edt(~mask.data,
                                          sampling=tuple(mask.spacing))
