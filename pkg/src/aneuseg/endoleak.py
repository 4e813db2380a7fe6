"""Endoleak detection inside the thrombus region.

Contrast-bright leak voxels are found by thresholding inside the thrombus
mask after removing two confounders: stent metal (thresholded, then dilated
to also eat the surrounding partial-volume halo) and the thrombus rim (an
erosion-band guard against partial-volume bleed from the bright lumen or the
outer boundary).  Surviving voxels are grouped into 26-connected clusters and
small clusters are discarded.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import GridMismatch, InvalidParam, SliceOutOfRange
from .geometry import dilate, erode, subtract
from .volume import BinaryMask, same_grid

log = logging.getLogger(__name__)

OVERLAY_RGB = (255, 0, 0)

_AXES = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class LeakParams:
    leak_threshold: float = 150.0    # HU
    metal_threshold: float = 1500.0  # HU
    pve_dilation: float = 2.0        # mm, stent-mask dilation
    boundary_erosion: float = 1.0    # mm rim guard, 0 disables
    min_cluster_mm3: float = 20.0
    connectivity: int = 26

    def validate(self):
        if not (self.leak_threshold < self.metal_threshold):
            raise InvalidParam("leak_threshold must be below metal_threshold")
        if self.pve_dilation < 0 or self.boundary_erosion < 0:
            raise InvalidParam("dilation/erosion radii must be >= 0")
        if self.min_cluster_mm3 < 0:
            raise InvalidParam("min_cluster_mm3 must be >= 0")
        if self.connectivity != 26:
            raise InvalidParam("only 26-connectivity is supported")
        return self


@dataclass
class EndoleakCluster:
    voxel_count: int
    volume_mm3: float
    centroid_xyz: tuple
    bbox: tuple          # ((i0, i1), (j0, j1), (k0, k1)) inclusive
    peak_hu: float
    voxels: np.ndarray   # (n, 3) indices, not serialized

    def to_dict(self):
        return {
            "voxel_count": self.voxel_count,
            "volume_mm3": self.volume_mm3,
            "centroid_xyz": list(self.centroid_xyz),
            "bbox": [list(b) for b in self.bbox],
            "peak_hu": self.peak_hu,
        }


def build_thrombus_mask(aneurysm, lumen):
    """Thrombus region = aneurysm volume minus lumen.  A lumen voxel outside
    the aneurysm is suspicious but not fatal; it is logged."""
    if not same_grid(aneurysm, lumen):
        raise GridMismatch("aneurysm and lumen masks live on different grids")
    stray = int(np.count_nonzero(lumen.data & ~aneurysm.data))
    if stray:
        log.warning("lumen mask has %d voxels outside the aneurysm mask",
                    stray)
    return subtract(aneurysm, lumen)


def build_exclusion_mask(vol, lp):
    """Stent metal mask (HU > metal_threshold) dilated by pve_dilation so the
    bright partial-volume shell around markers is excluded too."""
    lp.validate()
    metal = BinaryMask(vol.dims, vol.spacing, vol.origin,
                       np.asarray(vol.data) > lp.metal_threshold)
    return dilate(metal, lp.pve_dilation)


def detect(vol, thrombus, lp):
    """Detect endoleak candidate clusters inside the thrombus mask.

    Candidates = thrombus, minus the dilated metal mask, minus the rim shell
    within boundary_erosion of non-thrombus, thresholded at leak_threshold;
    26-connected components of at least min_cluster_mm3 are returned sorted
    by volume, largest first.
    """
    lp.validate()
    if not same_grid(vol, thrombus):
        raise GridMismatch("volume and thrombus mask grids differ")
    exclusion = build_exclusion_mask(vol, lp)
    core = erode(thrombus, lp.boundary_erosion)
    candidate = (core.data & ~exclusion.data
                 & (np.asarray(vol.data) >= lp.leak_threshold))

    labels, n = ndimage.label(candidate, structure=np.ones((3, 3, 3)))
    if n == 0:
        return []
    counts = np.bincount(labels.ravel())
    voxvol = float(np.prod(vol.spacing))
    min_count = lp.min_cluster_mm3 / voxvol

    clusters = []
    for lab in range(1, n + 1):
        if counts[lab] < min_count:
            continue
        idx = np.argwhere(labels == lab)
        world = vol.origin + idx * vol.spacing
        hu = np.asarray(vol.data)[idx[:, 0], idx[:, 1], idx[:, 2]]
        clusters.append(EndoleakCluster(
            voxel_count=int(counts[lab]),
            volume_mm3=float(counts[lab] * voxvol),
            centroid_xyz=tuple(world.mean(axis=0)),
            bbox=tuple((int(idx[:, a].min()), int(idx[:, a].max()))
                       for a in range(3)),
            peak_hu=float(hu.max()),
            voxels=idx,
        ))
    clusters.sort(key=lambda c: -c.volume_mm3)
    return clusters


def window_to_gray(hu, center=100.0, width=700.0):
    """Window/level mapping from HU to 8-bit gray."""
    lo = center - width / 2.0
    val = np.clip((np.asarray(hu, dtype=float) - lo) / width, 0.0, 1.0)
    return np.rint(val * 255.0).astype(np.uint8)


def render_overlay(vol, clusters, axis="z", index=0, window_center=100.0,
                   window_width=700.0):
    """Windowed grayscale slice with cluster voxels painted in a distinct
    overlay color.

    For axis 'z' the returned image is indexed [i, j, rgb], i.e. a cluster
    voxel (i, j, k) paints pixel (i, j) of slice k.
    """
    ax = _AXES.get(axis)
    if ax is None:
        raise InvalidParam(f"axis must be one of x, y, z, got {axis!r}")
    if not (0 <= index < vol.dims[ax]):
        raise SliceOutOfRange(
            f"slice {index} outside axis {axis} of size {vol.dims[ax]}")
    sl = [slice(None)] * 3
    sl[ax] = index
    gray = window_to_gray(np.asarray(vol.data)[tuple(sl)], window_center,
                          window_width)
    img = np.repeat(gray[:, :, None], 3, axis=2)
    keep = [a for a in range(3) if a != ax]
    for cluster in clusters:
        vox = cluster.voxels
        on_slice = vox[vox[:, ax] == index]
        img[on_slice[:, keep[0]], on_slice[:, keep[1]]] = OVERLAY_RGB
    return img


def write_ppm(path, img):
    """Binary P6 PPM writer for (H, W, 3) uint8 images."""
    img = np.asarray(img, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_ppm(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    parts = blob.split(b"\n", 3)
    if parts[0] != b"P6":
        raise InvalidParam(f"{path}: not a P6 PPM")
    w, h = (int(v) for v in parts[1].split())
    data = np.frombuffer(parts[3], dtype=np.uint8, count=w * h * 3)
    return data.reshape(h, w, 3)


def report_dict(clusters, lp):
    return {
        "params": {
            "leak_threshold": lp.leak_threshold,
            "metal_threshold": lp.metal_threshold,
            "pve_dilation": lp.pve_dilation,
            "boundary_erosion": lp.boundary_erosion,
            "min_cluster_mm3": lp.min_cluster_mm3,
            "connectivity": lp.connectivity,
        },
        "n_clusters": len(clusters),
        "clusters": [c.to_dict() for c in clusters],
    }


def save_report(path, clusters, lp):
    with open(path, "w") as fh:
        json.dump(report_dict(clusters, lp), fh, indent=1)
        fh.write("\n")
