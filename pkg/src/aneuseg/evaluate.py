"""Quantitative evaluation against reference segmentations: Dice similarity
and one-directional surface-distance statistics (test-mesh vertices sampled
against a Euclidean distance map built from the reference surface)."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import BothEmpty, EmptyReference, GridMismatch
from .geometry import distance_map, triangulate, voxelize
from .volume import BinaryMask, Volume, same_grid, trilinear_sample


def dice(a, b):
    """Dice Similarity Coefficient 2|a n b| / (|a| + |b|)."""
    if not same_grid(a, b):
        raise GridMismatch("dice: masks live on different grids")
    na, nb = a.count(), b.count()
    if na + nb == 0:
        raise BothEmpty("dice of two empty masks is undefined")
    inter = int(np.count_nonzero(a.data & b.data))
    return 2.0 * inter / (na + nb)


def reference_surface(mask):
    """Reference-mask voxels with at least one background face neighbor
    (voxels beyond the grid count as background)."""
    occ = np.pad(mask.data, 1, mode="constant", constant_values=False)
    all_neighbors = np.ones(mask.data.shape, dtype=bool)
    for ax in range(3):
        lo = [slice(1, -1)] * 3
        hi = [slice(1, -1)] * 3
        lo[ax] = slice(0, -2)
        hi[ax] = slice(2, None)
        all_neighbors &= occ[tuple(lo)] & occ[tuple(hi)]
    surf = mask.data & ~all_neighbors
    return BinaryMask(mask.dims, mask.spacing, mask.origin, surf)


@dataclass
class SurfaceStats:
    mean_dist_mm: float
    std_dist_mm: float
    max_dist_mm: float
    pct_under_1mm: float
    pct_under_2mm: float

    def to_dict(self):
        return {
            "mean_dist_mm": self.mean_dist_mm,
            "std_dist_mm": self.std_dist_mm,
            "max_dist_mm": self.max_dist_mm,
            "pct_under_1mm": self.pct_under_1mm,
            "pct_under_2mm": self.pct_under_2mm,
        }


def surface_distance_stats(mesh, reference):
    """Distance from each test-mesh vertex to the reference surface, sampled
    trilinearly from the surface distance map."""
    surf = reference_surface(reference)
    if surf.count() == 0:
        raise EmptyReference("reference mask is empty")
    dmap = Volume(reference.dims, reference.spacing, reference.origin,
                  distance_map(surf))
    di = trilinear_sample(dmap, mesh.vertices)
    return SurfaceStats(
        mean_dist_mm=float(np.mean(di)),
        std_dist_mm=float(np.std(di)),
        max_dist_mm=float(np.max(di)),
        pct_under_1mm=float(np.count_nonzero(di < 1.0) / len(di) * 100.0),
        pct_under_2mm=float(np.count_nonzero(di < 2.0) / len(di) * 100.0),
    )


@dataclass
class EvalReport:
    dsc: float
    mean_dist_mm: float
    std_dist_mm: float
    max_dist_mm: float
    pct_under_1mm: float
    pct_under_2mm: float

    def to_dict(self):
        return {
            "dsc": self.dsc,
            "mean_dist_mm": self.mean_dist_mm,
            "std_dist_mm": self.std_dist_mm,
            "max_dist_mm": self.max_dist_mm,
            "pct_under_1mm": self.pct_under_1mm,
            "pct_under_2mm": self.pct_under_2mm,
        }


def evaluate_pair(test_stack, truth_mask, grid=None):
    """Triangulate and voxelize the test stack, then compare against the
    reference mask (Dice) and its surface (distance statistics)."""
    if truth_mask.count() == 0:
        raise BothEmpty("truth mask is empty")
    grid = truth_mask if grid is None else grid
    mesh = triangulate(test_stack)
    test_mask = voxelize(mesh, grid)
    d = dice(test_mask, truth_mask)
    stats = surface_distance_stats(mesh, truth_mask)
    return EvalReport(dsc=d, **stats.to_dict())


def save_report(path, reports):
    """Write one or more named EvalReports as JSON."""
    doc = {name: rep.to_dict() for name, rep in reports.items()}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
