"""Per-plane aneurysm size measurement: maximum diameter and cross-sectional
area on each MPR plane, plus the stack-wide maxima and their centerline
positions.  Measuring orthogonal to the centerline avoids the overestimation
of oblique cuts through a curved vessel."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch


def contour_diameter(contour):
    """Maximum pairwise Euclidean distance between contour vertices.

    Returns (diameter_mm, (k1, k2)) with the achieving vertex pair.
    """
    pts = contour.inplane()
    diff = pts[:, None, :] - pts[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    flat = int(np.argmax(d2))
    k1, k2 = divmod(flat, len(pts))
    return float(np.sqrt(d2[k1, k2])), (k1, k2)


def contour_area(contour):
    """Absolute shoelace area of the in-plane contour polygon (mm^2)."""
    pts = contour.inplane()
    x, y = pts[:, 0], pts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    return float(abs(np.sum(x * yn - xn * y)) / 2.0)


@dataclass
class SizeProfile:
    arclengths_mm: np.ndarray
    diameters_mm: np.ndarray
    areas_mm2: np.ndarray
    d_max_mm: float
    d_max_slice: int
    d_max_arclength_mm: float
    a_max_mm2: float
    a_max_slice: int
    a_max_arclength_mm: float

    def to_dict(self):
        return {
            "arclengths_mm": self.arclengths_mm.tolist(),
            "diameters_mm": self.diameters_mm.tolist(),
            "areas_mm2": self.areas_mm2.tolist(),
            "d_max_mm": self.d_max_mm,
            "d_max_slice": self.d_max_slice,
            "d_max_arclength_mm": self.d_max_arclength_mm,
            "a_max_mm2": self.a_max_mm2,
            "a_max_slice": self.a_max_slice,
            "a_max_arclength_mm": self.a_max_arclength_mm,
        }


def size_profile(stack, centerline):
    """Per-slice diameter/area and the argmax values (ties broken by the
    lowest slice index)."""
    if stack.n_slices == 0 or stack.n_slices != len(centerline):
        raise LengthMismatch(
            f"stack has {stack.n_slices} contours, centerline has "
            f"{len(centerline)} points")
    diameters = np.empty(stack.n_slices)
    areas = np.empty(stack.n_slices)
    for i, contour in enumerate(stack):
        diameters[i], _ = contour_diameter(contour)
        areas[i] = contour_area(contour)
    arcs = centerline.arclengths()
    di = int(np.argmax(diameters))
    ai = int(np.argmax(areas))
    return SizeProfile(
        arclengths_mm=arcs,
        diameters_mm=diameters,
        areas_mm2=areas,
        d_max_mm=float(diameters[di]),
        d_max_slice=di,
        d_max_arclength_mm=float(arcs[di]),
        a_max_mm2=float(areas[ai]),
        a_max_slice=ai,
        a_max_arclength_mm=float(arcs[ai]),
    )


def save_profile_csv(path, profile):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["slice", "arc_length_mm", "diameter_mm", "area_mm2"])
        for i in range(len(profile.diameters_mm)):
            w.writerow([i, f"{profile.arclengths_mm[i]:.6g}",
                        f"{profile.diameters_mm[i]:.6g}",
                        f"{profile.areas_mm2[i]:.6g}"])


def save_profile_json(path, profile):
    with open(path, "w") as fh:
        json.dump(profile.to_dict(), fh, indent=1)
        fh.write("\n")
