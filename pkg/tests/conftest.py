import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from aneuseg import (Centerline, LineAxis, LumenParams, PathCostParams,
                     PhantomSpec, RadiusProfile, Volume, cast_lumen_stack,
                     extract_path, generate, regularize_lumen)


def make_volume(dims, fn, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)):
    """Volume whose HU at voxel (i,j,k) is fn(x, y, z) in world mm."""
    ii, jj, kk = np.meshgrid(*(np.arange(d) for d in dims), indexing="ij")
    x = origin[0] + ii * spacing[0]
    y = origin[1] + jj * spacing[1]
    z = origin[2] + kk * spacing[2]
    return Volume(dims, spacing, origin, fn(x, y, z).astype(float))


def cylinder_spec(dims=(64, 64, 64), r_in=8.0, r_out=16.0, noise=0.0,
                  seed=0, **kw):
    # off-lattice center and half-integer z band avoid voxel centers landing
    # exactly on classification boundaries
    z0, z1 = 3.5, dims[2] - 4.5
    cx, cy = dims[0] / 2.0 + 0.25, dims[1] / 2.0 + 0.37
    return PhantomSpec(
        dims=dims, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0),
        axis=LineAxis((cx, cy, z0), (cx, cy, z1)),
        lumen_radius=RadiusProfile(r_in), outer_radius=RadiusProfile(r_out),
        noise_sigma=noise, rng_seed=seed, **kw)


@pytest.fixture(scope="session")
def cylinder_phantom():
    """Noiseless straight annulus: lumen 8 mm, outer 16 mm, 1 mm voxels."""
    spec = cylinder_spec()
    vol, truth = generate(spec)
    return spec, vol, truth


@pytest.fixture(scope="session")
def cylinder_inner(cylinder_phantom):
    """Regularized lumen stack on the cylinder phantom."""
    spec, vol, truth = cylinder_phantom
    path = extract_path(vol, truth.seed_start_voxel, truth.seed_end_voxel,
                        PathCostParams())
    cl = Centerline.from_polyline(vol.index_to_world(path), 2.0)
    lp = LumenParams()
    stack = regularize_lumen(cast_lumen_stack(vol, cl, lp), vol, lp)
    return vol, cl, stack
