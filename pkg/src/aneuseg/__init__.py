"""Volumetric lumen/thrombus segmentation, aneurysm measurement and endoleak
detection for CT angiography, validated on synthetic phantoms."""

__version__ = "0.1.0"

from .volume import (BinaryMask, DerivKernel, OpacityParams, Volume,
                     gradient_at, load_mask, load_volume, make_deriv_kernel,
                     opacity_at, save_mask, save_volume, trilinear_sample)
from .contours import ContourStack, RadialContour, load_stack, save_stack
from .centerline import (Centerline, PathCostParams, build_frames,
                         extract_path, load_centerline, path_cost, resample,
                         save_centerline)
from .phantom import (ArcAxis, GroundTruth, LeakSpec, LineAxis, MarkerSpec,
                      PhantomSpec, RadiusProfile, generate)
from .lumen import (LumenParams, cast_lumen_contour, cast_lumen_stack,
                    regularize_lumen)
from .thrombus import (ScaleLog, ThrombusParams, constraint_force, deform,
                       image_force, init_outer, ray_convolve)
from .geometry import (TriMesh, dilate, distance_map, erode, is_watertight,
                       load_obj, save_obj, subtract, triangulate, voxelize)
from .measure import SizeProfile, contour_area, contour_diameter, size_profile
from .endoleak import (EndoleakCluster, LeakParams, build_exclusion_mask,
                       build_thrombus_mask, detect, render_overlay, write_ppm)
from .evaluate import (EvalReport, dice, evaluate_pair, reference_surface,
                       surface_distance_stats)
from .config import (PipelineConfig, config_hash, default_config,
                     load_config, save_config)
from .pipeline import PipelineResult, run_pipeline
