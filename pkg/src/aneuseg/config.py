"""Pipeline configuration: one JSON document holding every parameter record,
the input/output paths and the RNG seed.  ``default_config()`` emits full
defaults (a self-contained phantom run); loading re-validates all cross-field
constraints."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

from .centerline import PathCostParams
from .endoleak import LeakParams
from .errors import AneuSegError, ConfigError
from .lumen import LumenParams
from .phantom import PhantomSpec
from .thrombus import ThrombusParams
from .volume import OpacityParams


@dataclass
class CenterlineConfig:
    start_voxel: tuple = None   # (i, j, k) or None -> phantom axis start
    end_voxel: tuple = None
    step_mm: float = 2.0
    cost: PathCostParams = field(default_factory=PathCostParams)


@dataclass
class EvaluateConfig:
    truth_lumen_mask: str = None     # RVOL paths; filled automatically on
    truth_aneurysm_mask: str = None  # phantom runs


@dataclass
class OverlayConfig:
    window_center: float = 100.0
    window_width: float = 700.0
    max_overlays: int = 8


@dataclass
class PipelineConfig:
    seed: int = 20240809
    input_volume: str = None
    phantom: PhantomSpec = None
    centerline: CenterlineConfig = field(default_factory=CenterlineConfig)
    opacity: OpacityParams = field(default_factory=OpacityParams)
    lumen: LumenParams = field(default_factory=LumenParams)
    thrombus: ThrombusParams = field(default_factory=ThrombusParams)
    leak: LeakParams = field(default_factory=LeakParams)
    evaluate: EvaluateConfig = field(default_factory=EvaluateConfig)
    overlay: OverlayConfig = field(default_factory=OverlayConfig)
    dump_opacity_z: int = None

    def __post_init__(self):
        # a single opacity section drives the thrombus image force
        object.__setattr__(self, "thrombus",
                           _replace_opacity(self.thrombus, self.opacity))

    def validate(self):
        try:
            self.centerline.cost.validate()
            self.opacity.validate()
            self.lumen.validate()
            self.thrombus.validate()
            self.leak.validate()
            if self.phantom is not None:
                self.phantom.validate()
        except AneuSegError as exc:
            raise ConfigError(str(exc)) from exc
        if self.input_volume is None and self.phantom is None:
            raise ConfigError("need either input_volume or a phantom spec")
        if self.input_volume is not None and (
                self.centerline.start_voxel is None
                or self.centerline.end_voxel is None):
            raise ConfigError(
                "centerline start/end voxels are required for file inputs")
        if self.centerline.step_mm <= 0:
            raise ConfigError("centerline step_mm must be > 0")
        if not math.isclose(self.centerline.cost.lumen_floor,
                            self.lumen.threshold, rel_tol=0, abs_tol=1e-9):
            raise ConfigError(
                "centerline lumen_floor must equal the lumen threshold")
        return self

    def to_dict(self):
        return {
            "seed": self.seed,
            "input_volume": self.input_volume,
            "phantom": None if self.phantom is None else self.phantom.to_dict(),
            "centerline": {
                "start_voxel": _opt_list(self.centerline.start_voxel),
                "end_voxel": _opt_list(self.centerline.end_voxel),
                "step_mm": self.centerline.step_mm,
                "cost": {
                    "lumen_floor": self.centerline.cost.lumen_floor,
                    "soft_cap": self.centerline.cost.soft_cap,
                    "dark_penalty": self.centerline.cost.dark_penalty,
                    "connectivity": self.centerline.cost.connectivity,
                },
            },
            "opacity": {
                "iso_value": self.opacity.iso_value,
                "transition_width": self.opacity.transition_width,
                "max_opacity": self.opacity.max_opacity,
                "gradient_floor": self.opacity.gradient_floor,
            },
            "lumen": {
                "threshold": self.lumen.threshold,
                "upper_threshold": self.lumen.upper_threshold,
                "metal_threshold": self.lumen.metal_threshold,
                "ray_step": self.lumen.ray_step,
                "r_max": self.lumen.r_max,
                "n_rays": self.lumen.n_rays,
                "w_tension": self.lumen.w_tension,
                "w_rigidity": self.lumen.w_rigidity,
                "step_size": self.lumen.step_size,
                "max_iterations": self.lumen.max_iterations,
                "tolerance": self.lumen.tolerance,
                "balloon": self.lumen.balloon,
            },
            "thrombus": {
                "init_offset": self.thrombus.init_offset,
                "sigma_schedule": list(self.thrombus.sigma_schedule),
                "iterations_per_scale": self.thrombus.iterations_per_scale,
                "step_size": self.thrombus.step_size,
                "w_image": self.thrombus.w_image,
                "w_tension": self.thrombus.w_tension,
                "w_rigidity": self.thrombus.w_rigidity,
                "w_constraint": self.thrombus.w_constraint,
                "neighborhood": list(self.thrombus.neighborhood),
                "min_gap": self.thrombus.min_gap,
                "tolerance": self.thrombus.tolerance,
                "r_max": self.thrombus.r_max,
                "kernel_step": self.thrombus.kernel_step,
            },
            "leak": {
                "leak_threshold": self.leak.leak_threshold,
                "metal_threshold": self.leak.metal_threshold,
                "pve_dilation": self.leak.pve_dilation,
                "boundary_erosion": self.leak.boundary_erosion,
                "min_cluster_mm3": self.leak.min_cluster_mm3,
                "connectivity": self.leak.connectivity,
            },
            "evaluate": {
                "truth_lumen_mask": self.evaluate.truth_lumen_mask,
                "truth_aneurysm_mask": self.evaluate.truth_aneurysm_mask,
            },
            "overlay": {
                "window_center": self.overlay.window_center,
                "window_width": self.overlay.window_width,
                "max_overlays": self.overlay.max_overlays,
            },
            "dump_opacity_z": self.dump_opacity_z,
        }

    @staticmethod
    def from_dict(doc):
        try:
            cl = doc.get("centerline", {})
            cfg = PipelineConfig(
                seed=int(doc.get("seed", 0)),
                input_volume=doc.get("input_volume"),
                phantom=(None if doc.get("phantom") is None
                         else PhantomSpec.from_dict(doc["phantom"])),
                centerline=CenterlineConfig(
                    start_voxel=_opt_tuple(cl.get("start_voxel")),
                    end_voxel=_opt_tuple(cl.get("end_voxel")),
                    step_mm=float(cl.get("step_mm", 2.0)),
                    cost=PathCostParams(**cl.get("cost", {})),
                ),
                opacity=OpacityParams(**doc.get("opacity", {})),
                lumen=LumenParams(**doc.get("lumen", {})),
                thrombus=ThrombusParams(
                    **{k: (tuple(v) if isinstance(v, list) else v)
                       for k, v in doc.get("thrombus", {}).items()}),
                leak=LeakParams(**doc.get("leak", {})),
                evaluate=EvaluateConfig(**doc.get("evaluate", {})),
                overlay=OverlayConfig(**doc.get("overlay", {})),
                dump_opacity_z=doc.get("dump_opacity_z"),
            )
        except (TypeError, KeyError, ValueError) as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        return cfg


def _replace_opacity(tp, op):
    kwargs = {f: getattr(tp, f) for f in tp.__dataclass_fields__}
    kwargs["opacity"] = op
    return ThrombusParams(**kwargs)


def _opt_list(v):
    return None if v is None else [int(x) for x in v]


def _opt_tuple(v):
    return None if v is None else tuple(int(x) for x in v)


def default_phantom_spec():
    """The stock 128^3 phantom: straight bright tube with a fusiform bump,
    four stent markers on the lumen surface and two leak spheres in the
    thrombus annulus."""
    from .phantom import LeakSpec, LineAxis, MarkerSpec
    return PhantomSpec(
        dims=(128, 128, 128),
        spacing=(1.0, 1.0, 1.0),
        origin=(0.0, 0.0, 0.0),
        # off-lattice axis avoids voxel centers sitting exactly on the
        # analytic class boundaries
        axis=LineAxis((64.25, 64.37, 5.5), (64.25, 64.37, 122.5)),
        stent_markers=[
            MarkerSpec(t=0.30, angle=0.0, radius_mm=1.0),
            MarkerSpec(t=0.45, angle=math.pi / 2, radius_mm=1.0),
            MarkerSpec(t=0.60, angle=math.pi, radius_mm=1.0),
            MarkerSpec(t=0.75, angle=3 * math.pi / 2, radius_mm=1.0),
        ],
        leaks=[
            LeakSpec(t=0.50, angle=math.pi / 4, offset_mm=15.0,
                     radius_mm=4.0, hu=250.0),
            LeakSpec(t=0.58, angle=4.0, offset_mm=13.5,
                     radius_mm=3.5, hu=250.0),
        ],
        noise_sigma=15.0,
        rng_seed=20240809,
    )


def default_config():
    """Full pipeline defaults: a self-contained noisy phantom run.

    The opacity iso value sits midway between the phantom thrombus and
    background HU so the transfer function fires on the outer boundary; the
    narrow transition width suppresses the much stronger lumen and metal
    gradients.  The init offset is raised to the typical thrombus thickness
    so the outer contours start near the boundary in the bump region too.
    """
    return PipelineConfig(
        phantom=default_phantom_spec(),
        opacity=OpacityParams(iso_value=-5.0, transition_width=0.5,
                              max_opacity=1.0, gradient_floor=1.0),
        thrombus=ThrombusParams(init_offset=6.0),
    )


def save_config(path, cfg):
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=1)
        fh.write("\n")


def load_config(path):
    with open(path) as fh:
        doc = json.load(fh)
    return PipelineConfig.from_dict(doc).validate()


def config_hash(cfg):
    """SHA-256 of the canonical JSON encoding."""
    blob = json.dumps(cfg.to_dict(), sort_keys=True,
                      separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()
