"""End-to-end orchestration: centerline -> lumen -> thrombus -> measurement
-> endoleak detection -> (optional) evaluation, with every artifact written
to the output directory and a run manifest recording config hash, version
and stage timings."""

from __future__ import annotations

import json
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .centerline import Centerline, extract_path, save_centerline
from .config import config_hash
from .contours import save_stack
from .endoleak import (build_thrombus_mask, detect, render_overlay,
                       save_report, write_ppm)
from .errors import AneuSegError, PipelineStageError
from .evaluate import evaluate_pair
from .evaluate import save_report as save_eval_report
from .geometry import save_obj, triangulate, voxelize
from .lumen import cast_lumen_stack, regularize_lumen, threshold_band_report
from .measure import save_profile_csv, save_profile_json, size_profile
from .phantom import generate, save_manifest
from .thrombus import OpacityField, deform, init_outer
from .volume import load_mask, load_volume, save_mask, save_volume


@dataclass
class PipelineResult:
    output_dir: Path
    artifacts: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    size_profile: object = None
    clusters: list = field(default_factory=list)
    eval_reports: dict = field(default_factory=dict)
    thrombus_log: list = field(default_factory=list)
    centerline: object = None
    lumen_stack: object = None
    outer_stack: object = None


@contextmanager
def _stage(name, timings):
    t0 = time.perf_counter()
    try:
        yield
    except PipelineStageError:
        raise
    except (AneuSegError, OSError) as exc:
        raise PipelineStageError(name, exc) from exc
    finally:
        timings[name] = timings.get(name, 0.0) + time.perf_counter() - t0


def run_pipeline(cfg, output_dir):
    """Execute the configured pipeline and write the artifact bundle.

    With identical config and seed the numeric outputs are identical across
    runs; only the manifest carries timestamps and timings.
    """
    cfg.validate()
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    res = PipelineResult(output_dir=out)
    timings = res.timings

    def emit(name, filename):
        res.artifacts[name] = out / filename
        return res.artifacts[name]

    truth = None
    with _stage("load", timings):
        if cfg.phantom is not None:
            vol, truth = generate(cfg.phantom)
            save_volume(emit("volume", "volume.rvol"), vol)
            save_mask(emit("truth_lumen", "truth_lumen.rvol"),
                      truth.lumen_mask)
            save_mask(emit("truth_aneurysm", "truth_aneurysm.rvol"),
                      truth.aneurysm_mask)
            for n, lm in enumerate(truth.leak_masks):
                save_mask(emit(f"truth_leak_{n}", f"truth_leak_{n}.rvol"), lm)
            save_manifest(emit("phantom_manifest", "phantom_manifest.json"),
                          cfg.phantom, truth)
        else:
            if not Path(cfg.input_volume).is_file():
                raise FileNotFoundError(cfg.input_volume)
            vol = load_volume(cfg.input_volume)

    with _stage("centerline", timings):
        start = cfg.centerline.start_voxel
        end = cfg.centerline.end_voxel
        if start is None:
            start = truth.seed_start_voxel
        if end is None:
            end = truth.seed_end_voxel
        path = extract_path(vol, start, end, cfg.centerline.cost)
        world = vol.index_to_world(path)
        cl = Centerline.from_polyline(world, cfg.centerline.step_mm)
        res.centerline = cl
        save_centerline(emit("centerline", "centerline.json"), cl)

    with _stage("segment-lumen", timings):
        inner = cast_lumen_stack(vol, cl, cfg.lumen)
        inner = regularize_lumen(inner, vol, cfg.lumen)
        res.lumen_stack = inner
        save_stack(emit("contours_lumen", "contours_lumen.json"), inner,
                   extra={"threshold_band_fraction":
                          threshold_band_report(vol, inner, cfg.lumen)})

    with _stage("segment-thrombus", timings):
        outer0 = init_outer(inner, cfg.thrombus.init_offset)
        outer, logs = deform(outer0, inner, vol, cfg.thrombus)
        res.outer_stack = outer
        res.thrombus_log = logs
        save_stack(emit("contours_outer", "contours_outer.json"), outer)
        with open(emit("thrombus_convergence", "thrombus_convergence.json"),
                  "w") as fh:
            json.dump([{"sigma": l.sigma, "iterations": l.iterations,
                        "final_delta_mm": l.final_delta,
                        "converged": l.converged} for l in logs], fh, indent=1)
            fh.write("\n")
        if cfg.dump_opacity_z is not None:
            sampler = OpacityField(vol, cfg.thrombus.opacity)
            k = int(cfg.dump_opacity_z)
            ii, jj = np.meshgrid(np.arange(vol.dims[0]),
                                 np.arange(vol.dims[1]), indexing="ij")
            pts = np.column_stack([ii.ravel(), jj.ravel(),
                                   np.full(ii.size, k)]) * vol.spacing \
                + vol.origin
            alpha = sampler(pts).reshape(vol.dims[0], vol.dims[1])
            img = np.repeat(np.rint(alpha * 255.0).astype(np.uint8)[:, :, None],
                            3, axis=2)
            write_ppm(emit("opacity_slice", f"opacity_z{k}.ppm"), img)

    with _stage("measure", timings):
        profile = size_profile(outer, cl)
        res.size_profile = profile
        save_profile_csv(emit("size_profile_csv", "size_profile.csv"), profile)
        save_profile_json(emit("size_profile_json", "size_profile.json"),
                          profile)

    with _stage("geometry", timings):
        mesh_lumen = triangulate(inner)
        mesh_outer = triangulate(outer)
        save_obj(emit("mesh_lumen", "mesh_lumen.obj"), mesh_lumen)
        save_obj(emit("mesh_outer", "mesh_outer.obj"), mesh_outer)
        mask_lumen = voxelize(mesh_lumen, vol)
        mask_outer = voxelize(mesh_outer, vol)
        save_mask(emit("mask_lumen", "mask_lumen.rvol"), mask_lumen)
        save_mask(emit("mask_outer", "mask_outer.rvol"), mask_outer)

    with _stage("endoleak", timings):
        thrombus_mask = build_thrombus_mask(mask_outer, mask_lumen)
        save_mask(emit("mask_thrombus", "mask_thrombus.rvol"), thrombus_mask)
        clusters = detect(vol, thrombus_mask, cfg.leak)
        res.clusters = clusters
        save_report(emit("endoleak_report", "endoleak.json"), clusters,
                    cfg.leak)
        ov = cfg.overlay
        dmax_pt = cl.points[profile.d_max_slice]
        z_dmax = int(np.clip(np.rint((dmax_pt[2] - vol.origin[2])
                                     / vol.spacing[2]), 0, vol.dims[2] - 1))
        img = render_overlay(vol, clusters, "z", z_dmax, ov.window_center,
                             ov.window_width)
        write_ppm(emit("overlay_dmax", f"overlay_dmax_z{z_dmax}.ppm"), img)
        for n, cluster in enumerate(clusters[:ov.max_overlays]):
            k = int(np.clip(np.rint((cluster.centroid_xyz[2] - vol.origin[2])
                                    / vol.spacing[2]), 0, vol.dims[2] - 1))
            img = render_overlay(vol, clusters, "z", k, ov.window_center,
                                 ov.window_width)
            write_ppm(emit(f"overlay_cluster_{n}",
                           f"overlay_cluster{n}_z{k}.ppm"), img)

    with _stage("evaluate", timings):
        reports = {}
        truth_lumen = truth_aneurysm = None
        if truth is not None:
            truth_lumen = truth.lumen_mask
            truth_aneurysm = truth.aneurysm_mask
        else:
            if cfg.evaluate.truth_lumen_mask:
                truth_lumen = load_mask(cfg.evaluate.truth_lumen_mask)
            if cfg.evaluate.truth_aneurysm_mask:
                truth_aneurysm = load_mask(cfg.evaluate.truth_aneurysm_mask)
        if truth_lumen is not None:
            reports["lumen"] = evaluate_pair(inner, truth_lumen, vol)
        if truth_aneurysm is not None:
            reports["thrombus"] = evaluate_pair(outer, truth_aneurysm, vol)
        if reports:
            res.eval_reports = reports
            save_eval_report(emit("eval_report", "eval.json"), reports)

    manifest = {
        "package": "aneuseg",
        "version": __version__,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "config": cfg.to_dict(),
        "config_sha256": config_hash(cfg),
        "timings_s": {k: round(v, 6) for k, v in timings.items()},
        "artifacts": {k: str(v.name) for k, v in res.artifacts.items()},
    }
    with open(out / "run_manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    res.artifacts["run_manifest"] = out / "run_manifest.json"
    return res
