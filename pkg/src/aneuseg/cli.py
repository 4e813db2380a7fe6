"""Command-line interface.

Subcommands expose each pipeline stage independently (phantom, centerline,
segment-lumen, segment-thrombus, measure, endoleak, evaluate) plus the full
pipeline and init-config.  Exit codes: 0 ok, 1 stage failure, 2 I/O error,
3 config validation error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .centerline import Centerline, PathCostParams, extract_path, \
    load_centerline, save_centerline
from .config import (PipelineConfig, default_config, load_config,
                     save_config)
from .contours import load_stack, save_stack
from .endoleak import (LeakParams, build_thrombus_mask, detect,
                       render_overlay, save_report, write_ppm)
from .errors import ConfigError, PipelineStageError, RvolError
from .evaluate import evaluate_pair
from .evaluate import save_report as save_eval_report
from .geometry import save_obj, triangulate
from .lumen import LumenParams, cast_lumen_stack, regularize_lumen
from .measure import save_profile_csv, save_profile_json, size_profile
from .phantom import PhantomSpec, generate, save_manifest
from .pipeline import run_pipeline
from .thrombus import ThrombusParams, deform, init_outer
from .volume import OpacityParams, load_mask, load_volume, save_mask, \
    save_volume

EXIT_OK = 0
EXIT_STAGE = 1
EXIT_IO = 2
EXIT_CONFIG = 3


def _voxel_triple(text):
    parts = [int(v) for v in text.replace(",", " ").split()]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected i,j,k")
    return tuple(parts)


def _float_list(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _int_pair(text):
    parts = [int(v) for v in text.replace(",", " ").split()]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected a,b")
    return tuple(parts)


def _add_lumen_args(p):
    g = p.add_argument_group("lumen parameters")
    g.add_argument("--theta1", type=float, default=None,
                   help="lower lumen threshold HU")
    g.add_argument("--theta2", type=float, default=None,
                   help="upper auxiliary threshold HU")
    g.add_argument("--theta-s", type=float, default=None,
                   help="metal threshold HU")
    g.add_argument("--ray-step", type=float, default=None)
    g.add_argument("--lumen-r-max", type=float, default=None)
    g.add_argument("--n-rays", type=int, default=None)
    g.add_argument("--lumen-tension", type=float, default=None)
    g.add_argument("--lumen-rigidity", type=float, default=None)
    g.add_argument("--lumen-step-size", type=float, default=None)
    g.add_argument("--lumen-max-iterations", type=int, default=None)
    g.add_argument("--lumen-tolerance", type=float, default=None)
    g.add_argument("--lumen-balloon", type=float, default=None)


def _lumen_params(args):
    lp = LumenParams()
    updates = {
        "threshold": args.theta1, "upper_threshold": args.theta2,
        "metal_threshold": args.theta_s, "ray_step": args.ray_step,
        "r_max": args.lumen_r_max, "n_rays": args.n_rays,
        "w_tension": args.lumen_tension, "w_rigidity": args.lumen_rigidity,
        "step_size": args.lumen_step_size,
        "max_iterations": args.lumen_max_iterations,
        "tolerance": args.lumen_tolerance, "balloon": args.lumen_balloon,
    }
    return replace(lp, **{k: v for k, v in updates.items() if v is not None})


def _add_thrombus_args(p):
    g = p.add_argument_group("thrombus parameters")
    g.add_argument("--init-offset", type=float, default=None)
    g.add_argument("--sigma-schedule", type=_float_list, default=None,
                   help="comma separated, strictly decreasing (mm)")
    g.add_argument("--iterations-per-scale", type=int, default=None)
    g.add_argument("--tau", type=float, default=None,
                   help="deformation step size (mm per unit force)")
    g.add_argument("--w-img", type=float, default=None)
    g.add_argument("--w-int-t", type=float, default=None)
    g.add_argument("--w-int-r", type=float, default=None)
    g.add_argument("--w-con", type=float, default=None)
    g.add_argument("--neighborhood", type=_int_pair, default=None,
                   help="half-widths in slices,rays for the local average")
    g.add_argument("--min-gap", type=float, default=None)
    g.add_argument("--thrombus-tolerance", type=float, default=None)
    g.add_argument("--thrombus-r-max", type=float, default=None)
    g.add_argument("--kernel-step", type=float, default=None)
    og = p.add_argument_group("opacity transfer function")
    og.add_argument("--fv", type=float, default=None, help="iso value HU")
    og.add_argument("--opacity-width", type=float, default=None,
                    help="HU per unit gradient magnitude")
    og.add_argument("--alpha-v", type=float, default=None)
    og.add_argument("--g-min", type=float, default=None)


def _thrombus_params(args):
    op = OpacityParams()
    op_updates = {
        "iso_value": args.fv, "transition_width": args.opacity_width,
        "max_opacity": args.alpha_v, "gradient_floor": args.g_min,
    }
    op = replace(op, **{k: v for k, v in op_updates.items() if v is not None})
    tp = ThrombusParams(opacity=op)
    updates = {
        "init_offset": args.init_offset,
        "sigma_schedule": args.sigma_schedule,
        "iterations_per_scale": args.iterations_per_scale,
        "step_size": args.tau, "w_image": args.w_img,
        "w_tension": args.w_int_t, "w_rigidity": args.w_int_r,
        "w_constraint": args.w_con, "neighborhood": args.neighborhood,
        "min_gap": args.min_gap, "tolerance": args.thrombus_tolerance,
        "r_max": args.thrombus_r_max, "kernel_step": args.kernel_step,
    }
    return replace(tp, **{k: v for k, v in updates.items() if v is not None})


def build_parser():
    p = argparse.ArgumentParser(
        prog="aneuseg",
        description="Aortic aneurysm segmentation, measurement and endoleak "
                    "detection in CTA volumes (RVOL format)")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("init-config", help="write a full default config")
    sp.add_argument("--out", default="config.json")

    sp = sub.add_parser("phantom", help="generate a synthetic phantom")
    sp.add_argument("--config", help="pipeline config JSON with a phantom "
                                     "section (default: built-in phantom)")
    sp.add_argument("--out-dir", default="phantom_out")

    sp = sub.add_parser("centerline", help="extract and resample a centerline")
    sp.add_argument("--volume", required=True)
    sp.add_argument("--start", type=_voxel_triple, required=True,
                    metavar="i,j,k")
    sp.add_argument("--end", type=_voxel_triple, required=True,
                    metavar="i,j,k")
    sp.add_argument("--step-mm", type=float, default=2.0)
    sp.add_argument("--lumen-floor", type=float, default=150.0)
    sp.add_argument("--soft-cap", type=float, default=400.0)
    sp.add_argument("--dark-penalty", type=float, default=100.0)
    sp.add_argument("--out", default="centerline.json")

    sp = sub.add_parser("segment-lumen", help="cast and regularize the inner "
                                              "contours")
    sp.add_argument("--volume", required=True)
    sp.add_argument("--centerline", required=True)
    sp.add_argument("--out", default="contours_lumen.json")
    _add_lumen_args(sp)

    sp = sub.add_parser("segment-thrombus", help="deform the outer contours")
    sp.add_argument("--volume", required=True)
    sp.add_argument("--inner", required=True, help="inner contour JSON")
    sp.add_argument("--out", default="contours_outer.json")
    sp.add_argument("--convergence-log", default=None)
    sp.add_argument("--dump-opacity", type=int, default=None, metavar="Z",
                    help="write an opacity slice PPM at axial index Z")
    _add_thrombus_args(sp)

    sp = sub.add_parser("measure", help="per-plane diameter/area profile")
    sp.add_argument("--contours", required=True)
    sp.add_argument("--centerline", required=True)
    sp.add_argument("--csv", default="size_profile.csv")
    sp.add_argument("--json", default="size_profile.json")

    sp = sub.add_parser("endoleak", help="detect endoleak clusters")
    sp.add_argument("--volume", required=True)
    sp.add_argument("--aneurysm-mask", required=True)
    sp.add_argument("--lumen-mask", required=True)
    sp.add_argument("--out", default="endoleak.json")
    sp.add_argument("--theta", type=float, default=150.0)
    sp.add_argument("--theta-s", type=float, default=1500.0)
    sp.add_argument("--pve-dilation", type=float, default=2.0)
    sp.add_argument("--boundary-erosion", type=float, default=1.0)
    sp.add_argument("--no-rim-guard", action="store_true",
                    help="disable the outer-rim PVE guard")
    sp.add_argument("--min-cluster", type=float, default=20.0)
    sp.add_argument("--overlay", default=None, metavar="z=K,out.ppm",
                    help="write an overlay slice, e.g. z=40,leak.ppm")

    sp = sub.add_parser("evaluate", help="DSC and surface-distance stats")
    sp.add_argument("--contours", required=True)
    sp.add_argument("--truth-mask", required=True)
    sp.add_argument("--out", default="eval.json")
    sp.add_argument("--name", default="segmentation")

    sp = sub.add_parser("pipeline", help="run the full pipeline from a config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out-dir", default="run_out")
    return p


def _cmd_init_config(args):
    save_config(args.out, default_config())
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_phantom(args):
    if args.config:
        cfg = load_config(args.config)
        if cfg.phantom is None:
            raise ConfigError("config has no phantom section")
        spec = cfg.phantom
    else:
        spec = default_config().phantom
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    vol, truth = generate(spec)
    save_volume(out / "volume.rvol", vol)
    save_mask(out / "truth_lumen.rvol", truth.lumen_mask)
    save_mask(out / "truth_aneurysm.rvol", truth.aneurysm_mask)
    for n, lm in enumerate(truth.leak_masks):
        save_mask(out / f"truth_leak_{n}.rvol", lm)
    save_manifest(out / "phantom_manifest.json", spec, truth)
    print(f"phantom written to {out}")
    return EXIT_OK


def _cmd_centerline(args):
    vol = load_volume(args.volume)
    pc = PathCostParams(lumen_floor=args.lumen_floor, soft_cap=args.soft_cap,
                        dark_penalty=args.dark_penalty)
    path = extract_path(vol, args.start, args.end, pc)
    cl = Centerline.from_polyline(vol.index_to_world(path), args.step_mm)
    save_centerline(args.out, cl)
    print(f"{len(cl)} centerline points -> {args.out}")
    return EXIT_OK


def _cmd_segment_lumen(args):
    vol = load_volume(args.volume)
    cl = load_centerline(args.centerline)
    lp = _lumen_params(args)
    stack = regularize_lumen(cast_lumen_stack(vol, cl, lp), vol, lp)
    save_stack(args.out, stack)
    print(f"{stack.n_slices} lumen contours -> {args.out}")
    return EXIT_OK


def _cmd_segment_thrombus(args):
    vol = load_volume(args.volume)
    inner = load_stack(args.inner)
    tp = _thrombus_params(args)
    outer, logs = deform(init_outer(inner, tp.init_offset), inner, vol, tp)
    save_stack(args.out, outer)
    if args.convergence_log:
        with open(args.convergence_log, "w") as fh:
            json.dump([{"sigma": l.sigma, "iterations": l.iterations,
                        "final_delta_mm": l.final_delta,
                        "converged": l.converged} for l in logs], fh, indent=1)
            fh.write("\n")
    if args.dump_opacity is not None:
        from .thrombus import OpacityField
        k = args.dump_opacity
        sampler = OpacityField(vol, tp.opacity)
        ii, jj = np.meshgrid(np.arange(vol.dims[0]), np.arange(vol.dims[1]),
                             indexing="ij")
        pts = np.column_stack([ii.ravel(), jj.ravel(),
                               np.full(ii.size, k)]) * vol.spacing + vol.origin
        alpha = sampler(pts).reshape(vol.dims[0], vol.dims[1])
        img = np.repeat(np.rint(alpha * 255.0).astype(np.uint8)[:, :, None],
                        3, axis=2)
        write_ppm(f"opacity_z{k}.ppm", img)
    for l in logs:
        print(f"sigma {l.sigma}: {l.iterations} iterations, "
              f"final delta {l.final_delta:.4g} mm")
    print(f"outer contours -> {args.out}")
    return EXIT_OK


def _cmd_measure(args):
    stack = load_stack(args.contours)
    cl = load_centerline(args.centerline)
    profile = size_profile(stack, cl)
    save_profile_csv(args.csv, profile)
    save_profile_json(args.json, profile)
    print(f"D_max {profile.d_max_mm:.2f} mm at slice {profile.d_max_slice}; "
          f"A_max {profile.a_max_mm2:.1f} mm^2 at slice {profile.a_max_slice}")
    return EXIT_OK


def _cmd_endoleak(args):
    vol = load_volume(args.volume)
    aneurysm = load_mask(args.aneurysm_mask)
    lumen = load_mask(args.lumen_mask)
    lp = LeakParams(
        leak_threshold=args.theta, metal_threshold=args.theta_s,
        pve_dilation=args.pve_dilation,
        boundary_erosion=0.0 if args.no_rim_guard else args.boundary_erosion,
        min_cluster_mm3=args.min_cluster)
    thrombus = build_thrombus_mask(aneurysm, lumen)
    clusters = detect(vol, thrombus, lp)
    save_report(args.out, clusters, lp)
    print(f"{len(clusters)} cluster(s) -> {args.out}")
    if args.overlay:
        spec, _, fname = args.overlay.partition(",")
        axis, _, idx = spec.partition("=")
        img = render_overlay(vol, clusters, axis.strip(), int(idx))
        write_ppm(fname or "overlay.ppm", img)
        print(f"overlay -> {fname or 'overlay.ppm'}")
    return EXIT_OK


def _cmd_evaluate(args):
    stack = load_stack(args.contours)
    truth = load_mask(args.truth_mask)
    report = evaluate_pair(stack, truth)
    save_eval_report(args.out, {args.name: report})
    print(f"DSC {report.dsc:.4f}, mean dist {report.mean_dist_mm:.3f} mm "
          f"-> {args.out}")
    return EXIT_OK


def _cmd_pipeline(args):
    cfg = load_config(args.config)
    res = run_pipeline(cfg, args.out_dir)
    for stage, t in res.timings.items():
        print(f"  {stage:<18s} {t:7.2f} s")
    print(f"artifacts in {res.output_dir}")
    return EXIT_OK


_COMMANDS = {
    "init-config": _cmd_init_config,
    "phantom": _cmd_phantom,
    "centerline": _cmd_centerline,
    "segment-lumen": _cmd_segment_lumen,
    "segment-thrombus": _cmd_segment_thrombus,
    "measure": _cmd_measure,
    "endoleak": _cmd_endoleak,
    "evaluate": _cmd_evaluate,
    "pipeline": _cmd_pipeline,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PipelineStageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc.cause, (OSError, RvolError)):
            return EXIT_IO
        if isinstance(exc.cause, ConfigError):
            return EXIT_CONFIG
        return EXIT_STAGE
    except (OSError, RvolError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # noqa: BLE001 - surfaced as stage failure
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
