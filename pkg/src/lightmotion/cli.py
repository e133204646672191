"""``lightmotion`` command line.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import plotting
from .attnmask import binarize_refine, extract_token_map, load_attention
from .camera import PRESETS, CameraParams, build_motion_field, preset
from .config import CliConfig
from .denoiser import OracleDenoiser, PerturbedOracle
from .diagnostics import snr_mismatch_probe, update_shift_probe
from .errors import ConfigError, LightMotionError, StageError
from .pipeline import default_x0, run
from .schedule import snr
from .tensorio import KIND_LATENT, read_lmt, write_csv, write_lmt, write_pgm, atomic_open

log = logging.getLogger("lightmotion")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _fail_runtime(exc, stage=None):
    if isinstance(exc, StageError):
        stage = exc.stage
    print(f"error [stage: {stage or 'unknown'}]: {exc}", file=sys.stderr)
    return EXIT_RUNTIME


def _fail_config(exc):
    print(f"config error: {exc}", file=sys.stderr)
    return EXIT_CONFIG


def _build_denoiser(cfg, schedule):
    d = cfg.denoiser
    pc = cfg.pipeline
    z_init = None
    if d["kind"] == "external":
        z_init = read_lmt(d["init"], expect_kind={KIND_LATENT}).astype(np.float64)
        x0 = read_lmt(d["x0"], expect_kind={KIND_LATENT}).astype(np.float64)
        if x0.shape != pc.shape or z_init.shape != pc.shape:
            raise ConfigError(f"external latents must have shape {pc.shape}, got {z_init.shape} and {x0.shape}")
    else:
        x0 = default_x0(pc.seed, pc.shape)
    den = OracleDenoiser(x0, schedule, transport=bool(d["transport"]))
    if d["bias"] or d["jitter_std"]:
        den = PerturbedOracle(den, d["bias"], d["jitter_std"], d["jitter_seed"])
    return den, z_init


def _scale_u8(values):
    vmax = float(np.max(values)) if values.size else 0.0
    if vmax <= 0:
        return np.zeros(values.shape, dtype=np.uint8)
    return np.rint(values / vmax * 255.0).astype(np.uint8)


def _write_field_images(field, frame, outdir, suffix="", figures=False):
    mag = plotting.displacement_magnitude(field, frame)
    write_pgm(_scale_u8(mag), outdir / f"displacement{suffix}.pgm")
    write_pgm(field.new_mask[frame - 1].astype(np.uint8) * 255, outdir / f"omega{suffix}.pgm")
    if figures:
        plotting.plot_field(field, frame, outdir / f"field{suffix}.png")


def cmd_run(args):
    try:
        cfg = CliConfig.load(args.config)
        if args.out:
            cfg.output_dir = str(Path(args.out).resolve())
        outdir = Path(cfg.output_dir)
        schedule = cfg.pipeline.schedule()
        denoiser, z_init = _build_denoiser(cfg, schedule)
    except ConfigError as exc:
        return _fail_config(exc)
    except LightMotionError as exc:
        return _fail_runtime(exc, "setup")
    try:
        trace = run(cfg.pipeline, denoiser, z_init)
    except ConfigError as exc:
        return _fail_config(exc)
    except LightMotionError as exc:
        return _fail_runtime(exc)

    emit = cfg.emit
    outdir.mkdir(parents=True, exist_ok=True)
    cfg.dump(outdir / "effective_config.json")
    trace.save(outdir, emit["snapshots"], emit["variance_csv"], emit["provenance_csv"])
    pc = cfg.pipeline
    n, _, h, w = pc.shape
    if emit["field_pgm"]:
        try:
            field = build_motion_field(pc.camera, n, h, w)
        except LightMotionError as exc:
            return _fail_runtime(exc, "field")
        for i in range(1, n + 1):
            _write_field_images(field, i, outdir, f"_f{i:02d}")
    if emit["mask_pgm"]:
        for i in range(n):
            write_pgm(trace.mask[i].astype(np.uint8) * 255, outdir / f"mask_f{i + 1:02d}.pgm")
    if emit["figures"]:
        plotting.plot_run_variance(trace.variances, outdir / "variance.png")
    print(f"wrote run outputs to {outdir}")
    return EXIT_OK


def _camera_from_args(args):
    if args.preset:
        if args.preset not in PRESETS:
            raise ConfigError(f"unknown preset {args.preset!r}")
        cam = preset(args.preset)
        if any(v is not None for v in (args.x, args.y, args.z, args.theta)):
            raise ConfigError("--preset and explicit camera parameters are mutually exclusive")
    else:
        cam = CameraParams(
            x=args.x or 0.0, y=args.y or 0.0, z=args.z or 0.0, theta=args.theta or 0.0,
        )
    overrides = {k: getattr(args, k) for k in ("axis", "fx", "fy") if getattr(args, k) is not None}
    if args.ramp is not None:
        overrides["rotation_ramp"] = args.ramp
    if overrides:
        cam = CameraParams(**{**cam.to_dict(), **overrides})
    return cam


def cmd_field(args):
    try:
        cam = _camera_from_args(args)
        n, h, w = (int(v) for v in args.dims.split(","))
        frame = n if args.frame is None else args.frame
        if not 1 <= frame <= n:
            raise ConfigError(f"--frame must lie in [1, {n}]")
    except (LightMotionError, ValueError) as exc:
        return _fail_config(exc)
    try:
        field = build_motion_field(cam, n, h, w)
    except LightMotionError as exc:
        return _fail_runtime(exc, "field")
    outdir = Path(args.out)
    _write_field_images(field, frame, outdir, figures=not args.no_figures)
    print(f"wrote field images for frame {frame} to {outdir}")
    return EXIT_OK


def _probe_snr(cfg, outdir, figures):
    p = cfg.probe
    pc = cfg.pipeline
    schedule = pc.schedule()
    n_samples = max(1, int(p["n_samples"]))
    n_elements = int(p["n_elements"])
    grid = [schedule.timestep(k) for k in range(1, pc.T + 1)]
    t_assumed = p["t_assumed"] if p["t_assumed"] is not None else schedule.timestep(pc.T0)
    rows = []
    for t_true in grid:
        ta = t_true if p["sweep"] == "diagonal" else int(t_assumed)
        measured, expected = snr_mismatch_probe(schedule, t_true, ta, p["x0_power"], n_samples, n_elements, pc.seed)
        rows.append((t_true, ta, snr(schedule, t_true), measured, expected))
    write_csv(outdir / "snr_mismatch.csv", ("t_true", "t_assumed", "snr_true", "measured", "expected"), rows)
    if figures:
        plotting.plot_snr_mismatch(rows, outdir / "snr_mismatch.png")
    return {"kind": "snr-mismatch", "rows": len(rows), "t_assumed": None if p["sweep"] == "diagonal" else int(t_assumed),
            "max_rel_error": max(abs(r[3] - r[4]) / r[4] for r in rows)}


def _probe_update(cfg, outdir, figures):
    res = update_shift_probe(cfg.pipeline, int(cfg.probe["n_samples"]))
    paired = res.paired_rows()
    write_csv(outdir / "update_shift.csv",
              ("ordinal", "stage", "step", "t_train", "variance_update", "variance_baseline", "n"), paired)
    res.with_update.write_csv(outdir / "trace_update.csv")
    res.baseline.write_csv(outdir / "trace_baseline.csv")
    write_csv(outdir / "duplicate_pairs.csv",
              ("frame", "row", "col", "src_frame", "src_row", "src_col", "dup_corr", "fresh_corr"), res.pair_rows())
    if figures:
        plotting.plot_variance_traces(paired, outdir / "update_shift.png")
    return {
        "kind": "update-shift",
        "n_samples": res.n_samples,
        "n_pairs": res.n_pairs,
        "mean_dup_corr": res.mean_corr_update(),
        "mean_fresh_corr": res.mean_corr_fresh(),
        "pooled_fresh_corr": res.pooled_fresh,
        "omega_fraction": res.omega_fraction,
        "mean_duplicate_count": res.duplicate_count,
        "renoise_var_measured": res.renoise_var_measured,
        "renoise_var_expected": res.renoise_var_expected,
    }


def cmd_probe(args):
    try:
        cfg = CliConfig.load(args.config)
        if args.out:
            cfg.output_dir = str(Path(args.out).resolve())
        if args.n_samples is not None:
            cfg.probe["n_samples"] = args.n_samples
    except ConfigError as exc:
        return _fail_config(exc)
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        if args.kind == "snr-mismatch":
            summary = _probe_snr(cfg, outdir, cfg.emit["figures"])
        else:
            summary = _probe_update(cfg, outdir, cfg.emit["figures"])
    except ConfigError as exc:
        return _fail_config(exc)
    except LightMotionError as exc:
        return _fail_runtime(exc, args.kind)
    cfg.dump(outdir / "effective_config.json")
    with atomic_open(outdir / "summary.json", "w", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_mask(args):
    try:
        attn = load_attention(args.attn)
        grid = extract_token_map(attn, args.token)
        mask = binarize_refine(grid, args.factor, args.window)
    except (LightMotionError, IndexError, OSError) as exc:
        return _fail_config(exc)
    write_lmt(mask, args.out)
    if args.pgm_dir:
        for i, frame in enumerate(mask, start=1):
            write_pgm(frame.astype(np.uint8) * 255, Path(args.pgm_dir) / f"mask_f{i:02d}.pgm")
    print(f"foreground fraction {mask.mean():.4f}; wrote {args.out}")
    return EXIT_OK


def cmd_presets(args):
    for name, values in PRESETS.items():
        desc = ", ".join(f"{k}={v:g}" for k, v in values.items()) or "no motion"
        print(f"{name:18s} {desc}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="lightmotion", description="Camera-motion operators for latent video diffusion.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute the pipeline from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="override output_dir")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("field", help="write displacement and new-perspective images for one frame")
    p.add_argument("--preset")
    p.add_argument("--x", type=float)
    p.add_argument("--y", type=float)
    p.add_argument("--z", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--axis", choices=["X", "Y", "Z"])
    p.add_argument("--ramp", choices=["appendix_formula", "symmetric"])
    p.add_argument("--fx", type=float)
    p.add_argument("--fy", type=float)
    p.add_argument("--dims", default="16,64,64", help="N,h,w")
    p.add_argument("--frame", type=int, help="1-based frame index (default: last)")
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_field)

    p = sub.add_parser("probe", help="noise-statistics probes")
    p.add_argument("--kind", required=True, choices=["snr-mismatch", "update-shift"])
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--n-samples", type=int)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("mask", help="foreground mask from an attention-map LMT file")
    p.add_argument("--attn", required=True)
    p.add_argument("--token", type=int, required=True)
    p.add_argument("--factor", type=float, default=1.0)
    p.add_argument("--window", type=int, default=3)
    p.add_argument("--out", required=True)
    p.add_argument("--pgm-dir")
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("presets", help="list camera presets")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
