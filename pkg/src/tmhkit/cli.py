"""Command-line entry points.

Subcommands cover the whole pipeline: synthetic suite generation, the
quality gate, edge-map export, annotation apply (image + polygon -> mask),
TMH measurement over mask files, directory evaluation with figures, and the
local HTTP service.

Exit codes: 0 ok, 1 bad input, 2 pipeline failure, 3 strict quality
rejection. argparse's usage-error exit (2) is normalized to 1 so that 2
always means a pipeline-stage failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .errors import GeometryError, QualityRejectedError, TmhkitError
from .phantom import generate_suite, load_manifest, write_suite
from .pipeline import EdgeConfig, PupilAnnotation, annotate_apply, compute_edge_map
from .quality import QualityThresholds, assess
from .raster import GeometryConfig, load_png, mask_png_bytes, save_png, to_display
from .repair import Polygon, RepairConfig
from .stats import acc_tmh
from .tmh import measure


def _edge_config(args) -> EdgeConfig:
    return EdgeConfig(
        k1=args.k1, k2=args.k2, center_offset=args.center_offset, padding=args.padding
    )


def _add_edge_flags(p):
    p.add_argument("--k1", type=int, default=13, help="enhancement kernel size")
    p.add_argument("--k2", type=int, default=7, help="smoothing kernel size")
    p.add_argument("--center-offset", type=int, default=5)
    p.add_argument("--padding", choices=("reflect", "zero"), default="reflect")


def _add_repair_flags(p):
    p.add_argument("--k-neighbors", type=int, default=8)
    p.add_argument("--max-link", type=float, default=15.0, help="px; inf allowed")
    p.add_argument("--stroke-width", type=int, default=1)
    p.add_argument("--fixpoint", action="store_true", help="repeat repair until stable")


def _repair_config(args) -> RepairConfig:
    return RepairConfig(
        k_neighbors=args.k_neighbors,
        max_link_distance=args.max_link,
        stroke_width=args.stroke_width,
    )


def cmd_phantom(args) -> int:
    cases = generate_suite(args.n, seed=args.seed)
    manifest = write_suite(cases, args.out)
    print(f"wrote {len(cases)} cases under {args.out} (manifest: {manifest})")
    return 0


def cmd_quality(args) -> int:
    thresholds = QualityThresholds()
    reports = []
    any_poor = False
    for path in args.images:
        rep = assess(load_png(path), thresholds)
        any_poor = any_poor or rep.verdict == "poor"
        reports.append({"image": str(path), **rep.to_dict(), "version": __version__})
        reasons = f" ({', '.join(rep.reasons)})" if rep.reasons else ""
        print(f"{path}: {rep.verdict}{reasons}")
    if args.json:
        Path(args.json).write_text(json.dumps(reports, indent=2))
    if args.strict and any_poor:
        raise QualityRejectedError("strict mode: at least one image judged poor")
    return 0


def cmd_edge(args) -> int:
    img = load_png(args.image)
    edge = compute_edge_map(img, _edge_config(args))
    save_png(to_display(edge), args.out)
    print(f"edge map -> {args.out}")
    return 0


def cmd_annotate_apply(args) -> int:
    img = load_png(args.image)
    rep = assess(img)
    if rep.verdict == "poor":
        if args.strict:
            raise QualityRejectedError(f"image judged poor: {', '.join(rep.reasons)}")
        print(f"warning: quality poor ({', '.join(rep.reasons)})", file=sys.stderr)
    roi = Polygon.from_json(Path(args.roi).read_text())
    pupil = None
    if args.pupil:
        pupil = PupilAnnotation.from_json(Path(args.pupil).read_text())
    mask = annotate_apply(
        img,
        roi,
        pupil=pupil,
        edge_cfg=_edge_config(args),
        repair_cfg=_repair_config(args),
        to_fixpoint=args.fixpoint,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(mask_png_bytes(mask))
    out.with_suffix(".json").write_text(json.dumps({"class": mask.class_tag}))
    print(f"mask ({mask.class_tag}, {mask.count()} px) -> {out}")
    return 0


def cmd_measure(args) -> int:
    from .report import measure_directory, write_measurements_csv
    from .raster import load_mask

    cfg = GeometryConfig(mm_per_pixel=args.mm_per_pixel)
    target = Path(args.target)
    if target.is_dir():
        rows = measure_directory(target, method=args.method, section_mm=args.section_mm, cfg=cfg)
        if args.out:
            write_measurements_csv(rows, args.out)
        ok = [r for r in rows if not r["error"]]
        print(f"measured {len(ok)}/{len(rows)} masks (method {args.method})")
        for r in rows:
            if r["error"]:
                print(f"  {r['image_id']}: {r['error']}", file=sys.stderr)
        if args.manifest:
            truth = {row["id"]: row["truth_tmh_px"] for row in load_manifest(args.manifest)}
            pairs = [(r["tmh_px"], truth[r["image_id"]]) for r in ok if r["image_id"] in truth]
            if not pairs:
                raise ValueError("no measured ids found in the manifest")
            acc = acc_tmh([p[0] for p in pairs], [p[1] for p in pairs])
            print(f"ACC(+-3 px) = {acc:.4f} ({len(pairs)} pairs)")
        return 0
    res = measure(load_mask(target), method=args.method, section_mm=args.section_mm, cfg=cfg)
    payload = {"image_id": target.stem, **res.to_dict()}
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    return 0


def cmd_eval(args) -> int:
    from .report import evaluate

    manifest = None
    if args.manifest:
        manifest = {r["id"]: r["truth_tmh_px"] for r in load_manifest(args.manifest)}
    summary = evaluate(
        args.pred_dir,
        args.truth_dir,
        args.out_dir,
        method=args.method,
        section_mm=args.section_mm,
        classes=args.classes,
        manifest=manifest,
    )
    print(f"images: {summary['n_images']}  mean MIoU: {summary['mean_miou']:.4f}")
    if summary["acc"] is not None:
        print(f"TMH ACC(+-3 px): {summary['acc']:.4f} over {summary['n_measured_pairs']} pairs")
    if summary["agreement"]:
        a = summary["agreement"]
        print(
            f"ICC c1/c2: {a['icc_c1']:.4f}/{a['icc_c2']:.4f}  "
            f"pearson r: {a['pearson_r']:.4f}  fit: y={a['slope']:.3f}x+{a['intercept']:.3f}"
        )
    print(f"report -> {args.out_dir}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(ui_dir=args.ui_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tmhkit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"tmhkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate a synthetic suite with ground truth")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("quality", help="run the quality gate")
    p.add_argument("images", nargs="+")
    p.add_argument("--json", help="write the batch JSON report here")
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_quality)

    p = sub.add_parser("edge", help="export a display-normalized edge map")
    p.add_argument("image")
    p.add_argument("--out", required=True)
    _add_edge_flags(p)
    p.set_defaults(func=cmd_edge)

    p = sub.add_parser("annotate-apply", help="image + polygon (+ pupil) -> mask PNG")
    p.add_argument("image")
    p.add_argument("--roi", required=True, help="polygon JSON file")
    p.add_argument("--pupil", help="pupil JSON file (vertices or point)")
    p.add_argument("--out", required=True)
    p.add_argument("--strict", action="store_true", help="fail on poor quality")
    _add_edge_flags(p)
    _add_repair_flags(p)
    p.set_defaults(func=cmd_annotate_apply)

    p = sub.add_parser("measure", help="measure TMH on a mask file or directory")
    p.add_argument("target")
    p.add_argument("--method", type=int, choices=(1, 2, 3), default=1)
    p.add_argument("--section-mm", type=float, default=0.5)
    p.add_argument("--mm-per-pixel", type=float, default=GeometryConfig().mm_per_pixel)
    p.add_argument("--manifest", help="truth manifest CSV for ACC")
    p.add_argument("--out", help="results file (CSV for directories, JSON for files)")
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("eval", help="prediction vs truth directories -> metrics + figures")
    p.add_argument("pred_dir")
    p.add_argument("truth_dir")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--method", type=int, choices=(1, 2, 3), default=1)
    p.add_argument("--section-mm", type=float, default=0.5)
    p.add_argument("--classes", choices=("fg_only", "fg_and_bg"), default="fg_and_bg")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the local HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=int(os.environ.get("TMHKIT_PORT", "8787")))
    p.add_argument("--ui-dir", help="static frontend directory to mount at /")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; keep 2 reserved for pipeline failures
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except QualityRejectedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except GeometryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TmhkitError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
