"""Batch measurement and evaluation reports.

The eval path compares a prediction-mask directory against a truth directory
and writes, next to each other: per-image segmentation metrics as CSV, the
TMH agreement summary as JSON, and the two standard agreement figures
(Bland-Altman and regression scatter) as PNG files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .errors import TmhkitError, UndefinedIccError
from .metrics import confusion, miou, precision_recall_f1
from .raster import GeometryConfig, load_mask
from .stats import BlandAltman, acc_tmh, agreement_report, bland_altman
from .tmh import measure

MEASURE_FIELDS = ("image_id", "method", "tmh_px", "tmh_mm", "pupil_x", "pupil_y", "section_px", "error")


def _plt():
    import matplotlib

    matplotlib.use("Agg", force=True)  # file rendering only, no display server
    import matplotlib.pyplot as plt

    return plt


def measure_directory(
    mask_dir,
    method: int = 1,
    section_mm: float = 0.5,
    cfg: Optional[GeometryConfig] = None,
) -> list:
    """Measure every *.png mask in a directory; failures become error rows."""
    mask_dir = Path(mask_dir)
    paths = sorted(mask_dir.glob("*.png"))
    if not paths:
        raise ValueError(f"no mask PNGs under {mask_dir}")
    rows = []
    for path in paths:
        row = {k: "" for k in MEASURE_FIELDS}
        row["image_id"] = path.stem
        row["method"] = method
        try:
            res = measure(load_mask(path), method=method, section_mm=section_mm, cfg=cfg)
            row.update(
                tmh_px=res.tmh_px,
                tmh_mm=res.tmh_mm,
                pupil_x=res.diagnostics["pupil_x"],
                pupil_y=res.diagnostics["pupil_y"],
                section_px=res.section.length_px,
            )
        except TmhkitError as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    return rows


def write_measurements_csv(rows: Sequence[dict], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=MEASURE_FIELDS)
        w.writeheader()
        w.writerows(rows)


def render_bland_altman(ba: BlandAltman, path, title: str = "Bland-Altman") -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4.5))
    xs = [p[0] for p in ba.points]
    ys = [p[1] for p in ba.points]
    ax.scatter(xs, ys, s=18, alpha=0.7)
    ax.axhline(ba.mean_diff, color="tab:blue", lw=1.2, label=f"mean {ba.mean_diff:.3f}")
    for loa, name in ((ba.upper_loa, "+1.96 SD"), (ba.lower_loa, "-1.96 SD")):
        ax.axhline(loa, color="tab:red", lw=1.0, ls="--", label=f"{name} {loa:.3f}")
    ax.set_xlabel("mean of pair (px)")
    ax.set_ylabel("difference (px)")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_regression(measured, truth, slope, intercept, r2, path) -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(5.2, 5.2))
    ax.scatter(truth, measured, s=18, alpha=0.7)
    lo = min(min(truth), min(measured))
    hi = max(max(truth), max(measured))
    ax.plot([lo, hi], [lo, hi], color="gray", ls=":", lw=1, label="y = x")
    ax.plot(
        [lo, hi],
        [slope * lo + intercept, slope * hi + intercept],
        color="tab:red",
        lw=1.2,
        label=f"y = {slope:.3f}x + {intercept:.3f}, r2 = {r2:.3f}",
    )
    ax.set_xlabel("truth TMH (px)")
    ax.set_ylabel("measured TMH (px)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def evaluate(
    pred_dir,
    truth_dir,
    out_dir,
    method: int = 1,
    section_mm: float = 0.5,
    classes: str = "fg_and_bg",
    manifest: Optional[dict] = None,
    cfg: Optional[GeometryConfig] = None,
    tol_px: float = 3.0,
) -> dict:
    """Per-image metrics + TMH agreement for two mask directories.

    ``manifest`` maps image id -> truth TMH px; without it the truth masks
    are measured with the same method. Returns the printed summary dict.
    """
    pred_dir, truth_dir, out_dir = Path(pred_dir), Path(truth_dir), Path(out_dir)
    pred_ids = {p.stem: p for p in pred_dir.glob("*.png")}
    truth_ids = {p.stem: p for p in truth_dir.glob("*.png")}
    common = sorted(set(pred_ids) & set(truth_ids))
    if not common:
        raise ValueError("prediction and truth directories share no image ids")
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    measured, truths = [], []
    for image_id in common:
        pred = load_mask(pred_ids[image_id])
        truth = load_mask(truth_ids[image_id])
        counts = confusion(pred, truth)
        p, r, f1 = precision_recall_f1(counts)
        row = {
            "image_id": image_id,
            "miou": miou(pred, truth, classes=classes),
            "precision": p,
            "recall": r,
            "f1": f1,
            "tp": counts.tp,
            "fp": counts.fp,
            "fn": counts.fn,
            "tn": counts.tn,
            "pred_tmh_px": "",
            "truth_tmh_px": "",
            "error": "",
        }
        try:
            got = measure(pred, method=method, section_mm=section_mm, cfg=cfg).tmh_px
            if manifest is not None:
                want = manifest[image_id]
            else:
                want = measure(truth, method=method, section_mm=section_mm, cfg=cfg).tmh_px
            row["pred_tmh_px"] = got
            row["truth_tmh_px"] = want
            measured.append(got)
            truths.append(want)
        except (TmhkitError, KeyError) as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)

    metrics_path = out_dir / "metrics.csv"
    with open(metrics_path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        w.writeheader()
        w.writerows(rows)

    mean_miou = sum(r["miou"] for r in rows) / len(rows)
    summary = {
        "version": __version__,
        "n_images": len(rows),
        "n_measured_pairs": len(measured),
        "method": method,
        "mean_miou": mean_miou,
        "acc": acc_tmh(measured, truths, tol_px=tol_px) if measured else None,
        "agreement": None,
        "agreement_error": "",
    }
    if len(measured) >= 3:
        try:
            rep = agreement_report(measured, truths, tol_px=tol_px)
            summary["agreement"] = rep.to_dict()
            render_regression(
                measured, truths, rep.slope, rep.intercept, rep.r2, out_dir / "regression.png"
            )
        except (ValueError, UndefinedIccError) as exc:
            summary["agreement_error"] = f"{type(exc).__name__}: {exc}"
    if len(measured) >= 2:
        render_bland_altman(bland_altman(measured, truths), out_dir / "bland_altman.png")

    (out_dir / "agreement.json").write_text(json.dumps(summary, indent=2))
    return summary
