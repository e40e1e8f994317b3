"""Shared annotation pipeline: one code path for the CLI and the HTTP service.

The flow mirrors the interactive workflow: enhance edges, keep only the
response inside the operator's polygon, threshold it (Otsu computed over the
polygon interior, not the whole frame), repair the broken strokes, then merge
with the pupil annotation. Both entry points call these functions with the
same defaults, which is what makes byte-identical outputs possible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .edgeops import edge_enhance
from .errors import EmptyMaskError
from .raster import BinaryMask, RasterImage, otsu_threshold
from .repair import Polygon, RepairConfig, merge_masks, polygon_inside_mask, repair_band

DEFAULT_PUPIL_CLICK_RADIUS = 30.0


@dataclass(frozen=True)
class EdgeConfig:
    k1: int = 13
    k2: int = 7
    center_offset: int = 5
    padding: str = "reflect"


def compute_edge_map(img: RasterImage, cfg: Optional[EdgeConfig] = None) -> RasterImage:
    cfg = cfg or EdgeConfig()
    return edge_enhance(
        img, k1=cfg.k1, k2=cfg.k2, center_offset=cfg.center_offset, padding=cfg.padding
    )


def _check_polygon_bounds(poly: Polygon, height: int, width: int) -> None:
    for x, y in poly.vertices:
        if not (0 <= x <= width - 1 and 0 <= y <= height - 1):
            raise ValueError(f"polygon vertex ({x}, {y}) outside {width}x{height} image")


@dataclass
class PupilAnnotation:
    """Either a traced polygon or a clicked center expanded to a disk."""

    polygon: Optional[Polygon] = None
    point: Optional[Tuple[float, float]] = None
    radius: float = DEFAULT_PUPIL_CLICK_RADIUS

    def __post_init__(self):
        if (self.polygon is None) == (self.point is None):
            raise ValueError("pupil annotation needs exactly one of polygon or point")
        if self.radius <= 0:
            raise ValueError("pupil click radius must be positive")

    @classmethod
    def from_json(cls, text: str) -> "PupilAnnotation":
        obj = json.loads(text)
        if not isinstance(obj, dict):
            raise ValueError("pupil annotation must be a JSON object")
        if "vertices" in obj:
            return cls(polygon=Polygon(obj["vertices"]))
        if "point" in obj:
            x, y = obj["point"]
            return cls(
                point=(float(x), float(y)),
                radius=float(obj.get("radius", DEFAULT_PUPIL_CLICK_RADIUS)),
            )
        raise ValueError("pupil annotation needs 'vertices' or 'point'")

    def to_mask(self, height: int, width: int) -> BinaryMask:
        if self.polygon is not None:
            _check_polygon_bounds(self.polygon, height, width)
            inside = polygon_inside_mask(self.polygon, height, width)
        else:
            x, y = self.point
            if not (0 <= x <= width - 1 and 0 <= y <= height - 1):
                raise ValueError(f"pupil point ({x}, {y}) outside image")
            ys = np.arange(height)[:, None] - y
            xs = np.arange(width)[None, :] - x
            inside = ys * ys + xs * xs <= self.radius * self.radius
        if not inside.any():
            raise EmptyMaskError("pupil annotation selects no pixels")
        return BinaryMask(inside.astype(np.uint8), class_tag="pupil")


def threshold_band(edge: RasterImage, roi: Polygon) -> BinaryMask:
    """Binarize the edge response inside the polygon (no repair)."""
    _check_polygon_bounds(roi, edge.height, edge.width)
    inside = polygon_inside_mask(roi, edge.height, edge.width)
    if not inside.any():
        raise EmptyMaskError("ROI polygon selects no pixels")
    values = edge.data[inside]
    # a bright band responds with positive lobes along its boundaries
    # (center brighter than neighborhood); the negative moat on the dark side
    # would otherwise dominate the histogram and swallow the background
    positive = values[values > 0]
    if positive.size == 0:
        raise EmptyMaskError("no positive edge response inside the ROI")
    thresh = otsu_threshold(RasterImage(positive[None, :]))
    if not (positive > thresh).any():
        # single-valued response (band thinner than the operator window):
        # there is nothing to split, every positive pixel is stroke
        thresh = 0.0
    fg = (edge.data > thresh) & inside
    return BinaryMask(fg.astype(np.uint8), class_tag="meniscus")


def extract_band(
    edge: RasterImage,
    roi: Polygon,
    repair_cfg: Optional[RepairConfig] = None,
    to_fixpoint: bool = False,
) -> BinaryMask:
    """Threshold the edge response inside the polygon and repair the strokes."""
    band = threshold_band(edge, roi)
    return repair_band(band, repair_cfg, to_fixpoint=to_fixpoint)


def annotate_apply(
    img: RasterImage,
    roi: Polygon,
    pupil: Optional[PupilAnnotation] = None,
    edge_cfg: Optional[EdgeConfig] = None,
    repair_cfg: Optional[RepairConfig] = None,
    to_fixpoint: bool = False,
) -> BinaryMask:
    """Image + annotations -> combined mask (band only when pupil is absent)."""
    edge = compute_edge_map(img, edge_cfg)
    band = extract_band(edge, roi, repair_cfg, to_fixpoint=to_fixpoint)
    if pupil is None:
        return band
    return merge_masks(band, pupil.to_mask(img.height, img.width))


def bbox_polygon(mask: BinaryMask, margin: int = 10) -> Polygon:
    """Rectangle around the mask foreground grown by margin, clamped in-bounds."""
    ys, xs = np.nonzero(mask.data)
    if ys.size == 0:
        raise EmptyMaskError("cannot take the bounding box of an empty mask")
    x0 = max(int(xs.min()) - margin, 0)
    x1 = min(int(xs.max()) + margin, mask.width - 1)
    y0 = max(int(ys.min()) - margin, 0)
    y1 = min(int(ys.max()) + margin, mask.height - 1)
    return Polygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])
