"""Pupil localization, meniscus isolation, and the three TMH methods.

Conventions, fixed across the module: y grows downward, so the upper
boundary of the band is the per-column min y and the lower boundary the
max y. A band occupying rows a..b has thickness b-a+1 (Method 1); Methods
2 and 3 are real-valued and measure boundary-to-boundary geometry, so a
flat band of thickness h yields h-1 from Method 2 and h from Method 3.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import EmptyMaskError, MissingMeniscusError, SectionError
from .raster import BinaryMask, GeometryConfig
from . import __version__

_EIGHT = np.ones((3, 3), dtype=np.int8)


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


@dataclass
class TmrsSet:
    """Per-column foreground y-coordinates of the tear-meniscus region."""

    columns: dict  # x -> ascending np.ndarray of y

    def __post_init__(self):
        cleaned = {}
        for x, ys in self.columns.items():
            arr = np.asarray(ys, dtype=np.int64)
            if arr.size == 0:
                raise ValueError(f"column {x} has no points")
            cleaned[int(x)] = np.sort(arr)
        self.columns = cleaned

    @classmethod
    def from_mask(cls, mask: BinaryMask) -> "TmrsSet":
        ys, xs = np.nonzero(mask.data)
        if ys.size == 0:
            raise EmptyMaskError("mask has no foreground")
        cols: dict = {}
        for y, x in zip(ys.tolist(), xs.tolist()):
            cols.setdefault(x, []).append(y)
        return cls(cols)

    @property
    def n(self) -> int:
        """Number of columns spanned."""
        return len(self.columns)

    def xs(self) -> list:
        return sorted(self.columns)


@dataclass
class PupilCenter:
    x: int
    y: int
    box_top: int
    box_size: int = 160
    clamped: bool = False


@dataclass
class SectionSpec:
    """Measurement window: total width length_px centered at center_x."""

    length_mm: float
    length_px: int
    center_x: int

    @classmethod
    def from_mm(cls, length_mm: float, center_x: int, cfg: GeometryConfig) -> "SectionSpec":
        if length_mm <= 0:
            raise ValueError("section length must be positive")
        if not 0.5 <= length_mm <= 4.0:
            warnings.warn(
                f"section length {length_mm} mm outside the robust 0.5-4 mm range",
                stacklevel=2,
            )
        return cls(length_mm, int(length_mm / cfg.mm_per_pixel), int(center_x))

    def column_range(self) -> range:
        half = self.length_px // 2
        return range(self.center_x - half, self.center_x + half + 1)


@dataclass
class TmhResult:
    method: int
    tmh_px: float
    tmh_mm: float
    section: SectionSpec
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "tmh_px": self.tmh_px,
            "tmh_mm": self.tmh_mm,
            "section": {
                "length_mm": self.section.length_mm,
                "length_px": self.section.length_px,
                "center_x": self.section.center_x,
            },
            "diagnostics": self.diagnostics,
            "version": __version__,
        }


def locate_pupil(mask: BinaryMask, box_size: int = 160) -> PupilCenter:
    """Topmost foreground pixel anchors a box_size square extending down;
    the center is the rounded centroid of foreground inside that box."""
    if box_size < 1:
        raise ValueError("box_size must be >= 1")
    ys, xs = np.nonzero(mask.data)
    if ys.size == 0:
        raise EmptyMaskError("cannot locate pupil in an empty mask")
    top = int(ys.min())
    top_xs = xs[ys == top]
    anchor_x = float(top_xs.mean())

    left = _round_half_up(anchor_x) - box_size // 2
    right = left + box_size - 1
    bottom = top + box_size - 1
    clamped = False
    if left < 0:
        left, clamped = 0, True
    if right > mask.width - 1:
        right, clamped = mask.width - 1, True
    if bottom > mask.height - 1:
        bottom, clamped = mask.height - 1, True
    if right < left or bottom < top:
        raise ValueError("pupil search box degenerate after clamping")

    box = (
        (ys >= top) & (ys <= bottom) & (xs >= left) & (xs <= right)
    )
    cx = float(xs[box].mean())
    cy = float(ys[box].mean())
    return PupilCenter(
        x=_round_half_up(cx),
        y=_round_half_up(cy),
        box_top=top,
        box_size=box_size,
        clamped=clamped,
    )


def extract_tmrs(mask: BinaryMask, pupil: PupilCenter) -> TmrsSet:
    """Remove the pupil's connected component and everything sharing its
    rows; whatever foreground remains is the tear-meniscus set."""
    grid = mask.data
    if not grid.any():
        raise EmptyMaskError("mask has no foreground")
    labels, _ = ndimage.label(grid, structure=_EIGHT)
    seed = labels[pupil.y, pupil.x] if _in_bounds(mask, pupil) else 0
    if seed == 0:
        # centroid can land on background (ring-like pupils); take the
        # component of the nearest foreground pixel instead
        ys, xs = np.nonzero(grid)
        d2 = (ys - pupil.y) ** 2 + (xs - pupil.x) ** 2
        i = int(np.argmin(d2))
        seed = labels[ys[i], xs[i]]
    comp_rows = np.nonzero((labels == seed).any(axis=1))[0]
    r0, r1 = int(comp_rows.min()), int(comp_rows.max())
    remaining = grid.copy()
    remaining[r0 : r1 + 1, :] = 0
    if not remaining.any():
        raise MissingMeniscusError(
            f"no meniscus foreground outside pupil rows {r0}..{r1}"
        )
    return TmrsSet.from_mask(BinaryMask(remaining, class_tag=mask.class_tag))


def _in_bounds(mask: BinaryMask, pupil: PupilCenter) -> bool:
    return 0 <= pupil.y < mask.height and 0 <= pupil.x < mask.width


def _section_columns(tmrs: TmrsSet, section: SectionSpec) -> list:
    cols = [x for x in section.column_range() if x in tmrs.columns]
    if not cols:
        raise SectionError(
            f"no meniscus columns in section {section.center_x} +/- {section.length_px // 2}"
        )
    return cols


def _result(method: int, tmh_px: float, section: SectionSpec, cfg: GeometryConfig, diag: dict) -> TmhResult:
    if tmh_px < 0:
        raise ValueError("negative TMH")
    return TmhResult(method, float(tmh_px), float(tmh_px) * cfg.mm_per_pixel, section, diag)


def tmh_method1(tmrs: TmrsSet, section: SectionSpec, cfg: GeometryConfig | None = None) -> TmhResult:
    """Mean per-column vertical extent: max(y) - min(y) + 1."""
    cfg = cfg or GeometryConfig()
    cols = _section_columns(tmrs, section)
    heights = [int(tmrs.columns[x][-1] - tmrs.columns[x][0] + 1) for x in cols]
    diag = {"columns_used": len(cols), "column_heights": heights}
    return _result(1, float(np.mean(heights)), section, cfg, diag)


def tmh_method2(
    tmrs: TmrsSet,
    section: SectionSpec,
    cfg: GeometryConfig | None = None,
    fit_degree: int = 2,
    slope_window: float = 5.0,
    samples_per_px: int = 100,
) -> TmhResult:
    """Mean distance between slope-matched points of the fitted boundaries.

    Both boundaries are least-squares polynomials over the whole section.
    For each column x the match is searched within x +/- slope_window;
    slope ties (flat or parallel boundaries) resolve to the candidate
    nearest in the plane, which is what makes two parallel fitted lines
    measure their true separation.
    """
    cfg = cfg or GeometryConfig()
    if fit_degree < 1:
        raise ValueError("fit_degree must be >= 1")
    cols = _section_columns(tmrs, section)
    if len(cols) < fit_degree + 1:
        raise SectionError(
            f"{len(cols)} columns cannot determine a degree-{fit_degree} fit"
        )
    xs = np.array(cols, dtype=np.float64)
    upper = np.array([tmrs.columns[x][0] for x in cols], dtype=np.float64)
    lower = np.array([tmrs.columns[x][-1] for x in cols], dtype=np.float64)
    # fit in coordinates centered on the section so results are exactly
    # invariant under horizontal translation of the whole mask
    u = xs - section.center_x
    f1 = np.polyfit(u, upper, fit_degree)
    f2 = np.polyfit(u, lower, fit_degree)
    d1 = np.polyder(f1)
    d2 = np.polyder(f2)

    n_samples = int(2 * slope_window * samples_per_px) + 1
    distances = []
    matches = []
    for ui in u:
        cand = np.linspace(ui - slope_window, ui + slope_window, n_samples)
        slope_gap = np.abs(np.polyval(d2, cand) - np.polyval(d1, ui))
        best = slope_gap.min()
        tied = np.nonzero(slope_gap <= best + 1e-9)[0]
        px, py = ui, np.polyval(f1, ui)
        qx = cand[tied]
        qy = np.polyval(f2, qx)
        dist2 = (qx - px) ** 2 + (qy - py) ** 2
        j = int(np.argmin(dist2))  # first minimum: smallest x on further ties
        distances.append(math.sqrt(float(dist2[j])))
        matches.append(float(qx[j] + section.center_x))
    diag = {
        "fit_degree": fit_degree,
        "upper_coeffs": [float(c) for c in f1],
        "lower_coeffs": [float(c) for c in f2],
        "matched_xs": matches,
    }
    return _result(2, float(np.mean(distances)), section, cfg, diag)


def _boundary_length(xs: list, ys: dict, pick) -> float:
    """Polyline length of a per-column boundary, split at column gaps.

    Each contiguous run contributes 1 (its own pixel cell) plus the
    segment lengths between adjacent columns, so a run of W columns on a
    flat boundary has length W and a lone column has length 1.
    """
    total = 0.0
    prev_x = None
    prev_y = None
    for x in xs:
        y = float(pick(ys[x]))
        if prev_x is not None and x == prev_x + 1:
            total += math.sqrt(1.0 + (y - prev_y) ** 2)
        else:
            total += 1.0
        prev_x, prev_y = x, y
    return total


def tmh_method3(tmrs: TmrsSet, section: SectionSpec, cfg: GeometryConfig | None = None) -> TmhResult:
    """Area over mean boundary length: TMH = 2S / (L_up + L_low)."""
    cfg = cfg or GeometryConfig()
    cols = _section_columns(tmrs, section)
    area = float(sum(tmrs.columns[x].size for x in cols))
    l_up = _boundary_length(cols, tmrs.columns, lambda a: a[0])
    l_low = _boundary_length(cols, tmrs.columns, lambda a: a[-1])
    if l_up + l_low == 0:
        raise SectionError("zero boundary length")
    diag = {"area": area, "l_up": l_up, "l_low": l_low}
    return _result(3, 2.0 * area / (l_up + l_low), section, cfg, diag)


_METHODS = {1: tmh_method1, 2: tmh_method2, 3: tmh_method3}


def measure(
    mask: BinaryMask,
    method: int = 1,
    cfg: GeometryConfig | None = None,
    section_mm: float = 0.5,
    **method_kwargs,
) -> TmhResult:
    """Full measurement: locate pupil, isolate meniscus, run one method."""
    cfg = cfg or GeometryConfig()
    if method not in _METHODS:
        raise ValueError(f"method must be 1, 2, or 3, got {method}")
    if section_mm >= mask.width * cfg.mm_per_pixel:
        raise ValueError(
            f"section {section_mm} mm exceeds the image width "
            f"({mask.width * cfg.mm_per_pixel:.3f} mm)"
        )
    pupil = locate_pupil(mask)
    tmrs = extract_tmrs(mask, pupil)
    section = SectionSpec.from_mm(section_mm, pupil.x, cfg)
    result = _METHODS[method](tmrs, section, cfg, **method_kwargs)
    result.diagnostics["pupil_x"] = pupil.x
    result.diagnostics["pupil_y"] = pupil.y
    return result
