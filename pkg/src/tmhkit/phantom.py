"""Deterministic synthetic eye scenes with analytic ground truth.

Each scene is a dark pupil disk (optionally wrapped in bright rings) above a
bright meniscus band on a mid-gray background. The band profile is flat,
wedge (linear thickness ramp), or a circular-arc annulus; 0-valued dash gaps
mean a solid band. Noise and brightness perturb the stored image only: the
truth mask and truth height are pure geometry, so they never move.

Conventions baked into the geometry:
  * band_row is the top row of the band at the pupil column,
  * wedge thickness ramps from left_height at column 0 to right_height at
    the last column; the analytic truth is the ramp value at the pupil column,
  * an arc band is the half-open annulus radius <= d < radius + gap around a
    center placed radius rows above band_row, so at the pupil column the band
    occupies exactly `gap` rows; columns are dropped once the arc has risen
    more than rise_cap rows so the band stays clear of the pupil.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import GeometryError
from .raster import BinaryMask, RasterImage, save_mask, save_png

# rings are clipped this many rows above the band top so their edge response
# cannot leak into a band polygon grown by the usual 10 px margin
RING_CLEARANCE = 24


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


@dataclass(frozen=True)
class FlatBand:
    """Constant-thickness band."""

    height: int

    def validate(self):
        if self.height < 1:
            raise GeometryError("flat band height must be >= 1")

    def truth_thickness(self, spec: "PhantomSpec") -> float:
        return float(self.height)

    def column_span(self, spec: "PhantomSpec", x: int) -> Optional[tuple]:
        return spec.band_row, spec.band_row + self.height - 1

    def params(self) -> tuple:
        return "flat", float(self.height), ""


@dataclass(frozen=True)
class WedgeBand:
    """Thickness ramps linearly from left image edge to right image edge."""

    left_height: float
    right_height: float

    def validate(self):
        if self.left_height < 1 or self.right_height < 1:
            raise GeometryError("wedge heights must be >= 1")

    def thickness_at(self, spec: "PhantomSpec", x: float) -> float:
        t = x / (spec.width - 1) if spec.width > 1 else 0.0
        return self.left_height + (self.right_height - self.left_height) * t

    def truth_thickness(self, spec: "PhantomSpec") -> float:
        return self.thickness_at(spec, spec.pupil_x)

    def column_span(self, spec: "PhantomSpec", x: int) -> Optional[tuple]:
        h = max(1, _round_half_up(self.thickness_at(spec, x)))
        return spec.band_row, spec.band_row + h - 1

    def params(self) -> tuple:
        return "wedge", float(self.left_height), float(self.right_height)


@dataclass(frozen=True)
class ArcBand:
    """Annulus slice between concentric circles; truth is the radial gap."""

    radius: float
    gap: float
    rise_cap: float = 40.0

    def validate(self):
        if self.radius <= 0 or self.gap < 1:
            raise GeometryError("arc band needs radius > 0 and gap >= 1")
        if self.rise_cap < 0:
            raise GeometryError("arc rise_cap must be >= 0")

    def truth_thickness(self, spec: "PhantomSpec") -> float:
        return float(self.gap)

    def column_span(self, spec: "PhantomSpec", x: int) -> Optional[tuple]:
        dx = x - spec.pupil_x
        r2 = self.radius * self.radius - dx * dx
        if r2 <= 0:
            return None
        inner = math.sqrt(r2)
        if self.radius - inner > self.rise_cap:
            return None
        cy = spec.band_row - self.radius
        lo = cy + inner
        hi = cy + math.sqrt((self.radius + self.gap) ** 2 - dx * dx)
        top = math.ceil(lo)
        bot = math.ceil(hi) - 1  # half-open: strictly inside the outer circle
        if bot < top:
            return None
        return top, bot

    def params(self) -> tuple:
        return "arc", float(self.radius), float(self.gap)


BandProfile = Union[FlatBand, WedgeBand, ArcBand]


@dataclass(frozen=True)
class PhantomSpec:
    """Full geometric + photometric description of one synthetic scene."""

    height: int = 480
    width: int = 640
    pupil_x: int = 320
    pupil_y: int = 160
    pupil_radius: int = 40
    profile: BandProfile = field(default_factory=lambda: FlatBand(10))
    band_row: int = 300
    dash_gap: int = 0  # 0 = solid band
    dash_len: int = 8
    ring_count: int = 0
    ring_spacing: float = 12.0
    noise_sigma: float = 0.0
    brightness: float = 0.0
    band_contrast: float = 60.0
    background: float = 120.0
    pupil_intensity: float = 40.0
    seed: int = 0

    def validate(self) -> None:
        if self.height < 8 or self.width < 8:
            raise GeometryError("image must be at least 8x8")
        if self.pupil_radius < 1:
            raise GeometryError("pupil radius must be >= 1")
        if (
            self.pupil_x - self.pupil_radius < 0
            or self.pupil_x + self.pupil_radius >= self.width
            or self.pupil_y - self.pupil_radius < 0
            or self.pupil_y + self.pupil_radius >= self.height
        ):
            raise GeometryError("pupil disk extends outside the image")
        if self.dash_gap < 0 or self.dash_len < 1:
            raise GeometryError("dash_gap must be >= 0 and dash_len >= 1")
        if self.ring_count < 0 or self.ring_spacing <= 0:
            raise GeometryError("ring layout must be non-negative / positive")
        if self.noise_sigma < 0:
            raise GeometryError("noise sigma must be >= 0")
        self.profile.validate()


@dataclass(frozen=True)
class PhantomCase:
    """A generated scene: image plus analytic truth."""

    spec: PhantomSpec
    image: RasterImage
    truth_combined: BinaryMask
    truth_band: BinaryMask
    truth_pupil_mask: BinaryMask
    truth_tmh_px: float
    truth_pupil: tuple


def _column_on(spec: PhantomSpec, x: int) -> bool:
    if spec.dash_gap == 0:
        return True
    return (x % (spec.dash_len + spec.dash_gap)) < spec.dash_len


def _band_mask(spec: PhantomSpec) -> np.ndarray:
    band = np.zeros((spec.height, spec.width), dtype=np.uint8)
    for x in range(spec.width):
        if not _column_on(spec, x):
            continue
        span = spec.profile.column_span(spec, x)
        if span is None:
            continue
        top, bot = span
        if top < 0 or bot >= spec.height:
            raise GeometryError(
                f"band rows [{top}, {bot}] at column {x} leave the image"
            )
        band[top : bot + 1, x] = 1
    return band


def _pupil_mask(spec: PhantomSpec) -> np.ndarray:
    ys = np.arange(spec.height)[:, None] - spec.pupil_y
    xs = np.arange(spec.width)[None, :] - spec.pupil_x
    return (ys * ys + xs * xs <= spec.pupil_radius**2).astype(np.uint8)


def generate(spec: PhantomSpec) -> PhantomCase:
    """Render one scene. Deterministic for a fixed spec (seed included)."""
    spec.validate()
    band = _band_mask(spec)
    if not band.any():
        raise GeometryError("band profile produced no pixels")
    pupil = _pupil_mask(spec)
    band_top = int(np.nonzero(band.any(axis=1))[0][0])
    pupil_bottom = spec.pupil_y + spec.pupil_radius
    if band_top <= pupil_bottom:
        raise GeometryError(
            f"band top row {band_top} intersects pupil rows (bottom {pupil_bottom})"
        )

    img = np.full((spec.height, spec.width), spec.background, dtype=np.float64)
    if spec.ring_count > 0:
        ys = np.arange(spec.height)[:, None] - spec.pupil_y
        xs = np.arange(spec.width)[None, :] - spec.pupil_x
        dist = np.sqrt(ys * ys + xs * xs)
        clip_row = band_top - RING_CLEARANCE
        rows_ok = np.arange(spec.height)[:, None] <= clip_row
        for i in range(1, spec.ring_count + 1):
            ri = spec.pupil_radius + i * spec.ring_spacing
            ring = (np.abs(dist - ri) <= 0.7) & rows_ok
            img[ring] = spec.background + 40.0
    img[band == 1] = spec.background + spec.band_contrast
    img[pupil == 1] = spec.pupil_intensity

    img += spec.brightness
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        img += rng.normal(0.0, spec.noise_sigma, size=img.shape)
    pixels = np.rint(np.clip(img, 0.0, 255.0)).astype(np.uint8)

    return PhantomCase(
        spec=spec,
        image=RasterImage(pixels),
        truth_combined=BinaryMask(band | pupil, class_tag="combined"),
        truth_band=BinaryMask(band, class_tag="meniscus"),
        truth_pupil_mask=BinaryMask(pupil, class_tag="pupil"),
        truth_tmh_px=spec.profile.truth_thickness(spec),
        truth_pupil=(spec.pupil_x, spec.pupil_y),
    )


# --------------------------------------------------------------------- suite

_FLAT_HEIGHTS = [5, 7, 9, 10, 12, 14, 15, 17, 19, 20, 22, 25]
_WEDGES = [(8, 12), (5, 15), (10, 20), (12, 8), (15, 25), (6, 14)]
_ARCS = [(250.0, 10.0), (300.0, 8.0), (200.0, 15.0), (350.0, 12.0), (280.0, 18.0), (220.0, 6.0)]
_DASH_GAPS = [0, 0, 3, 0, 1, 0, 5, 2, 0, 6, 4, 0]
_PUPIL_XS = [320, 280, 360, 300, 340]
_PUPIL_YS = [150, 160, 170]
_PUPIL_RADII = [35, 40, 45, 50, 42]
_BAND_ROWS = [290, 300, 310, 320]
_NOISE_SIGMAS = [2.0, 4.0, 6.0, 8.0, 10.0]
_BRIGHTNESS = [0.0, 10.0, -10.0]


def suite_spec(index: int, n: int, seed: int) -> PhantomSpec:
    """Deterministic spec for suite slot ``index``; first half is noiseless."""
    kind = index % 4
    if kind in (0, 1):
        profile: BandProfile = FlatBand(_FLAT_HEIGHTS[index % len(_FLAT_HEIGHTS)])
    elif kind == 2:
        lo, hi = _WEDGES[index % len(_WEDGES)]
        profile = WedgeBand(lo, hi)
    else:
        radius, gap = _ARCS[index % len(_ARCS)]
        profile = ArcBand(radius, gap)
    noiseless = index < (n + 1) // 2
    return PhantomSpec(
        pupil_x=_PUPIL_XS[index % len(_PUPIL_XS)],
        pupil_y=_PUPIL_YS[index % len(_PUPIL_YS)],
        pupil_radius=_PUPIL_RADII[index % len(_PUPIL_RADII)],
        profile=profile,
        band_row=_BAND_ROWS[(index // 2) % len(_BAND_ROWS)],
        dash_gap=_DASH_GAPS[index % len(_DASH_GAPS)],
        ring_count=3 if index % 6 == 1 else 0,
        noise_sigma=0.0 if noiseless else _NOISE_SIGMAS[index % len(_NOISE_SIGMAS)],
        brightness=0.0 if noiseless else _BRIGHTNESS[index % len(_BRIGHTNESS)],
        seed=seed + index,
    )


def generate_suite(n: int, seed: int = 0) -> list:
    """n cases cycling the profile grid; reproducible for a fixed seed."""
    if n < 1:
        raise ValueError("suite size must be >= 1")
    return [generate(suite_spec(i, n, seed)) for i in range(n)]


def write_suite(cases: Sequence[PhantomCase], out_dir) -> Path:
    """Persist a suite as images/NNN.png, truth/NNN.png and manifest.csv."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "truth").mkdir(parents=True, exist_ok=True)
    manifest = out / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            [
                "id",
                "truth_tmh_px",
                "pupil_x",
                "pupil_y",
                "profile",
                "param1",
                "param2",
                "band_row",
                "dash_gap",
                "noise_sigma",
                "brightness",
            ]
        )
        for i, case in enumerate(cases):
            cid = f"{i:03d}"
            save_png(case.image, out / "images" / f"{cid}.png")
            save_mask(case.truth_combined, out / "truth" / f"{cid}.png")
            name, p1, p2 = case.spec.profile.params()
            w.writerow(
                [
                    cid,
                    repr(case.truth_tmh_px),
                    case.truth_pupil[0],
                    case.truth_pupil[1],
                    name,
                    p1,
                    p2,
                    case.spec.band_row,
                    case.spec.dash_gap,
                    case.spec.noise_sigma,
                    case.spec.brightness,
                ]
            )
    return manifest


def load_manifest(path) -> list:
    """Manifest rows as dicts with numeric fields parsed."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            row["truth_tmh_px"] = float(row["truth_tmh_px"])
            row["pupil_x"] = int(row["pupil_x"])
            row["pupil_y"] = int(row["pupil_y"])
            rows.append(row)
    return rows


def connectivity_spec(gap: int, index: int = 0, seed: int = 0) -> PhantomSpec:
    """One-pixel-tall dashed band: the stroke geometry the repair stage is
    built to close. Thicker dashes keep all eight nearest neighbours inside
    their own dash, so only this thin profile exercises gap bridging."""
    if not 1 <= gap <= 6:
        raise ValueError("bridgeable dash gaps are 1..6 px")
    return replace(
        suite_spec(index, 1_000_000, seed),  # force the noiseless branch
        profile=FlatBand(1),
        dash_gap=gap,
        dash_len=8 + (index % 5),
        ring_count=0,
    )
