"""Heuristic pre-measurement quality gate.

Transparent statistics instead of a learned classifier: global mean for
exposure, variance of an 8-neighbour Laplacian response for focus/noise, a
dark-pixel count for a pupil candidate and row-mean prominence for a band
candidate. A sharpness value below the floor means defocus; far above the
ceiling means the image is drowned in noise — both report as "blurred".

All statistics are invariant under horizontal mirroring, and every threshold
lives in QualityThresholds so deployments can recalibrate. The defaults are
calibrated so the noiseless synthetic suite passes with >= 1.5x margin on
every score.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from .edgeops import convolve
from .raster import RasterImage

REASONS = ("too_dark", "too_bright", "blurred", "no_pupil_candidate", "no_band_candidate")

_LAPLACIAN = np.array([[1, 1, 1], [1, -8, 1], [1, 1, 1]], dtype=np.float64)


@dataclass(frozen=True)
class QualityThresholds:
    mean_lo: float = 25.0
    mean_hi: float = 230.0
    sharpness_lo: float = 50.0
    sharpness_hi: float = 40_000.0
    pupil_level: float = 70.0  # intensity at or below which a pixel is pupil-dark
    min_pupil_area: int = 100
    band_prominence: float = 5.0  # max row-mean minus median row-mean

    def __post_init__(self):
        if self.mean_lo >= self.mean_hi or self.sharpness_lo >= self.sharpness_hi:
            raise ValueError("quality bounds must be ordered lo < hi")
        if self.min_pupil_area < 1:
            raise ValueError("min_pupil_area must be >= 1")


@dataclass(frozen=True)
class QualityReport:
    verdict: str
    reasons: Tuple[str, ...]
    scores: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.verdict not in ("good", "poor"):
            raise ValueError(f"unknown verdict {self.verdict!r}")
        bad = set(self.reasons) - set(REASONS)
        if bad:
            raise ValueError(f"unknown reasons {sorted(bad)}")
        if (self.verdict == "poor") != bool(self.reasons):
            raise ValueError("verdict poor iff reasons non-empty")

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "reasons": list(self.reasons),
            "scores": dict(self.scores),
        }


def assess(img: RasterImage, thresholds: QualityThresholds = None) -> QualityReport:
    """Deterministic gate; advisory unless the caller enforces it."""
    th = thresholds or QualityThresholds()
    lum = img.as_float()

    mean_intensity = float(lum.mean())
    # reflect padding keeps the statistic exactly mirror-invariant
    sharpness = float(convolve(RasterImage(lum), _LAPLACIAN).data.var())
    pupil_area = int((lum <= th.pupil_level).sum())
    row_means = lum.mean(axis=1)
    prominence = float(row_means.max() - np.median(row_means))

    reasons = []
    if mean_intensity < th.mean_lo:
        reasons.append("too_dark")
    if mean_intensity > th.mean_hi:
        reasons.append("too_bright")
    if not th.sharpness_lo <= sharpness <= th.sharpness_hi:
        reasons.append("blurred")
    if pupil_area < th.min_pupil_area:
        reasons.append("no_pupil_candidate")
    if prominence < th.band_prominence:
        reasons.append("no_band_candidate")

    return QualityReport(
        verdict="poor" if reasons else "good",
        reasons=tuple(reasons),
        scores={
            "mean_intensity": mean_intensity,
            "sharpness": sharpness,
            "pupil_coverage": pupil_area / lum.size,
            "band_prominence": prominence,
        },
    )
