"""Image and mask grid types, PNG I/O, and preprocessing geometry.

Intensity images are 8-bit internally; convolution and display code views
them as float. Masks are single-channel {0,1} grids with a class tag and
persist as {0,255} PNG plus a JSON sidecar carrying the tag.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

MASK_CLASSES = ("pupil", "meniscus", "combined")

#: default scale of the imaging device, mm per pixel
MM_PER_PIXEL = 0.011575


class PngFormatError(ValueError):
    """File is not a decodable PNG or has an unsupported layout."""


@dataclass
class RasterImage:
    """H x W (x3) intensity grid.

    ``data`` is uint8 for stored images or float64 for normalized /
    convolution-response views; float responses are not range-clamped.
    """

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim == 2:
            pass
        elif self.data.ndim == 3 and self.data.shape[2] == 3:
            pass
        else:
            raise ValueError(f"expected HxW or HxWx3 grid, got shape {self.data.shape}")
        if self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ValueError("image dimensions must be >= 1")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else 3

    def as_float(self) -> np.ndarray:
        """Single-channel float64 view; RGB collapses to BT.601 luminance."""
        if self.channels == 1:
            return self.data.astype(np.float64)
        rgb = self.data.astype(np.float64)
        return 0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]


@dataclass
class BinaryMask:
    """H x W grid of {0,1} labels with a class tag."""

    data: np.ndarray
    class_tag: str = "combined"

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.dtype == np.bool_:
            self.data = self.data.astype(np.uint8)
        if self.data.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {self.data.shape}")
        if self.class_tag not in MASK_CLASSES:
            raise ValueError(f"unknown class tag {self.class_tag!r}")
        bad = (self.data != 0) & (self.data != 1)
        if bad.any():
            raise ValueError("mask values must be 0 or 1")
        self.data = self.data.astype(np.uint8)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def count(self) -> int:
        return int(self.data.sum())


@dataclass
class GeometryConfig:
    """Preprocessing geometry: crop margins, network input size, pixel scale."""

    crop_left: int = 168
    crop_right: int = 168
    network_size: int = 512
    mm_per_pixel: float = MM_PER_PIXEL

    def __post_init__(self):
        if self.mm_per_pixel <= 0:
            raise ValueError("mm_per_pixel must be positive")
        if self.crop_left < 0 or self.crop_right < 0:
            raise ValueError("crop margins must be non-negative")


def _image_from_pil(im, origin) -> RasterImage:
    mode = im.mode
    if mode == "P":
        im = im.convert("RGB")
        mode = "RGB"
    if mode in ("I", "I;16", "I;16B"):
        arr16 = np.asarray(im, dtype=np.uint32)
        arr = np.round(arr16 / 257.0).astype(np.uint8)
        return RasterImage(arr)
    if mode in ("L", "RGB"):
        return RasterImage(np.asarray(im, dtype=np.uint8))
    nchan = len(im.getbands())
    raise PngFormatError(f"unsupported channel count {nchan} (mode {mode}) in {origin}")


def load_png(path) -> RasterImage:
    """Load an 8-bit 1- or 3-channel PNG; 16-bit grayscale is rescaled to 8-bit."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such image: {path}")
    try:
        with Image.open(path) as im:
            im.load()
            return _image_from_pil(im, path)
    except UnidentifiedImageError as exc:
        raise PngFormatError(f"not a decodable PNG: {path}") from exc


def png_bytes_to_image(data: bytes) -> RasterImage:
    """Decode PNG bytes (e.g. an HTTP upload) with the same rules as load_png."""
    import io

    try:
        with Image.open(io.BytesIO(data)) as im:
            im.load()
            return _image_from_pil(im, "<bytes>")
    except UnidentifiedImageError as exc:
        raise PngFormatError("not a decodable PNG payload") from exc


def save_png(img: RasterImage, path) -> None:
    """Write an 8-bit PNG. Float data must be converted first (see to_display)."""
    if img.data.dtype != np.uint8:
        raise ValueError("save_png expects uint8 data; use to_display() for responses")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(img.data).save(path, format="PNG")


def to_display(img: RasterImage) -> RasterImage:
    """Min-max normalize a float response onto 0..255 uint8 for export/UI."""
    a = img.as_float() if img.channels == 3 else img.data.astype(np.float64)
    lo, hi = float(a.min()), float(a.max())
    if hi > lo:
        a = (a - lo) / (hi - lo) * 255.0
    else:
        a = np.zeros_like(a)
    return RasterImage(np.round(a).astype(np.uint8))


def save_mask(mask: BinaryMask, path) -> None:
    """Persist a mask as {0,255} single-channel PNG plus a class-tag sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray((mask.data * 255).astype(np.uint8)).save(path, format="PNG")
    sidecar = path.with_suffix(".json")
    sidecar.write_text(json.dumps({"class": mask.class_tag}))


def load_mask(path) -> BinaryMask:
    """Load a mask PNG; the sidecar supplies the class tag (default combined)."""
    img = load_png(path)
    if img.channels != 1:
        raise PngFormatError(f"mask must be single-channel: {path}")
    tag = "combined"
    sidecar = Path(path).with_suffix(".json")
    if sidecar.exists():
        tag = json.loads(sidecar.read_text()).get("class", "combined")
    return BinaryMask((img.data > 127).astype(np.uint8), class_tag=tag)


def mask_png_bytes(mask: BinaryMask) -> bytes:
    """Encode a mask to PNG bytes ({0,255} convention), e.g. for HTTP responses."""
    import io

    buf = io.BytesIO()
    Image.fromarray((mask.data * 255).astype(np.uint8)).save(buf, format="PNG")
    return buf.getvalue()


def crop_symmetric(img: RasterImage, target_width: int) -> RasterImage:
    """Crop to a centered window of target_width columns.

    An odd surplus removes one extra column from the left side.
    """
    if target_width > img.width:
        raise ValueError(f"target width {target_width} exceeds image width {img.width}")
    surplus = img.width - target_width
    left = surplus // 2 + surplus % 2
    return RasterImage(img.data[:, left : left + target_width].copy())


def crop_margins(img: RasterImage, cfg: GeometryConfig) -> RasterImage:
    """Crop explicit left/right margins (the recorded acquisition geometry)."""
    if cfg.crop_left + cfg.crop_right >= img.width:
        raise ValueError("crop margins consume the whole image")
    return RasterImage(img.data[:, cfg.crop_left : img.width - cfg.crop_right].copy())


def _nearest_indices(n_src: int, n_dst: int) -> np.ndarray:
    # pixel-center mapping; round-trips exactly on integer up/down factors
    idx = np.floor((np.arange(n_dst) + 0.5) * n_src / n_dst).astype(np.int64)
    return np.clip(idx, 0, n_src - 1)


def resize(img: RasterImage, new_h: int, new_w: int, mode: str = "bilinear") -> RasterImage:
    """Resize with pixel-center alignment. Masks must use nearest."""
    if new_h < 1 or new_w < 1:
        raise ValueError("resize dimensions must be >= 1")
    if mode not in ("bilinear", "nearest"):
        raise ValueError(f"unknown resize mode {mode!r}")
    src = img.data
    if mode == "nearest":
        ri = _nearest_indices(img.height, new_h)
        ci = _nearest_indices(img.width, new_w)
        out = src[np.ix_(ri, ci)] if src.ndim == 2 else src[np.ix_(ri, ci)]
        return RasterImage(out.copy())

    a = src.astype(np.float64)
    ys = (np.arange(new_h) + 0.5) * img.height / new_h - 0.5
    xs = (np.arange(new_w) + 0.5) * img.width / new_w - 0.5
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, img.height - 1)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, img.width - 1)
    y1 = np.clip(y0 + 1, 0, img.height - 1)
    x1 = np.clip(x0 + 1, 0, img.width - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)
    wx = np.clip(xs - x0, 0.0, 1.0)
    if a.ndim == 2:
        a = a[:, :, None]
    top = a[y0][:, x0] * (1 - wx)[None, :, None] + a[y0][:, x1] * wx[None, :, None]
    bot = a[y1][:, x0] * (1 - wx)[None, :, None] + a[y1][:, x1] * wx[None, :, None]
    out = top * (1 - wy)[:, None, None] + bot * wy[:, None, None]
    if src.ndim == 2:
        out = out[:, :, 0]
    if src.dtype == np.uint8:
        out = np.clip(np.round(out), 0, 255).astype(np.uint8)
    return RasterImage(out)


def resize_mask(mask: BinaryMask, new_h: int, new_w: int) -> BinaryMask:
    """Nearest-neighbor mask resize; never introduces values outside {0,1}."""
    out = resize(RasterImage(mask.data), new_h, new_w, mode="nearest")
    return BinaryMask(out.data, class_tag=mask.class_tag)


def otsu_threshold(img: RasterImage, bins: int = 256) -> float:
    """Between-class-variance-maximizing threshold over a 256-bin histogram.

    uint8 data uses the exact integer bins; float data is binned over its
    own [min, max] range and the returned threshold lives in that domain.
    Ties resolve to the lowest threshold.
    """
    a = img.as_float() if img.channels == 3 else img.data.astype(np.float64)
    lo, hi = float(a.min()), float(a.max())
    if hi == lo:
        return lo
    if img.data.dtype == np.uint8 and img.channels == 1:
        edges = np.arange(257, dtype=np.float64) - 0.5
        centers = np.arange(256, dtype=np.float64)
        hist, _ = np.histogram(a, bins=edges)
    else:
        hist, edges = np.histogram(a, bins=bins, range=(lo, hi))
        centers = (edges[:-1] + edges[1:]) / 2.0
    hist = hist.astype(np.float64)
    total = hist.sum()
    w0 = np.cumsum(hist)
    w1 = total - w0
    cum = np.cumsum(hist * centers)
    mu0 = np.divide(cum, w0, out=np.zeros_like(cum), where=w0 > 0)
    mu1 = np.divide(cum[-1] - cum, w1, out=np.zeros_like(cum), where=w1 > 0)
    between = w0 * w1 * (mu0 - mu1) ** 2
    best = int(np.argmax(between))  # argmax returns the first (lowest) maximizer
    # threshold sits at the upper edge of the chosen bin: "> t" selects bins above
    if img.data.dtype == np.uint8 and img.channels == 1:
        return float(centers[best])
    return float(edges[best + 1])


def binarize(img: RasterImage, threshold: float) -> BinaryMask:
    """Single-channel threshold: 1 iff intensity > threshold."""
    if img.channels != 1:
        raise ValueError("binarize expects a single-channel image")
    return BinaryMask((img.data.astype(np.float64) > threshold).astype(np.uint8))


def px_to_mm(v: float, cfg: GeometryConfig) -> float:
    if v < 0:
        raise ValueError("pixel value must be non-negative")
    return v * cfg.mm_per_pixel


def mm_to_px(v: float, cfg: GeometryConfig) -> float:
    if v < 0:
        raise ValueError("mm value must be non-negative")
    return v / cfg.mm_per_pixel
