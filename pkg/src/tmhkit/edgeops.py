"""Edge-detection and filtering operators.

The enhancement is two chained true convolutions: a high-center
edge-detection kernel (EDO) followed by a horizontal smoothing kernel
(FO). Responses are signed floats; nothing here clamps or rescales,
display conversion happens at the export boundary.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import convolve2d

from .raster import RasterImage


def edo_kernel(k1: int = 13, center_offset: int = 5) -> np.ndarray:
    """k1 x k1 edge-detection kernel: center k1^2 - center_offset, rest -1.

    With the default offset the entries sum to -4 for every odd k1.
    """
    if k1 < 3 or k1 % 2 == 0:
        raise ValueError("k1 must be an odd integer >= 3")
    k = np.full((k1, k1), -1.0)
    k[k1 // 2, k1 // 2] = float(k1 * k1 - center_offset)
    return k


def fo_kernel(k2: int = 7) -> np.ndarray:
    """k2 x k2 filtering kernel: middle row all 1/k2, other rows 0. Sums to 1."""
    if k2 < 1 or k2 % 2 == 0:
        raise ValueError("k2 must be an odd integer >= 1")
    k = np.zeros((k2, k2))
    k[k2 // 2, :] = 1.0 / k2
    return k


def convolve(img: RasterImage, kernel: np.ndarray, padding: str = "reflect") -> RasterImage:
    """Same-size true 2-D convolution (kernel flipped on both axes).

    reflect padding mirrors without duplicating the border row/column,
    so it needs image dims > half the kernel; zero padding has no minimum.
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 2 or kernel.shape[0] % 2 == 0 or kernel.shape[1] % 2 == 0:
        raise ValueError("kernel must be 2-D with odd dimensions")
    a = img.as_float()
    ph, pw = kernel.shape[0] // 2, kernel.shape[1] // 2
    if padding == "reflect":
        if a.shape[0] <= ph or a.shape[1] <= pw:
            raise ValueError(
                f"image {a.shape} too small for reflect padding of {kernel.shape} kernel"
            )
        padded = np.pad(a, ((ph, ph), (pw, pw)), mode="reflect")
    elif padding == "zero":
        padded = np.pad(a, ((ph, ph), (pw, pw)), mode="constant")
    else:
        raise ValueError(f"unknown padding mode {padding!r}")
    out = convolve2d(padded, kernel, mode="valid", boundary="fill")
    return RasterImage(out)


def edge_enhance(
    img: RasterImage,
    k1: int = 13,
    k2: int = 7,
    center_offset: int = 5,
    padding: str = "reflect",
) -> RasterImage:
    """EDO then FO over the luminance plane; returns the signed response."""
    step = convolve(img, edo_kernel(k1, center_offset), padding=padding)
    return convolve(step, fo_kernel(k2), padding=padding)
