import numpy as np
import pytest

from tmhkit.raster import BinaryMask, RasterImage


@pytest.fixture
def rng():
    return np.random.default_rng(20260819)


@pytest.fixture
def gradient_image():
    # 40x60 ramp, useful wherever a non-degenerate histogram is needed
    a = np.linspace(0, 255, 40 * 60).reshape(40, 60)
    return RasterImage(np.round(a).astype(np.uint8))


def band_mask(h, w, top, bot, cols=None):
    """Rectangular band mask: rows top..bot inclusive over cols (default all)."""
    m = np.zeros((h, w), dtype=np.uint8)
    if cols is None:
        cols = range(w)
    for c in cols:
        m[top : bot + 1, c] = 1
    return BinaryMask(m)


def count_components8(grid):
    """8-connected component count by BFS; independent of any library labeling."""
    g = np.asarray(grid)
    seen = np.zeros_like(g, dtype=bool)
    h, w = g.shape
    n = 0
    for sy, sx in zip(*np.nonzero(g)):
        if seen[sy, sx]:
            continue
        n += 1
        stack = [(int(sy), int(sx))]
        seen[sy, sx] = True
        while stack:
            y, x = stack.pop()
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    yy, xx = y + dy, x + dx
                    if 0 <= yy < h and 0 <= xx < w and g[yy, xx] and not seen[yy, xx]:
                        seen[yy, xx] = True
                        stack.append((yy, xx))
    return n
