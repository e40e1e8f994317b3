"""Polygon ROI clipping and KD-tree band repair.

The repair step closes gaps in a fragmented band: every foreground point
links to its k nearest foreground neighbors (Euclidean, ties to the
smaller point index) within a distance cap, and each link is rasterized
as a line segment. Output always contains the input.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyMaskError
from .raster import BinaryMask

_LEAF_SIZE = 16


@dataclass
class Polygon:
    """Ordered (x, y) vertices, implicitly closed."""

    vertices: list

    def __post_init__(self):
        self.vertices = [(float(x), float(y)) for x, y in self.vertices]
        if len(self.vertices) < 3:
            raise ValueError("polygon needs at least 3 vertices")

    def area(self) -> float:
        """Shoelace area (absolute)."""
        v = self.vertices
        s = 0.0
        for i in range(len(v)):
            x1, y1 = v[i]
            x2, y2 = v[(i + 1) % len(v)]
            s += x1 * y2 - x2 * y1
        return abs(s) / 2.0

    def to_json(self) -> str:
        return json.dumps({"vertices": [[x, y] for x, y in self.vertices]})

    @classmethod
    def from_json(cls, text: str) -> "Polygon":
        obj = json.loads(text)
        if not isinstance(obj, dict) or "vertices" not in obj:
            raise ValueError('polygon JSON must be {"vertices": [[x, y], ...]}')
        return cls(obj["vertices"])


@dataclass
class RepairConfig:
    k_neighbors: int = 8
    max_link_distance: float = 15.0  # math.inf disables the cap
    stroke_width: int = 1

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        if not self.max_link_distance > 0:
            raise ValueError("max_link_distance must be positive")
        if self.stroke_width < 1:
            raise ValueError("stroke_width must be >= 1")


def polygon_inside_mask(poly: Polygon, height: int, width: int) -> np.ndarray:
    """Boolean grid of pixel centers inside the polygon.

    Even-odd rule with inclusive boundary: a center exactly on an edge
    or vertex counts as inside.
    """
    v = np.asarray(poly.vertices, dtype=np.float64)
    X, Y = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))
    inside = np.zeros((height, width), dtype=bool)
    on_edge = np.zeros((height, width), dtype=bool)
    n = len(v)
    for i in range(n):
        x1, y1 = v[i]
        x2, y2 = v[(i + 1) % n]
        straddle = (y1 > Y) != (y2 > Y)
        denom = y2 - y1 if y2 != y1 else 1.0
        xint = x1 + (x2 - x1) * (Y - y1) / denom
        inside ^= straddle & (X < xint)
        # boundary test: collinearity plus segment bounding box
        cross = (x2 - x1) * (Y - y1) - (y2 - y1) * (X - x1)
        scale = max(1.0, abs(x2 - x1) + abs(y2 - y1))
        in_box = (
            (np.minimum(x1, x2) - 1e-9 <= X)
            & (X <= np.maximum(x1, x2) + 1e-9)
            & (np.minimum(y1, y2) - 1e-9 <= Y)
            & (Y <= np.maximum(y1, y2) + 1e-9)
        )
        on_edge |= in_box & (np.abs(cross) <= 1e-9 * scale)
    return inside | on_edge


def clip_to_polygon(mask: BinaryMask, poly: Polygon) -> BinaryMask:
    """Keep foreground whose pixel center lies inside the polygon."""
    if poly.area() == 0:
        raise ValueError("degenerate polygon with zero area")
    for x, y in poly.vertices:
        if not (0 <= x <= mask.width - 1 and 0 <= y <= mask.height - 1):
            raise ValueError(f"polygon vertex ({x}, {y}) outside mask bounds")
    keep = polygon_inside_mask(poly, mask.height, mask.width)
    return BinaryMask((mask.data.astype(bool) & keep).astype(np.uint8), class_tag=mask.class_tag)


class KdTree:
    """2-d KD-tree over an (N, 2) point array; query ties resolve to the
    smaller point index, matching exhaustive search exactly."""

    __slots__ = ("points", "_axis", "_split", "_left", "_right", "_leaf")

    def __init__(self, points):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("points must be an (N, 2) array")
        if pts.shape[0] == 0:
            raise EmptyMaskError("cannot build a KD-tree over an empty point set")
        self.points = pts
        self._axis: list = []
        self._split: list = []
        self._left: list = []
        self._right: list = []
        self._leaf: list = []
        self._build(np.arange(pts.shape[0]), 0)

    def _new_node(self):
        self._axis.append(-1)
        self._split.append(0.0)
        self._left.append(-1)
        self._right.append(-1)
        self._leaf.append(None)
        return len(self._axis) - 1

    def _build(self, idx: np.ndarray, depth: int) -> int:
        node = self._new_node()
        if idx.size <= _LEAF_SIZE:
            self._leaf[node] = idx
            return node
        axis = depth % 2
        coords = self.points[idx, axis]
        m = idx.size // 2
        order = np.argpartition(coords, m)
        self._axis[node] = axis
        self._split[node] = float(coords[order[m]])
        self._left[node] = self._build(idx[order[:m]], depth + 1)
        self._right[node] = self._build(idx[order[m:]], depth + 1)
        return node

    def query(self, point, k: int) -> list:
        """Indices of the k nearest points, ordered by (distance, index).

        Fewer than k points in the tree returns them all.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        q = np.asarray(point, dtype=np.float64)
        if q.shape != (2,):
            raise ValueError("query point must be length-2")
        heap: list = []  # (-d2, -idx); heap[0] is the current worst keeper
        stack = [(0, 0.0)]
        pts = self.points
        while stack:
            node, bound = stack.pop()
            if len(heap) == k and bound > -heap[0][0]:
                continue  # strictly farther than the worst keeper: prune
            leaf = self._leaf[node]
            if leaf is not None:
                d2 = ((pts[leaf] - q) ** 2).sum(axis=1)
                for j in range(leaf.size):
                    cand = (-float(d2[j]), -int(leaf[j]))
                    if len(heap) < k:
                        heapq.heappush(heap, cand)
                    elif cand > heap[0]:
                        heapq.heappushpop(heap, cand)
                continue
            axis = self._axis[node]
            diff = float(q[axis]) - self._split[node]
            if diff < 0:
                near, far = self._left[node], self._right[node]
            else:
                near, far = self._right[node], self._left[node]
            stack.append((far, diff * diff))
            stack.append((near, bound))
        return [-i for _, i in sorted(heap, reverse=True)]


def build_kdtree(points) -> KdTree:
    """Index an (x, y) point set for exact k-nearest-neighbor queries."""
    return KdTree(points)


def _bresenham(x0: int, y0: int, x1: int, y1: int):
    """Integer line rasterization, endpoints included."""
    dx = abs(x1 - x0)
    sx = 1 if x0 < x1 else -1
    dy = -abs(y1 - y0)
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    out = []
    while True:
        out.append((x0, y0))
        if x0 == x1 and y0 == y1:
            return out
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def _neighbor_counts(grid: np.ndarray) -> np.ndarray:
    """Occupied 8-neighbor count per cell."""
    p = np.pad(grid, 1)
    out = np.zeros_like(grid, dtype=np.int32)
    h, w = grid.shape
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            out += p[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
    return out


def repair_band(
    mask: BinaryMask,
    cfg: RepairConfig | None = None,
    to_fixpoint: bool = False,
    max_passes: int = 10,
) -> BinaryMask:
    """Draw segments from each foreground point to its k nearest neighbors.

    Single pass by default; to_fixpoint repeats until a pass adds nothing
    (capped at max_passes). Each link is drawn only when its length is
    <= max_link_distance. Output is a superset of the input.
    """
    cfg = cfg or RepairConfig()
    if mask.count() == 0:
        raise EmptyMaskError("repair_band needs at least one foreground pixel")
    current = mask.data.astype(np.uint8)
    passes = max_passes if to_fixpoint else 1
    for _ in range(passes):
        grown = _repair_once(current, cfg)
        if np.array_equal(grown, current):
            break
        current = grown
    return BinaryMask(current, class_tag=mask.class_tag)


def _repair_once(grid: np.ndarray, cfg: RepairConfig) -> np.ndarray:
    ys, xs = np.nonzero(grid)
    n = ys.size
    if n == 1:
        return grid.copy()
    points = np.column_stack([xs, ys]).astype(np.float64)
    tree = KdTree(points)
    max_d2 = (
        math.inf
        if math.isinf(cfg.max_link_distance)
        else float(cfg.max_link_distance) ** 2
    )
    # a point whose k nearest are all 8-adjacent draws only no-op segments
    # (stroke 1): any non-adjacent point is at distance >= 2 > sqrt(2), so
    # k or more occupied 8-neighbors means nothing new can be drawn
    if cfg.stroke_width == 1:
        counts = _neighbor_counts(grid)
        active = np.nonzero(counts[ys, xs] < cfg.k_neighbors)[0]
    else:
        active = np.arange(n)
    out = grid.copy()
    h, w = grid.shape
    if cfg.stroke_width == 1:
        offsets = [(0, 0)]
    else:
        r0 = cfg.stroke_width // 2
        lo, hi = -r0, cfg.stroke_width - r0
        offsets = [(dx, dy) for dx in range(lo, hi) for dy in range(lo, hi)]
    drawn = set()
    for i in active:
        xi, yi = int(xs[i]), int(ys[i])
        for j in tree.query((xi, yi), cfg.k_neighbors + 1):
            if j == i:
                continue
            xj, yj = int(xs[j]), int(ys[j])
            d2 = (xj - xi) ** 2 + (yj - yi) ** 2
            if d2 > max_d2:
                continue
            if cfg.stroke_width == 1 and abs(xj - xi) <= 1 and abs(yj - yi) <= 1:
                continue  # 8-adjacent: the segment adds no pixels
            key = (i, j) if i < j else (j, i)
            if key in drawn:
                continue
            drawn.add(key)
            for px, py in _bresenham(xi, yi, xj, yj):
                for dx, dy in offsets:
                    qx, qy = px + dx, py + dy
                    if 0 <= qx < w and 0 <= qy < h:
                        out[qy, qx] = 1
    return out


def merge_masks(meniscus: BinaryMask, pupil: BinaryMask) -> BinaryMask:
    """Pixelwise union, tagged combined."""
    if meniscus.data.shape != pupil.data.shape:
        raise ValueError(
            f"mask dimensions differ: {meniscus.data.shape} vs {pupil.data.shape}"
        )
    return BinaryMask(meniscus.data | pupil.data, class_tag="combined")
