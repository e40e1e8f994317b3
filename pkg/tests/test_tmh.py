import math

import numpy as np
import pytest

from tmhkit.errors import EmptyMaskError, MissingMeniscusError, SectionError
from tmhkit.raster import BinaryMask, GeometryConfig
from tmhkit.tmh import (
    PupilCenter,
    SectionSpec,
    TmrsSet,
    extract_tmrs,
    locate_pupil,
    measure,
    tmh_method1,
    tmh_method2,
    tmh_method3,
)

from conftest import band_mask

CFG = GeometryConfig()


def disk_mask(h, w, cx, cy, r, tag="pupil"):
    yy, xx = np.mgrid[0:h, 0:w]
    return BinaryMask(((xx - cx) ** 2 + (yy - cy) ** 2 <= r * r).astype(np.uint8), class_tag=tag)


def section(center_x, length_px, length_mm=0.5):
    return SectionSpec(length_mm, length_px, center_x)


# ------------------------------------------------------------ locate_pupil


def test_pupil_symmetric_disk():
    m = disk_mask(1024, 1024, 300, 400, 60)
    pc = locate_pupil(m)
    assert (pc.x, pc.y) == (300, 400)
    assert pc.box_top == 340
    assert not pc.clamped


def test_pupil_single_pixel_clamps():
    m = BinaryMask(np.zeros((200, 200), dtype=np.uint8))
    m.data[10, 10] = 1
    pc = locate_pupil(m)
    assert (pc.x, pc.y) == (10, 10)
    assert pc.clamped


def test_pupil_ellipse_matches_enumeration_oracle():
    h, w, cx, cy, a, b = 400, 400, 200, 150, 50, 30
    yy, xx = np.mgrid[0:h, 0:w]
    grid = (((xx - cx) / a) ** 2 + ((yy - cy) / b) ** 2 <= 1.0).astype(np.uint8)
    pc = locate_pupil(BinaryMask(grid))
    # oracle: centroid of the enumerated pixels
    ys, xs = np.nonzero(grid)
    assert abs(pc.x - xs.mean()) <= 1.0
    assert abs(pc.y - ys.mean()) <= 1.0
    assert abs(pc.x - cx) <= 1.0 and abs(pc.y - cy) <= 1.0


def test_pupil_box_limits_tall_structures():
    # 200-row column: only the top 160 rows vote for the centroid
    m = BinaryMask(np.zeros((400, 50), dtype=np.uint8))
    m.data[100:300, 20] = 1
    pc = locate_pupil(m)
    assert pc.y == 100 + 80  # centroid of rows 100..259 rounds half-up
    assert pc.x == 20
    assert pc.box_top == 100


def test_pupil_topmost_tie_uses_mean_x():
    m = BinaryMask(np.zeros((200, 200), dtype=np.uint8))
    m.data[0, 5] = 1
    m.data[0, 15] = 1
    pc = locate_pupil(m)
    assert pc.x == 10 and pc.y == 0


def test_pupil_empty_and_bad_box():
    with pytest.raises(EmptyMaskError):
        locate_pupil(BinaryMask(np.zeros((5, 5), dtype=np.uint8)))
    m = BinaryMask(np.ones((5, 5), dtype=np.uint8))
    with pytest.raises(ValueError):
        locate_pupil(m, box_size=0)


# ------------------------------------------------------------ extract_tmrs


def combined_disk_band(h=1024, w=1024, band_rows=(700, 710)):
    m = disk_mask(h, w, 500, 400, 60, tag="combined")
    m.data[band_rows[0] : band_rows[1] + 1, :] = 1
    return m


def test_tmrs_disjoint_structures():
    m = combined_disk_band()
    pc = locate_pupil(m)
    tmrs = extract_tmrs(m, pc)
    for ys in tmrs.columns.values():
        assert ys.min() >= 700 and ys.max() <= 710
    assert tmrs.n == 1024


def test_tmrs_pupil_only_raises():
    m = disk_mask(512, 512, 200, 200, 40, tag="combined")
    pc = locate_pupil(m)
    with pytest.raises(MissingMeniscusError):
        extract_tmrs(m, pc)


def test_tmrs_removes_specks_in_pupil_rows():
    m = BinaryMask(np.zeros((400, 400), dtype=np.uint8))
    yy, xx = np.mgrid[0:400, 0:400]
    m.data[(xx - 100) ** 2 + (yy - 120) ** 2 <= 20 * 20] = 1  # pupil rows 100..140
    m.data[120, 300] = 1  # speck sharing the pupil's rows
    m.data[200:211, 50:350] = 1  # band
    pc = locate_pupil(m)
    tmrs = extract_tmrs(m, pc)
    expected = {x: list(range(200, 211)) for x in range(50, 350)}
    assert set(tmrs.columns) == set(expected)
    for x, ys in expected.items():
        assert tmrs.columns[x].tolist() == ys


def test_tmrs_ring_pupil_centroid_on_background():
    m = BinaryMask(np.zeros((300, 300), dtype=np.uint8))
    yy, xx = np.mgrid[0:300, 0:300]
    d2 = (xx - 150) ** 2 + (yy - 80) ** 2
    m.data[(d2 <= 40 * 40) & (d2 >= 30 * 30)] = 1  # ring: centroid lands in the hole
    m.data[250:256, :] = 1
    pc = locate_pupil(m)
    tmrs = extract_tmrs(m, pc)
    assert min(int(v.min()) for v in tmrs.columns.values()) == 250


# ---------------------------------------------------------------- method 1


def test_m1_solid_band_11_rows():
    m = band_mask(900, 800, 100, 110)
    tmrs = TmrsSet.from_mask(m)
    r = tmh_method1(tmrs, section(400, 43), CFG)
    assert r.tmh_px == 11.0
    assert r.method == 1


def test_m1_thickness_10_in_mm():
    m = band_mask(300, 800, 50, 59)
    r = tmh_method1(TmrsSet.from_mask(m), section(400, 43), CFG)
    assert r.tmh_px == 10.0
    assert r.tmh_mm == pytest.approx(0.11575, rel=1e-12)


def test_m1_wedge_matches_column_oracle():
    w = 200
    grid = np.zeros((100, w), dtype=np.uint8)
    for x in range(w):
        h = 8 + round(4 * x / (w - 1))  # 8 -> 12 linear taper
        grid[30 : 30 + h, x] = 1
    tmrs = TmrsSet.from_mask(BinaryMask(grid))
    sec = section(100, 43)
    got = tmh_method1(tmrs, sec, CFG).tmh_px
    # oracle: direct per-column scan over the same window
    cols = range(100 - 21, 100 + 22)
    want = np.mean(
        [np.nonzero(grid[:, x])[0].max() - np.nonzero(grid[:, x])[0].min() + 1 for x in cols]
    )
    assert got == pytest.approx(float(want), abs=1e-12)


def test_m1_skips_absent_columns():
    m = band_mask(50, 100, 20, 24, cols=[x for x in range(100) if x % 2 == 0])
    r = tmh_method1(TmrsSet.from_mask(m), section(50, 21), CFG)
    assert r.tmh_px == 5.0
    assert r.diagnostics["columns_used"] == 11  # even columns only


def test_m1_empty_section_raises():
    m = band_mask(50, 100, 20, 24, cols=range(0, 10))
    with pytest.raises(SectionError):
        tmh_method1(TmrsSet.from_mask(m), section(80, 11), CFG)


def test_m1_column_order_invariance():
    cols = {x: [30, 25, 28] for x in range(40, 60)}  # unsorted input ys
    r = tmh_method1(TmrsSet(cols), section(50, 11), CFG)
    assert r.tmh_px == 6.0  # 30 - 25 + 1


# ---------------------------------------------------------------- method 2


def test_m2_parallel_horizontal_lines():
    cols = {x: [200, 210] for x in range(300, 400)}
    r = tmh_method2(TmrsSet(cols), section(350, 43), CFG)
    assert r.tmh_px == pytest.approx(10.0, abs=1e-9)


def test_m2_parallel_45_degree_lines():
    cols = {x: [x + 20, x + 30] for x in range(300, 400)}
    r = tmh_method2(TmrsSet(cols), section(350, 43), CFG)
    assert r.tmh_px == pytest.approx(10.0 / math.sqrt(2.0), abs=1e-6)


def _arc_y(x, cx, cy, r):
    return cy + math.sqrt(r * r - (x - cx) ** 2)


def test_m2_concentric_arcs_radial_gap():
    cx, cy, r1, r2 = 200, -200.0, 250.0, 260.0
    cols = {
        x: [round(_arc_y(x, cx, cy, r1)), round(_arc_y(x, cx, cy, r2))]
        for x in range(150, 251)
    }
    got = tmh_method2(TmrsSet(cols), section(200, 43), CFG).tmh_px

    # oracle: dense nearest-slope search on the analytic arcs
    def slope(x, r):
        return (x - cx) / math.sqrt(r * r - (x - cx) ** 2)

    dists = []
    for x in range(200 - 21, 200 + 22):
        s1 = slope(x, r1)
        grid = np.linspace(x - 5, x + 5, 4001)
        gaps = np.abs([slope(g, r2) - s1 for g in grid])
        j = int(np.argmin(gaps))
        dists.append(
            math.hypot(grid[j] - x, _arc_y(grid[j], cx, cy, r2) - _arc_y(x, cx, cy, r1))
        )
    oracle = float(np.mean(dists))
    assert oracle == pytest.approx(10.0, abs=1e-3)  # concentric arcs: radial gap
    assert got == pytest.approx(oracle, abs=0.5)


def test_m2_underdetermined_fit():
    cols = {100: [5, 9], 101: [5, 9]}
    with pytest.raises(SectionError):
        tmh_method2(TmrsSet(cols), section(100, 11), CFG, fit_degree=2)


def test_m2_linear_fit_degree_flag():
    cols = {x: [x, x + 7] for x in range(90, 140)}
    r = tmh_method2(TmrsSet(cols), section(115, 21), CFG, fit_degree=1)
    assert r.tmh_px == pytest.approx(7.0 / math.sqrt(2.0), abs=1e-6)
    assert r.diagnostics["fit_degree"] == 1
    with pytest.raises(ValueError):
        tmh_method2(TmrsSet(cols), section(115, 21), CFG, fit_degree=0)


# ---------------------------------------------------------------- method 3


def test_m3_flat_band_exact():
    m = band_mask(200, 300, 60, 84)  # 25 rows
    r = tmh_method3(TmrsSet.from_mask(m), section(150, 43), CFG)
    assert r.tmh_px == pytest.approx(25.0, abs=1e-12)
    assert r.diagnostics["l_up"] == pytest.approx(43.0)
    assert r.diagnostics["area"] == 43 * 25


def test_m3_slanted_band_against_enumeration_oracle():
    w, h = 300, 12
    grid = np.zeros((400, w), dtype=np.uint8)
    for x in range(w):
        grid[x + 20 : x + 20 + h, x] = 1
    tmrs = TmrsSet.from_mask(BinaryMask(grid))
    sec = section(150, 43)
    got = tmh_method3(tmrs, sec, CFG).tmh_px
    # oracle: direct S and L computation over the window
    cols = list(range(150 - 21, 150 + 22))
    S = sum(int(grid[:, x].sum()) for x in cols)
    ups = [int(np.nonzero(grid[:, x])[0].min()) for x in cols]
    lows = [int(np.nonzero(grid[:, x])[0].max()) for x in cols]
    L_up = 1 + sum(math.sqrt(1 + (ups[i + 1] - ups[i]) ** 2) for i in range(len(ups) - 1))
    L_low = 1 + sum(math.sqrt(1 + (lows[i + 1] - lows[i]) ** 2) for i in range(len(lows) - 1))
    want = 2 * S / (L_up + L_low)
    assert got == pytest.approx(want, rel=1e-12)
    assert got == pytest.approx(h / math.sqrt(2.0), abs=0.2)


def test_m3_dashed_flat_band_stays_exact():
    m = band_mask(100, 200, 40, 49, cols=[x for x in range(200) if x % 13 < 9])
    r = tmh_method3(TmrsSet.from_mask(m), section(100, 43), CFG)
    assert r.tmh_px == pytest.approx(10.0, abs=1e-12)


def test_m3_single_column():
    cols = {70: list(range(10, 25))}
    r = tmh_method3(TmrsSet(cols), section(70, 11), CFG)
    assert r.tmh_px == pytest.approx(15.0)


def test_m3_empty_section():
    cols = {10: [4]}
    with pytest.raises(SectionError):
        tmh_method3(TmrsSet(cols), section(200, 43), CFG)


# ----------------------------------------------------------------- measure


def phantom_mask(w=900, pupil_x=450, band=(300, 309), h=600):
    m = disk_mask(h, w, pupil_x, 100, 40, tag="combined")
    m.data[band[0] : band[1] + 1, :] = 1
    return m


def test_measure_composes_to_band_thickness():
    m = phantom_mask()
    r = measure(m, method=1)
    assert r.tmh_px == 10.0
    assert r.tmh_mm == pytest.approx(0.11575)
    assert r.diagnostics["pupil_x"] == 450
    assert r.section.length_px == 43


def test_measure_all_methods_within_one_px():
    # flat band: Method 1 = h, Method 2 = h-1 (boundary-to-boundary),
    # Method 3 = h; the largest exact gap is 1 px, so the bound gets an
    # epsilon for fit-evaluation float noise only
    m = phantom_mask()
    vals = [measure(m, method=k).tmh_px for k in (1, 2, 3)]
    for a in vals:
        for b in vals:
            assert abs(a - b) <= 1.0 + 1e-9


def test_measure_missing_meniscus():
    m = disk_mask(600, 900, 450, 100, 40, tag="combined")
    with pytest.raises(MissingMeniscusError):
        measure(m, method=1)


def test_measure_horizontal_translation_invariance():
    base = phantom_mask(w=900, pupil_x=300)
    moved = BinaryMask(np.roll(base.data, 57, axis=1), class_tag="combined")
    for k in (1, 2, 3):
        a = measure(base, method=k).tmh_px
        b = measure(moved, method=k).tmh_px
        assert abs(a - b) <= 1e-9, k


def test_measure_d_robustness_on_flat_band():
    m = phantom_mask(w=900, pupil_x=450)
    vals = [measure(m, method=1, section_mm=d).tmh_px for d in (0.5, 1.0, 2.0, 4.0)]
    assert max(vals) - min(vals) <= 1.0


def test_measure_rejects_wide_section_and_bad_method():
    m = phantom_mask(w=400, pupil_x=200)
    with pytest.raises(ValueError):
        measure(m, method=1, section_mm=10.0)
    with pytest.raises(ValueError):
        measure(m, method=4)


def test_measure_mm_px_ratio_invariant():
    m = phantom_mask()
    for k in (1, 2, 3):
        r = measure(m, method=k)
        assert r.tmh_mm / r.tmh_px == pytest.approx(CFG.mm_per_pixel, rel=1e-12)


def test_section_from_mm_and_warning():
    sec = SectionSpec.from_mm(0.5, 300, CFG)
    assert sec.length_px == 43
    assert len(list(sec.column_range())) == 43
    with pytest.warns(UserWarning):
        SectionSpec.from_mm(0.3, 300, CFG)
    with pytest.raises(ValueError):
        SectionSpec.from_mm(0.0, 300, CFG)


def test_result_serialization_roundtrip():
    m = phantom_mask()
    d = measure(m, method=2).to_dict()
    assert d["method"] == 2
    assert d["section"]["length_mm"] == 0.5
    assert "upper_coeffs" in d["diagnostics"]
    assert d["version"]
