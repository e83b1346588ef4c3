"""Window placement, scan scoring, red-border marking, and detection sidecars."""

import numpy as np
import numpy.testing as npt
import pytest

from lesionscan import dataset
from lesionscan.errors import ConfigError
from lesionscan.scanner import (
    Detection,
    Roi,
    ScanConfig,
    ScanResult,
    export_detections,
    load_detections,
    mark,
    scan,
    windows,
)


# Oracle: enumerate every valid window origin and keep those on the stride
# grid or flush against the far edge. windows() must produce exactly these,
# in row-major order.
def window_oracle(roi: Roi, stride: int) -> list[tuple[int, int]]:
    def axis(start, extent):
        last = start + extent - 50
        keep = []
        for v in range(start, last + 1):
            if (v - start) % stride == 0 or v == last:
                keep.append(v)
        return keep

    return [(x, y) for y in axis(roi.y, roi.height) for x in axis(roi.x, roi.width)]


def _flat_image(h, w, value=180):
    return np.full((h, w, 3), value, dtype=np.uint8)


def _const_scorer(p):
    def scorer(patches):
        return np.full(patches.shape[0], p)

    return scorer


# --- window placement ---


def test_windows_200_grid_stride_25():
    # (200-50)/25+1 = 7 per axis -> 49 windows
    origins = windows(Roi(0, 0, 200, 200), 25)
    assert len(origins) == 49
    assert origins[0] == (0, 0)
    assert origins[-1] == (150, 150)


def test_windows_row_major_order():
    origins = windows(Roi(10, 20, 120, 80), 30)
    ys = [y for _, y in origins]
    assert ys == sorted(ys)
    by_row = {}
    for x, y in origins:
        by_row.setdefault(y, []).append(x)
    for xs in by_row.values():
        assert xs == sorted(xs)


def test_windows_flush_edges_added():
    # width 110: grid x-origins 0, 40 then flush 60; height exactly 50: one row
    origins = windows(Roi(0, 0, 110, 50), 40)
    assert origins == [(0, 0), (40, 0), (60, 0)]


def test_windows_single_window_roi():
    assert windows(Roi(5, 9, 50, 50), 25) == [(5, 9)]


def test_windows_match_enumeration_oracle():
    rng = np.random.default_rng(41)
    for _ in range(100):
        w = int(rng.integers(50, 260))
        h = int(rng.integers(50, 260))
        x = int(rng.integers(0, 40))
        y = int(rng.integers(0, 40))
        stride = int(rng.integers(1, 51))
        roi = Roi(x, y, w, h)
        assert windows(roi, stride) == window_oracle(roi, stride)


def test_windows_cover_every_roi_pixel():
    rng = np.random.default_rng(43)
    for _ in range(20):
        w = int(rng.integers(50, 160))
        h = int(rng.integers(50, 160))
        stride = int(rng.integers(1, 51))
        covered = np.zeros((h, w), dtype=bool)
        for x, y in windows(Roi(0, 0, w, h), stride):
            covered[y : y + 50, x : x + 50] = True
        assert covered.all()


def test_windows_invalid_stride():
    with pytest.raises(ConfigError):
        windows(Roi(0, 0, 100, 100), 0)
    with pytest.raises(ConfigError):
        windows(Roi(0, 0, 100, 100), 51)


def test_roi_validation():
    with pytest.raises(ConfigError, match="non-negative"):
        Roi(-1, 0, 100, 100)
    with pytest.raises(ConfigError, match="at least"):
        Roi(0, 0, 49, 100)
    with pytest.raises(ConfigError, match="exceeds"):
        Roi(10, 10, 100, 100).check_inside(105, 200)


def test_scan_config_validation():
    with pytest.raises(ConfigError):
        ScanConfig(stride=0)
    with pytest.raises(ConfigError):
        ScanConfig(threshold=0.0)
    with pytest.raises(ConfigError):
        ScanConfig(merge="intersect")
    ScanConfig()


# --- scan ---


def test_scan_saturating_scorer_detects_everything():
    image = _flat_image(200, 200)
    result, marked = scan(image, Roi(0, 0, 200, 200), _const_scorer(0.9), ScanConfig())
    assert result.windows_scanned == 49
    assert len(result.detections) == 49
    assert [(d.x, d.y) for d in result.detections] == windows(Roi(0, 0, 200, 200), 25)
    assert all(d.score == 0.9 for d in result.detections)


def test_scan_rejecting_scorer_detects_nothing_and_copies_image():
    image = _flat_image(120, 150)
    result, marked = scan(image, Roi(0, 0, 150, 120), _const_scorer(0.1), ScanConfig())
    assert result.detections == ()
    npt.assert_array_equal(marked, image)
    assert marked is not image  # a copy, not the same buffer


def test_scan_threshold_is_inclusive_and_sweepable():
    image = _flat_image(100, 100)
    roi = Roi(0, 0, 100, 100)

    def graded(patches):
        return np.linspace(0.0, 1.0, patches.shape[0])

    n_windows = len(windows(roi, 25))
    seen = []
    for t in (0.2, 0.5, 0.8):
        result, _ = scan(image, roi, graded, ScanConfig(threshold=t))
        seen.append(len(result.detections))
        expected = sum(1 for s in np.linspace(0.0, 1.0, n_windows) if s >= t)
        assert len(result.detections) == expected
    assert seen == sorted(seen, reverse=True)  # higher threshold, fewer hits


def test_scan_windows_receive_normalized_pixels():
    image = _flat_image(100, 100, value=102)
    captured = []

    def probe(patches):
        captured.append(patches.copy())
        return np.zeros(patches.shape[0])

    scan(image, Roi(0, 0, 100, 100), probe, ScanConfig())
    npt.assert_allclose(captured[0], 102 / 255.0)


def test_scan_roi_offset_crops_the_right_pixels():
    rng = np.random.default_rng(47)
    image = rng.integers(0, 256, (140, 160, 3), dtype=np.uint8)
    captured = []

    def probe(patches):
        captured.append(patches.copy())
        return np.zeros(patches.shape[0])

    roi = Roi(30, 40, 50, 50)
    scan(image, roi, probe, ScanConfig())
    npt.assert_allclose(captured[0][0], image[40:90, 30:80].astype(np.float64) / 255.0)


def test_scan_input_validation():
    with pytest.raises(ConfigError, match="uint8"):
        scan(np.zeros((100, 100, 3)), Roi(0, 0, 100, 100), _const_scorer(0.5), ScanConfig())
    with pytest.raises(ConfigError, match=r"\(H, W, 3\)"):
        scan(
            np.zeros((100, 100), dtype=np.uint8),
            Roi(0, 0, 100, 100),
            _const_scorer(0.5),
            ScanConfig(),
        )
    with pytest.raises(ConfigError, match="exceeds"):
        scan(_flat_image(80, 80), Roi(40, 40, 50, 50), _const_scorer(0.5), ScanConfig())


def test_scan_scorer_shape_checked():
    def bad(patches):
        return np.zeros((patches.shape[0], 2))

    with pytest.raises(ConfigError, match="shape"):
        scan(_flat_image(60, 60), Roi(0, 0, 60, 60), bad, ScanConfig())


def test_scan_deterministic():
    image = _flat_image(120, 120)
    r1, m1 = scan(image, Roi(0, 0, 120, 120), _const_scorer(0.7), ScanConfig())
    r2, m2 = scan(image, Roi(0, 0, 120, 120), _const_scorer(0.7), ScanConfig())
    assert r1 == r2
    npt.assert_array_equal(m1, m2)


# --- mark ---


def test_mark_single_detection_changes_384_pixels():
    # inner 2-px border of a 50x50 box: 50*50 - 46*46 = 384 pixels
    image = _flat_image(100, 100)
    marked = mark(image, [Detection(10, 20, 0.9)])
    changed = np.any(marked != image, axis=2)
    assert int(changed.sum()) == 384
    assert (marked[20:22, 10:60] == (255, 0, 0)).all()
    assert (marked[68:70, 10:60] == (255, 0, 0)).all()
    assert (marked[20:70, 10:12] == (255, 0, 0)).all()
    assert (marked[20:70, 58:60] == (255, 0, 0)).all()
    # interior untouched
    npt.assert_array_equal(marked[22:68, 12:58], image[22:68, 12:58])


def test_mark_no_detections_is_identity_copy():
    image = _flat_image(60, 60)
    marked = mark(image, [])
    npt.assert_array_equal(marked, image)
    assert marked is not image


def test_mark_is_idempotent():
    image = _flat_image(100, 100)
    dets = [Detection(0, 0, 0.8), Detection(25, 25, 0.9)]
    once = mark(image, dets)
    twice = mark(once, dets)
    npt.assert_array_equal(once, twice)


def test_mark_union_merges_overlapping_windows():
    # two windows 25 px apart overlap; union box is 75x50
    image = _flat_image(100, 100)
    dets = [Detection(0, 0, 0.9), Detection(25, 0, 0.9)]
    merged = mark(image, dets, merge="union")
    changed = np.any(merged != image, axis=2)
    # inner 2-px border of a 75x50 box: 75*50 - 71*46 = 484
    assert int(changed.sum()) == 484
    assert (merged[0:2, 0:75] == (255, 0, 0)).all()
    assert (merged[0:50, 73:75] == (255, 0, 0)).all()


def test_mark_union_keeps_disjoint_windows_separate():
    image = _flat_image(200, 200)
    dets = [Detection(0, 0, 0.9), Detection(100, 100, 0.9)]
    merged = mark(image, dets, merge="union")
    plain = mark(image, dets, merge="none")
    npt.assert_array_equal(merged, plain)


def test_mark_union_touching_edges_do_not_merge():
    # windows at x=0 and x=50 share only a boundary line, no interior overlap
    image = _flat_image(100, 120)
    dets = [Detection(0, 0, 0.9), Detection(50, 0, 0.9)]
    merged = mark(image, dets, merge="union")
    plain = mark(image, dets, merge="none")
    npt.assert_array_equal(merged, plain)


def test_mark_union_is_transitive():
    # a overlaps b, b overlaps c, a and c do not overlap: all three fuse
    image = _flat_image(200, 200)
    dets = [Detection(0, 0, 0.9), Detection(40, 0, 0.9), Detection(80, 0, 0.9)]
    merged = mark(image, dets, merge="union")
    changed = np.any(merged != image, axis=2)
    # one 130x50 box: 130*50 - 126*46 = 704
    assert int(changed.sum()) == 704


def test_mark_rejects_unknown_merge():
    with pytest.raises(ConfigError):
        mark(_flat_image(60, 60), [], merge="blend")


# --- end to end on a synthetic face ---


def test_scan_finds_planted_blobs_with_a_contrast_scorer():
    face, centers = dataset.synth_face(seed=7, size=(250, 250), lesions=2)
    image = (face * 255.0).astype(np.uint8)

    def green_dip(patches):
        # blobs drop the green channel hard at their core; background never does
        return 1.0 - patches[..., 1].min(axis=(1, 2))

    result, marked = scan(
        image, Roi(0, 0, 250, 250), green_dip, ScanConfig(threshold=0.6, merge="union")
    )
    assert result.windows_scanned == len(windows(Roi(0, 0, 250, 250), 25))
    assert 0 < len(result.detections) < result.windows_scanned
    for cx, cy in centers:
        assert any(
            d.x <= cx < d.x + 50 and d.y <= cy < d.y + 50 for d in result.detections
        )
    assert np.any(marked != image)


# --- sidecar ---


def test_detections_sidecar_roundtrip(tmp_path):
    result = ScanResult(
        detections=(Detection(0, 25, 0.875), Detection(75, 100, 0.625)),
        windows_scanned=49,
    )
    path = tmp_path / "scan.json"
    export_detections(result, path)
    loaded = load_detections(path)
    assert loaded.windows_scanned == 49
    assert loaded.detections == result.detections


def test_detections_sidecar_missing_key(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"windows_scanned": 3}')
    with pytest.raises(ConfigError, match="missing"):
        load_detections(path)
