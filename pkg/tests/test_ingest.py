import json

import numpy as np
import pytest

from demcurate.grid import GeoFootprint, RasterSample, grid_write
from demcurate.ingest import (NODATA, SampleLoadError, SampleSelectionConfig, SampleSelector,
                              extract_nodata_mask, load_sample, save_sample, select_sample)

FP = GeoFootprint(10.0, 10.5, -3.0, -2.5)


def make_sample(height=10, width=8, dem=None):
    if dem is None:
        dem = np.zeros((height, width), np.float32)
    shape = dem.shape
    return RasterSample("s1", np.full((height, width), 9, np.uint8), dem,
                        np.zeros(shape, bool), np.zeros(shape, bool), FP, FP)


def test_save_then_load_round_trip(tmp_path):
    s = make_sample(dem=np.arange(80, dtype=np.float32).reshape(10, 8))
    save_sample(s, tmp_path / "s1")
    back = load_sample(tmp_path / "s1")
    assert back.id == "s1"
    assert np.array_equal(back.dem, s.dem) and np.array_equal(back.ortho, s.ortho)
    assert not back.nodata_mask.any() and not back.outlier_mask.any()
    assert back.left_footprint == FP


@pytest.mark.parametrize("missing", ["ortho.mgrd", "dem.mgrd", "meta.json"])
def test_missing_file_named(tmp_path, missing):
    save_sample(make_sample(), tmp_path / "s")
    (tmp_path / "s" / missing).unlink()
    with pytest.raises(SampleLoadError, match=missing.replace(".", r"\.")):
        load_sample(tmp_path / "s")


def test_invalid_footprint_rejected(tmp_path):
    save_sample(make_sample(), tmp_path / "s")
    meta_path = tmp_path / "s" / "meta.json"
    meta = json.loads(meta_path.read_text())
    meta["left"]["lat_min"], meta["left"]["lat_max"] = 5.0, 1.0
    meta_path.write_text(json.dumps(meta))
    with pytest.raises(SampleLoadError, match="meta.json"):
        load_sample(tmp_path / "s")


def test_malformed_meta_rejected(tmp_path):
    save_sample(make_sample(), tmp_path / "s")
    (tmp_path / "s" / "meta.json").write_text("{not json")
    with pytest.raises(SampleLoadError, match="meta.json"):
        load_sample(tmp_path / "s")


def test_wrong_layer_kind_rejected(tmp_path):
    save_sample(make_sample(), tmp_path / "s")
    grid_write(np.zeros((10, 8), np.uint8), tmp_path / "s" / "dem.mgrd")
    with pytest.raises(SampleLoadError, match="dem.mgrd"):
        load_sample(tmp_path / "s")


def test_aspect_rule_is_strict():
    assert not select_sample(make_sample(height=1000, width=1200))
    assert select_sample(make_sample(height=1000, width=1200)).reason == "aspect"
    assert select_sample(make_sample(height=1000, width=500))
    assert select_sample(make_sample(height=100, width=100))  # W/H == 1 accepted


def test_elevation_range_rule():
    dem = np.zeros((10, 8), np.float32)
    dem[3, 3] = 10001.0
    assert select_sample(make_sample(dem=dem)).reason == "elevation-range"
    dem[3, 3] = 10000.0
    dem[4, 4] = -5000.0
    dem[5, 5] = NODATA  # sentinel is ignored
    assert select_sample(make_sample(dem=dem))
    dem[6, 6] = -5000.5
    assert not select_sample(make_sample(dem=dem))
    dem[6, 6] = np.nan
    assert not select_sample(make_sample(dem=dem))


def test_config_invariants():
    with pytest.raises(ValueError):
        SampleSelectionConfig(max_aspect_ratio=0)
    with pytest.raises(ValueError):
        SampleSelectionConfig(min_elevation=5, max_abs_elevation=5)


def test_nodata_mask_exact_equality():
    dem = np.zeros((3, 3), np.float32)
    dem[1, 1] = NODATA
    dem[0, 0] = NODATA + 0.5
    mask = extract_nodata_mask(dem)
    assert mask.tolist() == [[False] * 3, [False, True, False], [False] * 3]
    assert not extract_nodata_mask(np.zeros((2, 2), np.float32)).any()
    assert extract_nodata_mask(np.full((2, 2), NODATA, np.float32)).all()


def test_nodata_count_matches_naive_scan():
    rng = np.random.default_rng(0)
    dem = rng.normal(size=(40, 30)).astype(np.float32)
    dem[rng.random(dem.shape) < 0.2] = NODATA
    naive = sum(1 for v in dem.ravel() if v == np.float32(-32767.0))
    assert extract_nodata_mask(dem).sum() == naive


def test_nodata_mask_requires_elevation():
    with pytest.raises(TypeError):
        extract_nodata_mask(np.zeros((2, 2), np.uint8))


def test_selector_estimator():
    sel = SampleSelector(max_aspect_ratio=1.0)
    out = sel.fit().predict([make_sample(10, 8), make_sample(8, 10)])
    assert out.tolist() == ["accept", "aspect"]
    assert sel.get_params()["max_aspect_ratio"] == 1.0
