import numpy as np
import pytest

from demcurate.ingest import NODATA, load_sample, save_sample
from demcurate.synth import SynthConfig, synth_clean_sample, synth_ortho, synth_sample, synth_terrain


def test_terrain_deterministic_and_in_range():
    cfg = SynthConfig(width=128, height=96, seed=3)
    a, b = synth_terrain(cfg), synth_terrain(cfg)
    assert a.tobytes() == b.tobytes() and a.dtype == np.float32
    assert a.min() >= cfg.elevation_range[0] and a.max() <= cfg.elevation_range[1]
    assert synth_terrain(SynthConfig(width=128, height=96, seed=4)).tobytes() != a.tobytes()


def test_low_roughness_is_smooth():
    cfg = SynthConfig(width=128, height=128, roughness=0.001, seed=1)
    span = cfg.elevation_range[1] - cfg.elevation_range[0]
    assert synth_terrain(cfg).std() < 0.01 * span


def test_hillshade():
    assert np.unique(synth_ortho(np.zeros((20, 20), np.float32))).size == 1
    x = np.arange(40, dtype=np.float32)
    # default sun in the north-west: terrain rising to the east faces west, towards it
    east_up = np.tile(x * 5, (40, 1))
    west_up = east_up[:, ::-1].copy()
    assert synth_ortho(east_up).mean() > synth_ortho(west_up).mean()
    assert synth_ortho(east_up).dtype == np.uint8


def test_islands_inside_blobs_with_offset():
    cfg = SynthConfig(width=300, height=300, seed=2, nodata_blob_count=3, island_count=2)
    clean = synth_clean_sample(cfg)
    sample, truth = synth_sample(cfg)
    assert truth.island_truth.any()
    assert not (truth.island_truth & ~truth.nodata_truth).any()
    delta = sample.dem[truth.island_truth] - clean.dem[truth.island_truth]
    assert np.mean(np.abs(delta)) == pytest.approx(cfg.island_magnitude, rel=1e-3)
    carved = truth.nodata_truth & ~truth.island_truth
    assert np.all(sample.dem[carved] == np.float32(NODATA))
    untouched = ~truth.nodata_truth
    assert np.array_equal(sample.dem[untouched], clean.dem[untouched])


def test_no_islands():
    _, truth = synth_sample(SynthConfig(width=200, height=200, island_count=0))
    assert not truth.island_truth.any() and truth.nodata_truth.any()


def test_framed_sample_has_black_border():
    s, truth = synth_sample(SynthConfig(width=200, height=260, frame_angle=12.0, seed=5))
    assert s.ortho[0, 0] == 0 and s.ortho.shape[0] > 260
    assert truth.nodata_truth.shape == s.dem.shape


def test_coarse_dem_factor():
    s, truth = synth_sample(SynthConfig(width=240, height=300, dem_factor=3))
    assert s.dem.shape == (100, 80) and truth.nodata_truth.shape == (100, 80)


def test_sample_round_trips_through_disk(tmp_path):
    s, _ = synth_sample(SynthConfig(width=100, height=120, seed=8), "abc")
    back = load_sample(save_sample(s, tmp_path / "abc"))
    assert back.id == "abc" and back.dem.tobytes() == s.dem.tobytes()
    assert back.left_footprint == s.left_footprint


def test_config_invariants():
    with pytest.raises(ValueError):
        SynthConfig(roughness=1.0)
    with pytest.raises(ValueError):
        SynthConfig(elevation_range=(5.0, 1.0))
