import numpy as np

from lidarsot.config import default_config, toy_config
from lidarsot.encoder import Encoder, GridGeometry, voxelize
from lidarsot.numerics import Tensor
from lidarsot.pointops import FeatureSet, PointCloud


def test_default_grid_dimensions():
    g = GridGeometry.from_config(default_config().voxel)
    assert (g.W, g.L, g.H) == (38, 25, 17)


def test_voxelize_single_point_at_minimum():
    g = GridGeometry.from_config(default_config().voxel)
    fs = FeatureSet(np.array([g.mins]), Tensor(np.array([[0.25, -1.0]])))
    grid = voxelize(fs, g)
    assert grid.data.shape == (2, 17, 25, 38)
    np.testing.assert_array_equal(grid.data.data[:, 0, 0, 0], [0.25, -1.0])
    assert grid.occupancy.sum() == 1


def test_voxelize_averages_and_drops_outside():
    g = GridGeometry.from_config(default_config().voxel)
    pos = np.array([[0.01, 0.01, 0.01], [0.02, 0.02, 0.02], [100.0, 0, 0], [5.6, 0, 0]])
    fs = FeatureSet(pos, Tensor(np.array([[1.0], [3.0], [7.0], [9.0]])))
    grid = voxelize(fs, g)
    ix, iy, iz = 18, 12, 8
    assert grid.data.data[0, iz, iy, ix] == 2.0
    assert grid.counts[iz, iy, ix] == 2
    assert grid.dropped == 2  # far point and the exclusive upper x bound


def test_voxelize_gradient_splits_mean():
    g = GridGeometry.from_config(toy_config().voxel)
    feats = Tensor(np.array([[1.0], [2.0]]), requires_grad=True)
    grid = voxelize(FeatureSet(np.zeros((2, 3)), feats), g)
    grid.data.sum().backward()
    np.testing.assert_allclose(feats.grad, [[0.5], [0.5]])


def _clouds(cfg, seed=0):
    rng = np.random.default_rng(seed)
    n = cfg.data.search_points
    t = PointCloud(rng.uniform(-1, 1, size=(n, 3)), rng.uniform(size=(n, 1)))
    s = PointCloud(rng.uniform(-1, 1, size=(n, 3)), rng.uniform(size=(n, 1)))
    return t, s


def test_stage_cardinalities_and_pyramid_size():
    cfg = toy_config()
    enc = Encoder(cfg.encoder, 1, np.random.default_rng(0))
    out = enc(*_clouds(cfg))
    assert [len(s) for s in out.search_stages] == list(cfg.encoder.stage_points)
    assert len(out.pyramid) == sum(cfg.encoder.stage_points)
    assert out.pyramid.features.shape[1] == cfg.encoder.pyramid_channels


def test_pyramid_depth_one():
    cfg = toy_config()
    cfg.encoder.pyramid_stages = (3,)
    enc = Encoder(cfg.encoder, 1, np.random.default_rng(0))
    out = enc(*_clouds(cfg))
    assert out.pyramid.features.shape == (cfg.encoder.stage_points[2], cfg.encoder.pyramid_channels)


def test_stage_masks_control_modules():
    cfg = toy_config()
    cfg.encoder.sa_stages = (3,)
    cfg.encoder.ca_stages = (3,)
    enc = Encoder(cfg.encoder, 1, np.random.default_rng(0))
    assert [s.sa is None for s in enc.stages] == [True, True, False]
    assert [s.ca is None for s in enc.stages] == [True, True, False]


def test_identical_streams_stay_identical():
    cfg = toy_config()
    enc = Encoder(cfg.encoder, 1, np.random.default_rng(0)).eval()
    t, _ = _clouds(cfg)
    out = enc(t, t)
    for a, b in zip(out.template_stages, out.search_stages):
        assert np.array_equal(a.features.data, b.features.data)
