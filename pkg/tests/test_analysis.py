import numpy as np
import pytest

from ctwix.analysis import (Method, axis_vs_diagonal, grid_offsets, heatmap_csv, pgm_bytes, ring_mean,
                            self_affinity_map, threshold_heatmap, write_map)
from ctwix.geometry import Box
from ctwix.model import TwixHyper, TwixWeights
from ctwix.pipeline import PipelineParams
from ctwix.synth import ScenarioConfig, generate

BOX = Box(100, 100, 40, 80)


def grid(method, res=41, **kw):
    xs = grid_offsets(BOX, resolution=res)
    return xs, self_affinity_map(BOX, method, xs, xs, **kw)


def test_offsets():
    xs = grid_offsets(BOX, resolution=5)
    assert xs.tolist() == [-240, -120, 0, 120, 240]
    with pytest.raises(ValueError):
        grid_offsets(BOX, resolution=4)


def test_iou_map_support_is_exact():
    xs, g = grid("iou")
    dx, dy = np.meshgrid(xs, xs)
    inside = (np.abs(dx) < BOX.w) & (np.abs(dy) < BOX.h)
    assert np.all(g[~inside] == 0.0)
    assert np.all(g[inside] > 0.0)
    assert g[20, 20] == 1.0


@pytest.mark.parametrize("method", ["giou", "diou"])
def test_generalized_ious_negative_outside(method):
    xs, g = grid(method)
    dx, dy = np.meshgrid(xs, xs)
    apart = (np.abs(dx) > BOX.w) | (np.abs(dy) > BOX.h)
    assert np.all(g[apart] < 0.0)
    assert g[20, 20] == 1.0


@pytest.mark.parametrize("method", ["l1", "l2"])
def test_distance_maps_symmetric(method):
    xs, g = grid(method)
    assert np.array_equal(g, g[::-1, :])
    assert np.array_equal(g, g[:, ::-1])
    assert np.array_equal(g, g.T)
    assert g[20, 20] == 1.0 and g.min() == 0.0


def test_biou_wider_than_iou():
    _, a = grid("iou")
    _, b = grid("biou", buffer=0.5)
    assert (b > 0).sum() > (a > 0).sum()


def test_twix_map_uses_weights():
    w = TwixWeights.init(TwixHyper(dim=16, heads=4, ffn_dim=16), 0)
    xs = grid_offsets(BOX, resolution=7)
    g = self_affinity_map(BOX, Method.TWIX, xs, xs, weights=w, history=4)
    assert g.shape == (7, 7) and np.all(np.abs(g) < 1)
    with pytest.raises(ValueError):
        self_affinity_map(BOX, "twix", xs, xs)


def test_axis_vs_diagonal_and_ring():
    xs = np.array([-2.0, -1, 0, 1, 2])
    g = np.zeros((5, 5))
    g[2, :] = 1.0
    g[:, 2] = 1.0
    assert axis_vs_diagonal(g, xs, xs, 1.0) == (1.0, 0.0)
    assert ring_mean(g, xs, xs, 0.5) == 1.0


def test_outputs(tmp_path):
    xs, g = grid("iou", res=5)
    c, p = write_map(tmp_path / "maps" / "iou", g, xs, xs)
    lines = c.read_text().splitlines()
    assert len(lines) == 6 and lines[0].startswith("dy\\dx,")
    blob = p.read_bytes()
    assert blob.startswith(b"P5\n5 5\n255\n") and len(blob) == len(b"P5\n5 5\n255\n") + 25
    assert pgm_bytes(np.ones((2, 3))).endswith(bytes([128] * 6))


def test_threshold_heatmap_shape():
    w = TwixWeights.init(TwixHyper(dim=16, heads=4, ffn_dim=16), 0)
    seq = generate(ScenarioConfig(num_frames=20, num_objects=3), 0)
    h = threshold_heatmap([seq], w, w, [0.0, 1.0], [-0.5, 1.0], PipelineParams(), oracle=True)
    assert h.shape == (2, 2) and np.all((h >= 0) & (h <= 1))
    # both stages off: every frame opens new tracks, so association is poor
    assert h[1, 1] <= h.max()
    assert heatmap_csv(h, [0.0, 1.0], [-0.5, 1.0]).splitlines()[0] == "theta_1\\theta_2,-0.5,1"
