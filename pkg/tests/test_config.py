import pytest

from ctwix.batching import Stage
from ctwix.config import (PRESETS, ConfigError, load_config, parse_config, scenario_config, tracker_config,
                          train_config)
from ctwix.losses import LossVariant
from ctwix.synth import Regime


def test_parse_comments_and_spacing():
    v = parse_config("# header\nt_P = 0.4   # seconds\n\n theta_1=0.9\n")
    assert v == {"t_P": "0.4", "theta_1": "0.9"}


@pytest.mark.parametrize("text", ["bogus = 1", "t_P = 1\nt_P = 2", "t_P 0.4", "t_P = ", "= 3"])
def test_parse_rejects(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_load_missing(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "none.cfg")


def test_dancetrack_defaults():
    tc = tracker_config({}, fps=20)
    assert (tc.t_G, tc.t_P, tc.t_F) == (1.6, 0.8, 0.05)
    assert (tc.theta_1, tc.theta_2, tc.t_A, tc.theta_T) == (-0.5, -0.2, 1.6, 0.9)
    bc = tc.batch_config()
    assert (bc.past_frames, bc.future_frames, bc.max_gap) == (16, 1, 32)
    assert tc.pipeline_params().max_age == 32


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_load(name):
    tc = tracker_config({"preset": name}, fps=10)
    assert tc.t_F == pytest.approx(0.1)
    assert 0 <= tc.theta_T <= 1


def test_overrides_and_fps_key():
    tc = tracker_config({"preset": "mot17", "theta_2": "-0.7", "fps": "30"})
    assert tc.theta_1 == 0.9 and tc.theta_2 == -0.7 and tc.fps == 30 and tc.theta_T == pytest.approx(0.7)
    with pytest.raises(ConfigError):
        tracker_config({})
    with pytest.raises(ConfigError):
        tracker_config({"preset": "nope"}, 20)
    with pytest.raises(ConfigError):
        tracker_config({"theta_1": "2"}, 20)
    with pytest.raises(ConfigError):
        tracker_config({"t_P": "abc"}, 20)


def test_train_config_stages():
    first = train_config({"epochs": "3", "loss": "focal", "tau": "0.2"}, "first", 20)
    assert first.stage is Stage.FIRST and first.batch.t_G == 0.0 and first.lr == 1e-4 and first.layers == 1
    assert first.epochs == 3 and first.loss.variant is LossVariant.FOCAL and first.loss.tau == 0.2
    second = train_config({"lr": "5e-4", "oracle": "yes", "max_batches": "7"}, Stage.SECOND, 20)
    assert second.batch.t_G == 1.6 and second.layers == 4 and second.lr == 5e-4
    assert second.oracle and second.max_batches == 7
    with pytest.raises(ConfigError):
        train_config({"loss": "hinge"}, "first", 20)
    with pytest.raises(ConfigError):
        train_config({"oracle": "maybe"}, "first", 20)


def test_scenario_config():
    cfg, count = scenario_config({"regime": "erratic", "num_objects": "4", "speed_range": "10, 30",
                                  "axis_aligned": "true", "count": "3", "miss_prob": "0.1"})
    assert cfg.regime is Regime.ERRATIC and cfg.num_objects == 4 and cfg.speed_range == (10.0, 30.0)
    assert cfg.axis_aligned and count == 3 and cfg.miss_prob == 0.1
    for bad in ({"regime": "x"}, {"speed_range": "1"}, {"miss_prob": "3"}, {"num_frames": "1.5"}):
        with pytest.raises(ConfigError):
            scenario_config(bad)
