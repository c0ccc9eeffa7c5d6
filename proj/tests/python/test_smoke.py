import math

import numpy as np
import pytest

import contrinet

TOY = {"backbone": "toy", "input_size": 32, "decoder_width": 8}


def test_config_defaults_and_errors():
    cfg = contrinet.validate_config(TOY)
    assert cfg["input_size"] == 32
    assert cfg["ablation"]["mdam_mode"] == "dynamic"
    with pytest.raises(contrinet.ConfigError, match="divisible by 32"):
        contrinet.validate_config({"input_size": 350})
    with pytest.raises(ValueError):
        contrinet.validate_config({"no_such_key": 1})


def test_forward_shapes_and_ranges():
    model = contrinet.Model(TOY)
    rng = np.random.default_rng(0)
    rgb = rng.random((2, 3, 32, 32))
    out = model.forward(rgb, rgb[:, ::-1].copy())
    assert set(out) == {"rgb", "thermal", "complementary", "fused"}
    for m in out.values():
        assert m.shape == (2, 1, 32, 32)
        assert ((m > 0) & (m < 1)).all()


def test_flows_x1_has_fewer_params():
    full = contrinet.Model(TOY).param_count
    single = contrinet.Model({**TOY, "ablation": {"active_flows": ["complementary"], "mdam_mode": "none"}}).param_count
    assert full > single
    assert contrinet.count_complexity(TOY)[0] == full


def test_losses():
    g = np.zeros((16, 16))
    g[4:12, 3:10] = 1.0
    assert contrinet.weighted_bce(np.full_like(g, 0.5), g) == pytest.approx(math.log(2.0), abs=1e-12)
    assert contrinet.weighted_iou(g, g) == 0.0
    assert 0.0 <= contrinet.total_loss([g, g, g, g], g) <= 4e-6
    w = contrinet.pixel_weights(g)
    assert w.shape == (1, 1, 16, 16)
    assert w.min() >= 1.0


def test_metrics_perfect_and_examples():
    g = np.zeros((8, 8))
    g[2:6, 2:6] = 1.0
    perfect = {"sm": 1.0, "fbeta_mean": 1.0, "fbeta_weighted": 1.0, "em_mean": 1.0, "mae": 0.0}
    assert contrinet.evaluate_image(g, g) == pytest.approx(perfect, abs=1e-6)
    s = np.full((8, 8), 0.25)
    assert contrinet.mae(s, g) == pytest.approx((16 * 0.75 + 48 * 0.25) / 64)


def test_gradcheck_mdam():
    report = contrinet.gradcheck("mdam")
    assert report["passed"]
    assert report["max_rel_error"] <= 1e-4
    with pytest.raises(contrinet.ConfigError):
        contrinet.gradcheck("decoder")
