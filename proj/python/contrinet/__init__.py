"""Python bindings for the RGB-thermal salient object detection core."""

import json

from . import _contrinet
from ._contrinet import (
    ConfigError,
    DataError,
    NumericError,
    e_measure_mean,
    evaluate_image,
    f_measure_mean,
    f_measure_weighted,
    mae,
    pixel_weights,
    predict,
    s_measure,
    total_loss,
    weighted_bce,
    weighted_iou,
)

__all__ = [
    "ConfigError",
    "DataError",
    "Model",
    "NumericError",
    "count_complexity",
    "e_measure_mean",
    "evaluate_dirs",
    "evaluate_image",
    "f_measure_mean",
    "f_measure_weighted",
    "gradcheck",
    "mae",
    "pixel_weights",
    "predict",
    "s_measure",
    "total_loss",
    "train",
    "validate_config",
    "weighted_bce",
    "weighted_iou",
]


def validate_config(config=None):
    """Defaults filled in and checked; raises ConfigError."""
    return json.loads(_contrinet.validate_config(json.dumps(config or {})))


def count_complexity(config=None):
    """(trainable parameters, MACs per image at input_size)."""
    return _contrinet.count_complexity(json.dumps(config or {}))


class Model:
    def __init__(self, config=None, *, _net=None):
        self._net = _net if _net is not None else _contrinet.Model(json.dumps(config or {}))

    @classmethod
    def load(cls, checkpoint):
        return cls(_net=_contrinet.Model.load(str(checkpoint)))

    @property
    def config(self):
        return json.loads(self._net.config_json)

    @property
    def param_count(self):
        return self._net.param_count

    def forward(self, rgb, thermal):
        return self._net.forward(rgb, thermal)

    def save_params(self, path):
        self._net.save_params(str(path))


def evaluate_dirs(pred_dir, gt_dir, attributes=None):
    return json.loads(_contrinet.evaluate_dirs(str(pred_dir), str(gt_dir), None if attributes is None else str(attributes)))


def train(config, data_root, out_dir, deterministic=True):
    steps, loss, ckpt = _contrinet.train(json.dumps(config), str(data_root), str(out_dir), deterministic)
    return {"steps": steps, "final_loss": loss, "checkpoint": ckpt}


def gradcheck(module, seed=0):
    return json.loads(_contrinet.gradcheck(module, seed))
