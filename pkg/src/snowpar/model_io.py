"""JSON persistence for trained models.

Floats are written with Python's shortest round-trip repr, so a load returns
bit-identical weights.  Compact separators keep a k=7, n=4 model under 10 KB.
"""

import dataclasses
import json
from pathlib import Path

import numpy as np

from .constraints import ConstrainedModel, ThresholdSpec
from .errors import ConfigError
from .net import PredictiveNet

FORMAT = "snowpar-model"
VERSION = 1


def model_to_dict(model: ConstrainedModel) -> dict:
    net = model.net
    return {
        "format": FORMAT,
        "version": VERSION,
        "net": {
            "k": net.k, "n": net.n,
            "act1": net.act1, "act2": net.act2, "act3": net.act3,
            "W1": net.W1.tolist(), "b1": net.b1.tolist(),
            "W2": net.W2.tolist(), "b2": net.b2.tolist(),
            "W3": net.W3.tolist(), "b3": net.b3,
        },
        "threshold": dataclasses.asdict(model.threshold),
        "scale_x": model.scale_x.tolist(),
        "scale_y": model.scale_y,
        "dt": model.dt,
        "feature_names": list(model.feature_names),
    }


def model_from_dict(doc: dict) -> ConstrainedModel:
    if doc.get("format") != FORMAT:
        raise ConfigError(f"not a model document (format={doc.get('format')!r})")
    if doc.get("version") != VERSION:
        raise ConfigError(f"unsupported model version {doc.get('version')!r}")
    nd = doc["net"]
    net = PredictiveNet(
        k=int(nd["k"]), n=int(nd["n"]),
        W1=np.asarray(nd["W1"], np.float64), b1=np.asarray(nd["b1"], np.float64),
        W2=np.asarray(nd["W2"], np.float64), b2=np.asarray(nd["b2"], np.float64),
        W3=np.asarray(nd["W3"], np.float64), b3=float(nd["b3"]),
        act1=nd["act1"], act2=nd["act2"], act3=nd["act3"],
    )
    return ConstrainedModel(
        net=net,
        threshold=ThresholdSpec(**doc["threshold"]),
        scale_x=np.asarray(doc["scale_x"], np.float64),
        scale_y=float(doc["scale_y"]),
        dt=float(doc["dt"]),
        feature_names=tuple(doc.get("feature_names", ())),
    )


def save_model(model: ConstrainedModel, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(model_to_dict(model), separators=(",", ":")))
    return path


def load_model(path) -> ConstrainedModel:
    return model_from_dict(json.loads(Path(path).read_text()))
