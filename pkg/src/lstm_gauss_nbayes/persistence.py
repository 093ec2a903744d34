"""Versioned JSON model files.

Floats are written with Python's shortest round-trip ``repr`` so a
load/save cycle reproduces every 64-bit value exactly.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .baselines import LstmClassifierParams, MlpParams
from .error_bayes import GaussNBModel
from .errors import FormatError, IoError, VersionError
from .lstm import StackedLstmParams

FORMAT_VERSION = 1

_KINDS = {
    "lstm_predictor": StackedLstmParams,
    "lstm_classifier": LstmClassifierParams,
    "mlp": MlpParams,
    "gauss_nb": GaussNBModel,
}


def _kind_of(model) -> str:
    # subclass first: a classifier is also a StackedLstmParams
    if isinstance(model, LstmClassifierParams):
        return "lstm_classifier"
    if isinstance(model, StackedLstmParams):
        return "lstm_predictor"
    if isinstance(model, MlpParams):
        return "mlp"
    if isinstance(model, GaussNBModel):
        return "gauss_nb"
    raise TypeError(f"cannot save objects of type {type(model).__name__}")


def _encode_array(a) -> dict:
    a = np.asarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "values": [float(v) for v in a.reshape(-1)]}


def _decode_array(obj, where) -> np.ndarray:
    try:
        shape = [int(s) for s in obj["shape"]]
        values = np.array([float(v) for v in obj["values"]], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad array record ({exc})", where) from None
    if values.size != math.prod(shape):
        raise FormatError(f"{values.size} values for shape {shape}", where)
    return values.reshape(shape)


def model_to_document(model, metadata=None) -> dict:
    kind = _kind_of(model)
    doc = {"format_version": FORMAT_VERSION, "kind": kind}
    if kind == "gauss_nb":
        doc["scalars"] = {"prior_abnormal": float(model.prior_abnormal), "variance_floor": float(model.variance_floor)}
        doc["arrays"] = {"mean": _encode_array(model.mean), "variance": _encode_array(model.variance)}
    else:
        doc["arrays"] = {name: _encode_array(v) for name, v in model.blocks().items()}
    if metadata:
        doc["metadata"] = metadata
    return doc


def document_to_model(doc, source="<document>"):
    if not isinstance(doc, dict):
        raise FormatError("top level must be an object", source)
    if "format_version" not in doc:
        raise FormatError("missing format_version", f"{source}:format_version")
    if doc["format_version"] != FORMAT_VERSION:
        raise VersionError(f"{source}: format_version {doc['format_version']!r}, this build reads {FORMAT_VERSION}")
    kind = doc.get("kind")
    if kind not in _KINDS:
        raise FormatError(f"unknown model kind {kind!r}", f"{source}:kind")
    arrays_doc = doc.get("arrays")
    if not isinstance(arrays_doc, dict):
        raise FormatError("missing arrays", f"{source}:arrays")
    arrays = {k: _decode_array(v, f"{source}:arrays.{k}") for k, v in arrays_doc.items()}
    try:
        if kind == "gauss_nb":
            sc = doc["scalars"]
            return GaussNBModel(float(sc["prior_abnormal"]), arrays["mean"], arrays["variance"],
                                float(sc["variance_floor"]))
        return _KINDS[kind].from_blocks(arrays)
    except KeyError as exc:
        raise FormatError(f"missing field {exc}", source) from None
    except ValueError as exc:
        raise FormatError(str(exc), source) from None


def dumps_model(model, metadata=None) -> str:
    return json.dumps(model_to_document(model, metadata), indent=1) + "\n"


def loads_model(text: str, source="<string>"):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(exc.msg, f"{source}:line {exc.lineno} col {exc.colno}") from None
    return document_to_model(doc, source)


def save_model(model, path, metadata=None) -> Path:
    path = Path(path)
    try:
        path.write_text(dumps_model(model, metadata))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


def load_model(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    return loads_model(text, str(path))


def load_metadata(path) -> dict:
    try:
        return json.loads(Path(path).read_text()).get("metadata", {})
    except json.JSONDecodeError as exc:
        raise FormatError(exc.msg, f"{path}:line {exc.lineno}") from None
