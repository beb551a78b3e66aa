"""SMDL model container: versioned, self-describing, deterministic bytes.

Layout: magic "SMDL", version byte, model-type byte, uint32 length of a
JSON parameter block (sorted keys), the JSON block, then the raw array
payload in the order the block's "arrays" list declares. Ensembles nest
their submodels as opaque byte arrays.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import FormatError
from .common import OneHotEncoder, Standardizer, TreeArrays
from .forest import ForestModel, ForestParams
from .gbm import GbmModel, GbmParams
from .mlp import MlpModel, MlpParams, Network
from .stacker import EnsembleModel, StackerModel

MAGIC = b"SMDL"
VERSION = 1

TYPE_FOREST = 1
TYPE_GBM = 2
TYPE_MLP = 3
TYPE_STACKER = 4
TYPE_ENSEMBLE = 5

_HEADER = struct.Struct("<4sBBI")


def _pack(model_type: int, params: dict, arrays: list) -> bytes:
    manifest = []
    blobs = []
    for name, arr in arrays:
        arr = np.ascontiguousarray(arr)
        manifest.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    head = json.dumps({"params": params, "arrays": manifest},
                      sort_keys=True, separators=(",", ":")).encode()
    return b"".join([_HEADER.pack(MAGIC, VERSION, model_type, len(head)), head, *blobs])


def _unpack(raw: bytes):
    if len(raw) < _HEADER.size:
        raise FormatError("model container truncated")
    magic, version, model_type, head_len = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"bad model magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported model version {version}")
    head = json.loads(raw[_HEADER.size:_HEADER.size + head_len])
    offset = _HEADER.size + head_len
    arrays = {}
    for spec in head["arrays"]:
        dtype = np.dtype(spec["dtype"])
        count = int(np.prod(spec["shape"])) if spec["shape"] else 1
        nbytes = count * dtype.itemsize
        chunk = raw[offset:offset + nbytes]
        if len(chunk) != nbytes:
            raise FormatError(f"array {spec['name']} truncated")
        arrays[spec["name"]] = np.frombuffer(chunk, dtype=dtype).reshape(spec["shape"]).copy()
        offset += nbytes
    if offset != len(raw):
        raise FormatError("trailing bytes in model container")
    return model_type, head["params"], arrays


def _tree_arrays_payload(trees: TreeArrays) -> list:
    return [
        ("feature", trees.feature),
        ("threshold", trees.threshold),
        ("left", trees.left),
        ("right", trees.right),
        ("value", trees.value),
        ("roots", trees.roots),
    ]


def _tree_arrays_from(arrays: dict) -> TreeArrays:
    return TreeArrays(
        feature=arrays["feature"], threshold=arrays["threshold"],
        left=arrays["left"], right=arrays["right"],
        value=arrays["value"], roots=arrays["roots"],
    )


def _encoder_payload(encoder: OneHotEncoder) -> list:
    return [(f"categories_{i}", cats) for i, cats in enumerate(encoder.categories)]


def _encoder_from(params: dict, arrays: dict) -> OneHotEncoder:
    cols = tuple(params["categorical_columns"])
    cats = [arrays[f"categories_{i}"] for i in range(len(cols))]
    return OneHotEncoder(categorical_columns=cols, categories=cats)


def model_to_bytes(model) -> bytes:
    if isinstance(model, ForestModel):
        params = {
            "params": vars(model.params) | {},
            "seed": model.seed,
            "feature_names": list(model.feature_names),
        }
        return _pack(TYPE_FOREST, params, _tree_arrays_payload(model.trees))
    if isinstance(model, GbmModel):
        params = {
            "params": vars(model.params) | {},
            "seed": model.seed,
            "base_score": model.base_score,
            "feature_names": list(model.feature_names),
        }
        return _pack(TYPE_GBM, params, _tree_arrays_payload(model.trees))
    if isinstance(model, MlpModel):
        params = {
            "params": {**vars(model.params), "widths": list(model.params.widths)},
            "seed": model.seed,
            "feature_names": list(model.feature_names),
            "categorical_columns": list(model.categorical_columns),
            "best_epoch": model.best_epoch,
            "metric_history": model.metric_history,
            "n_layers": len(model.network.weights),
        }
        arrays = []
        for i, (w, b) in enumerate(zip(model.network.weights, model.network.biases)):
            arrays.append((f"w_{i}", w))
            arrays.append((f"b_{i}", b))
        arrays.append(("scaler_mean", model.scaler.mean))
        arrays.append(("scaler_std", model.scaler.std))
        arrays.extend(_encoder_payload(model.encoder))
        return _pack(TYPE_MLP, params, arrays)
    if isinstance(model, StackerModel):
        params = {
            "feature_names": list(model.feature_names),
            "base_names": list(model.base_names),
            "categorical_columns": list(model.categorical_columns),
            "intercept": model.intercept,
            "ridge_used": model.ridge_used,
            "n_iterations": model.n_iterations,
        }
        arrays = [
            ("coefficients", model.coefficients),
            ("coef_stderr", model.coef_stderr),
            ("scaler_mean", model.scaler.mean),
            ("scaler_std", model.scaler.std),
        ]
        arrays.extend(_encoder_payload(model.encoder))
        return _pack(TYPE_STACKER, params, arrays)
    if isinstance(model, EnsembleModel):
        thresholds = model.thresholds.as_dict() if model.thresholds else None
        arrays = [
            ("rf", np.frombuffer(model_to_bytes(model.rf), dtype=np.uint8)),
            ("gbm", np.frombuffer(model_to_bytes(model.gbm), dtype=np.uint8)),
            ("mlp", np.frombuffer(model_to_bytes(model.mlp), dtype=np.uint8)),
            ("stacker", np.frombuffer(model_to_bytes(model.stacker), dtype=np.uint8)),
        ]
        return _pack(TYPE_ENSEMBLE, {"thresholds": thresholds}, arrays)
    raise FormatError(f"cannot serialize {type(model).__name__}")


def model_from_bytes(raw: bytes):
    model_type, params, arrays = _unpack(raw)
    if model_type == TYPE_FOREST:
        return ForestModel(
            params=ForestParams(**params["params"]),
            seed=params["seed"],
            feature_names=tuple(params["feature_names"]),
            trees=_tree_arrays_from(arrays),
        )
    if model_type == TYPE_GBM:
        return GbmModel(
            params=GbmParams(**params["params"]),
            seed=params["seed"],
            feature_names=tuple(params["feature_names"]),
            base_score=params["base_score"],
            trees=_tree_arrays_from(arrays),
        )
    if model_type == TYPE_MLP:
        mlp_params = dict(params["params"])
        mlp_params["widths"] = tuple(mlp_params["widths"])
        n_layers = params["n_layers"]
        weights = [arrays[f"w_{i}"] for i in range(n_layers)]
        biases = [arrays[f"b_{i}"] for i in range(n_layers)]
        return MlpModel(
            params=MlpParams(**mlp_params),
            seed=params["seed"],
            feature_names=tuple(params["feature_names"]),
            categorical_columns=tuple(params["categorical_columns"]),
            encoder=_encoder_from(params, arrays),
            scaler=Standardizer(mean=arrays["scaler_mean"], std=arrays["scaler_std"]),
            network=Network(weights, biases),
            best_epoch=params["best_epoch"],
            metric_history=list(params["metric_history"]),
        )
    if model_type == TYPE_STACKER:
        return StackerModel(
            feature_names=tuple(params["feature_names"]),
            base_names=tuple(params["base_names"]),
            categorical_columns=tuple(params["categorical_columns"]),
            encoder=_encoder_from(params, arrays),
            scaler=Standardizer(mean=arrays["scaler_mean"], std=arrays["scaler_std"]),
            coefficients=arrays["coefficients"],
            intercept=params["intercept"],
            coef_stderr=arrays["coef_stderr"],
            ridge_used=params["ridge_used"],
            n_iterations=params["n_iterations"],
        )
    if model_type == TYPE_ENSEMBLE:
        from ..evaluation import ThresholdSet

        thresholds = None
        if params["thresholds"] is not None:
            thresholds = ThresholdSet(**params["thresholds"])
        return EnsembleModel(
            rf=model_from_bytes(arrays["rf"].tobytes()),
            gbm=model_from_bytes(arrays["gbm"].tobytes()),
            mlp=model_from_bytes(arrays["mlp"].tobytes()),
            stacker=model_from_bytes(arrays["stacker"].tobytes()),
            thresholds=thresholds,
        )
    raise FormatError(f"unknown model type byte {model_type}")


def save_model(model, path) -> None:
    with open(path, "wb") as fh:
        fh.write(model_to_bytes(model))


def load_model(path):
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())
