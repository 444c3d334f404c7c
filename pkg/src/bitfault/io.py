"""File formats: flat binary tensors, manifests, datasets, quantized tensors.

Binary tensors are raw little-endian arrays (``.f32`` float32, ``.i32``
int32, ``.u16`` uint16) described by structured-text INI manifests.  Floats
embedded in manifests use repr(), which round-trips bit-exactly.
"""

from __future__ import annotations

import configparser
from pathlib import Path

import numpy as np

from .errors import DataError, ModelLoadFailure
from .multipliers import MultConfig, parse_mult_config
from .network import Bounds, LayerSpec, QuantizedNetwork
from .quantize import QuantScheme


def save_f32(path, arr) -> None:
    np.asarray(arr, dtype="<f4").ravel().tofile(path)


def load_f32(path, shape=None) -> np.ndarray:
    arr = np.fromfile(path, dtype="<f4").astype(np.float64)
    return arr.reshape(shape) if shape is not None else arr


def save_i32(path, arr) -> None:
    np.asarray(arr, dtype="<i4").ravel().tofile(path)


def load_i32(path) -> np.ndarray:
    return np.fromfile(path, dtype="<i4").astype(np.int64)


def _read_ini(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    found = parser.read(path)
    if not found:
        raise DataError(f"cannot read manifest {path}")
    return parser


def _parse_pair(text: str) -> tuple[float, float]:
    lo, hi = (float(tok) for tok in text.split(","))
    return lo, hi


# -- weight tensors ----------------------------------------------------------


def save_weight_manifest(directory, tensors: dict[str, np.ndarray], name="weights.ini") -> Path:
    """Write per-tensor .f32 files plus the shape manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    parser = configparser.ConfigParser()
    parser.optionxform = str
    for tname, arr in tensors.items():
        fname = f"{tname}.f32"
        save_f32(directory / fname, arr)
        parser[f"tensor.{tname}"] = {
            "file": fname,
            "shape": ", ".join(str(d) for d in np.asarray(arr).shape),
        }
    path = directory / name
    with open(path, "w") as fh:
        parser.write(fh)
    return path


def load_weight_manifest(path) -> dict[str, np.ndarray]:
    parser = _read_ini(path)
    base = Path(path).parent
    tensors = {}
    for section in parser.sections():
        if not section.startswith("tensor."):
            continue
        tname = section[len("tensor."):]
        shape = tuple(int(tok) for tok in parser[section]["shape"].split(","))
        tensors[tname] = load_f32(base / parser[section]["file"], shape)
    if not tensors:
        raise DataError(f"no tensor sections in {path}")
    return tensors


# -- quantized tensors -------------------------------------------------------


def save_quantized(path_prefix, stored, scheme: QuantScheme, protected: bool) -> tuple[Path, Path]:
    """Stored words as .u16 plus (bits, scale, protected) metadata for reload."""
    prefix = Path(path_prefix)
    data_path = prefix.with_suffix(".u16")
    meta_path = prefix.with_suffix(".meta")
    words = np.asarray(stored, dtype=np.int64)
    np.asarray(words, dtype="<u2").ravel().tofile(data_path)
    parser = configparser.ConfigParser()
    parser.optionxform = str
    parser["quantized"] = {
        "file": data_path.name,
        "bits": str(scheme.bits),
        "scale": repr(scheme.scale),
        "protected": str(bool(protected)),
        "count": str(words.size),
        "shape": ", ".join(str(d) for d in words.shape),
    }
    with open(meta_path, "w") as fh:
        parser.write(fh)
    return data_path, meta_path


def load_quantized(meta_path) -> tuple[np.ndarray, QuantScheme, bool]:
    parser = _read_ini(meta_path)
    sec = parser["quantized"]
    shape = tuple(int(tok) for tok in sec["shape"].split(","))
    words = np.fromfile(Path(meta_path).parent / sec["file"], dtype="<u2")
    words = words.astype(np.int64).reshape(shape)
    scheme = QuantScheme(int(sec["bits"]), float(sec["scale"]))
    return words, scheme, sec["protected"] == "True"


# -- datasets ----------------------------------------------------------------


def save_dataset(directory, name: str, X, y) -> Path:
    """Feature matrix as .f32, labels as .i32, plus the shape manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    save_f32(directory / f"{name}_features.f32", X)
    save_i32(directory / f"{name}_labels.i32", y)
    parser = configparser.ConfigParser()
    parser.optionxform = str
    parser["dataset"] = {
        "features": f"{name}_features.f32",
        "labels": f"{name}_labels.i32",
        "rows": str(X.shape[0]),
        "cols": str(X.shape[1]),
    }
    path = directory / f"{name}.ini"
    with open(path, "w") as fh:
        parser.write(fh)
    return path


def load_dataset(path) -> tuple[np.ndarray, np.ndarray]:
    parser = _read_ini(path)
    try:
        sec = parser["dataset"]
        rows, cols = int(sec["rows"]), int(sec["cols"])
        base = Path(path).parent
        X = load_f32(base / sec["features"], (rows, cols))
        y = load_i32(base / sec["labels"])
    except (KeyError, ValueError) as exc:
        raise DataError(f"bad dataset manifest {path}: {exc}") from exc
    if y.shape[0] != rows:
        raise DataError(f"dataset {path}: {y.shape[0]} labels for {rows} rows")
    return X, y


# -- model manifests ---------------------------------------------------------


def save_model(directory, model: QuantizedNetwork, name="model.ini") -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    parser = configparser.ConfigParser()
    parser.optionxform = str
    top = {
        "input_dim": str(model.layers[0].in_dim),
        "weight_bits": str(model.weight_bits),
        "activation_bits": str(model.activation_bits),
    }
    if model.input_bounds is not None:
        top["input_bounds"] = f"{model.input_bounds.lower!r}, {model.input_bounds.upper!r}"
    parser["model"] = top
    for i, layer in enumerate(model.layers):
        wfile = f"{layer.name}_w.f32"
        bfile = f"{layer.name}_b.f32"
        save_f32(directory / wfile, model.weights[i])
        save_f32(directory / bfile, model.biases[i])
        sec = {
            "kind": layer.kind,
            "activation": layer.activation,
            "backend": layer.backend.label(),
            "protection": layer.protection,
            "clamp_method": layer.clamp_method,
            "weights": wfile,
            "bias": bfile,
        }
        if layer.kind == "dense":
            sec["in_dim"] = str(layer.in_dim)
            sec["out_dim"] = str(layer.out_dim)
        else:
            sec["in_shape"] = ", ".join(str(d) for d in layer.in_shape)
            sec["kernel"] = ", ".join(str(d) for d in layer.kernel)
            sec["out_channels"] = str(layer.out_channels)
            sec["stride"] = str(layer.stride)
            sec["padding"] = str(layer.padding)
        if model.bounds is not None:
            sec["bounds"] = f"{model.bounds[i].lower!r}, {model.bounds[i].upper!r}"
        parser[f"layer.{layer.name}"] = sec
    path = directory / name
    with open(path, "w") as fh:
        parser.write(fh)
    return path


def load_model(path) -> QuantizedNetwork:
    """Build a QuantizedNetwork from a manifest; raises ModelLoadFailure."""
    try:
        parser = _read_ini(path)
        base = Path(path).parent
        top = parser["model"]
        layers, weights, biases, bounds = [], [], [], []
        have_bounds = True
        for section in parser.sections():
            if not section.startswith("layer."):
                continue
            sec = parser[section]
            name = section[len("layer."):]
            kind = sec.get("kind", "dense")
            common = dict(
                name=name,
                kind=kind,
                activation=sec.get("activation", "relu"),
                backend=parse_mult_config(sec.get("backend", "exact(8)")),
                protection=sec.get("protection", "none"),
                clamp_method=sec.get("clamp_method", "m3"),
            )
            if kind == "dense":
                layer = LayerSpec(
                    in_dim=int(sec["in_dim"]), out_dim=int(sec["out_dim"]), **common
                )
            else:
                layer = LayerSpec(
                    in_shape=tuple(int(t) for t in sec["in_shape"].split(",")),
                    kernel=tuple(int(t) for t in sec["kernel"].split(",")),
                    out_channels=int(sec["out_channels"]),
                    stride=int(sec.get("stride", "1")),
                    padding=int(sec.get("padding", "0")),
                    **common,
                )
            rows = layer.out_channels if kind == "conv" else layer.out_dim
            weights.append(load_f32(base / sec["weights"], (rows, layer.fan_in)))
            if "bias" in sec:
                biases.append(load_f32(base / sec["bias"], (rows,)))
            else:
                biases.append(np.zeros(rows))
            if "bounds" in sec:
                bounds.append(Bounds(*_parse_pair(sec["bounds"])))
            else:
                have_bounds = False
            layers.append(layer)
        if not layers:
            raise DataError("manifest lists no layers")
        input_bounds = (
            Bounds(*_parse_pair(top["input_bounds"])) if "input_bounds" in top else None
        )
        return QuantizedNetwork(
            layers,
            weights,
            biases,
            weight_bits=int(top.get("weight_bits", "8")),
            activation_bits=int(top.get("activation_bits", "8")),
            bounds=bounds if have_bounds else None,
            input_bounds=input_bounds,
        )
    except ModelLoadFailure:
        raise
    except Exception as exc:
        raise ModelLoadFailure(f"cannot load model {path}: {exc}") from exc
