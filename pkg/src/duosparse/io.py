"""Bit-exact file formats and seeded data generation.

Matrix container layout (all integers little-endian):

    offset 0   magic   4 bytes  b"DSPM"
    offset 4   version 1 byte   (currently 1)
    offset 5   dtype   1 byte   0 = float32, 1 = float64
    offset 6   flags   1 byte   bit0 set marks a {0,1} mask
    offset 7   reserved 1 byte  (zero)
    offset 8   rows    uint32
    offset 12  cols    uint32
    offset 16  payload rows*cols scalars, row-major, little-endian

Float32 payloads are converted up to float64 on load; the solver core is
always float64. Serialization forces little-endian regardless of host
order, so files are byte-identical across platforms.

Calibration data comes from the Philox (4x64, 10 rounds) counter-based
generator keyed with the seed, drawing float64 standard normals into a
row-major (k, m) array; "relu-normal" clamps negatives to zero after
drawing. Identical seeds give identical bits.
"""

import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (BadMagic, DimensionMismatch, ManifestError,
                     NonFiniteValue, TruncatedPayload, UnsupportedVersion)
from .pipeline import ACTIVATIONS, Layer, LayerStack

MAGIC = b"DSPM"
VERSION = 1
_HEADER = struct.Struct("<4sBBBBII")
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_DTYPE_CODES = {"f32": 0, "f64": 1}
FLAG_MASK = 0x01

DISTRIBUTIONS = ("normal", "relu-normal")


@dataclass
class MatrixHeader:
    version: int
    dtype_code: int
    is_mask: bool
    rows: int
    cols: int


def write_matrix(m: np.ndarray, path, dtype: str = "f64",
                 is_mask: bool = False) -> None:
    """Serialize a 2-D array. Masks must contain only 0.0/1.0 values."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionMismatch(f"can only serialize 2-D arrays, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonFiniteValue(f"refusing to write NaN/Inf to {path}")
    if is_mask and not np.all((m == 0.0) | (m == 1.0)):
        raise NonFiniteValue(f"mask payload for {path} has values outside {{0,1}}")
    if dtype not in _DTYPE_CODES:
        raise ValueError(f"dtype must be 'f32' or 'f64', got {dtype!r}")
    code = _DTYPE_CODES[dtype]
    flags = FLAG_MASK if is_mask else 0
    header = _HEADER.pack(MAGIC, VERSION, code, flags, 0,
                          m.shape[0], m.shape[1])
    payload = np.ascontiguousarray(m, dtype=_DTYPES[code]).tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_matrix_header(path) -> MatrixHeader:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise TruncatedPayload(f"{path}: header truncated")
    magic, version, code, flags, _res, rows, cols = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise BadMagic(f"{path}: expected magic {MAGIC!r}, found {magic!r}")
    if version != VERSION:
        raise UnsupportedVersion(f"{path}: version {version} not supported")
    if code not in _DTYPES:
        raise UnsupportedVersion(f"{path}: unknown dtype code {code}")
    return MatrixHeader(version=version, dtype_code=code,
                        is_mask=bool(flags & FLAG_MASK), rows=rows, cols=cols)


def read_matrix(path) -> np.ndarray:
    """Load a matrix as float64, upconverting float32 payloads."""
    header = read_matrix_header(path)
    dtype = _DTYPES[header.dtype_code]
    expected = header.rows * header.cols * dtype.itemsize
    with open(path, "rb") as fh:
        fh.seek(_HEADER.size)
        raw = fh.read(expected + 1)
    if len(raw) < expected:
        raise TruncatedPayload(
            f"{path}: payload has {len(raw)} bytes, header promises {expected}")
    data = np.frombuffer(raw[:expected], dtype=dtype).astype(np.float64)
    out = data.reshape(header.rows, header.cols)
    if not np.all(np.isfinite(out)):
        raise NonFiniteValue(f"{path}: payload contains NaN/Inf")
    if header.is_mask and not np.all((out == 0.0) | (out == 1.0)):
        raise NonFiniteValue(f"{path}: mask payload has values outside {{0,1}}")
    return out


def read_mask(path) -> np.ndarray:
    return read_matrix(path).astype(np.uint8)


def gen_calibration(k: int, m: int, seed: int,
                    distribution: str = "normal") -> np.ndarray:
    """Deterministic calibration samples; see the module docstring for the RNG."""
    if k < 1 or m < 1:
        raise ValueError(f"need k, m >= 1, got {k}, {m}")
    if distribution not in DISTRIBUTIONS:
        raise ValueError(
            f"distribution must be one of {DISTRIBUTIONS}, got {distribution!r}")
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    x = rng.standard_normal((k, m), dtype=np.float64)
    if distribution == "relu-normal":
        x = np.maximum(x, 0.0)
    return x


# ---------------------------------------------------------------------------
# Stack manifests: a JSON index of per-layer weight (and optional mask)
# files, all paths relative to the manifest's directory.
# ---------------------------------------------------------------------------

MANIFEST_FORMAT = "duosparse-stack"
MANIFEST_VERSION = 1


def write_stack(stack: LayerStack, out_dir, masks=None, config=None,
                manifest_name: str = "stack.json") -> str:
    """Write weights, optional masks, and the manifest into ``out_dir``."""
    stack.validate()
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for i, layer in enumerate(stack.layers):
        wname = f"layer{i:02d}_w.dspm"
        write_matrix(layer.weight, os.path.join(out_dir, wname))
        entry = {
            "weightsPath": wname,
            "activation": layer.activation,
            "rows": layer.weight.shape[0],
            "cols": layer.weight.shape[1],
        }
        if masks is not None and masks[i] is not None:
            mname = f"layer{i:02d}_mask.dspm"
            write_matrix(np.asarray(masks[i], dtype=np.float64),
                         os.path.join(out_dir, mname), is_mask=True)
            entry["maskPath"] = mname
        entries.append(entry)
    manifest = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "layers": entries,
    }
    if config is not None:
        manifest["config"] = config
    manifest_path = os.path.join(out_dir, manifest_name)
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest_path


def read_stack(manifest_path):
    """Load a stack manifest. Returns ``(stack, masks, manifest_dict)``."""
    try:
        with open(manifest_path) as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"{manifest_path}: {exc}") from exc
    if manifest.get("format") != MANIFEST_FORMAT:
        raise ManifestError(f"{manifest_path}: not a {MANIFEST_FORMAT} manifest")
    if manifest.get("version") != MANIFEST_VERSION:
        raise ManifestError(f"{manifest_path}: unsupported manifest version")
    base = os.path.dirname(os.path.abspath(manifest_path))
    layers, masks = [], []
    for i, entry in enumerate(manifest.get("layers", [])):
        activation = entry.get("activation", "none")
        if activation not in ACTIVATIONS:
            raise ManifestError(
                f"{manifest_path}: layer {i} has unknown activation "
                f"{activation!r}")
        w = read_matrix(os.path.join(base, entry["weightsPath"]))
        if w.shape != (entry["rows"], entry["cols"]):
            raise ManifestError(
                f"{manifest_path}: layer {i} shape {w.shape} does not match "
                f"manifest ({entry['rows']}, {entry['cols']})")
        layers.append(Layer(weight=w, activation=activation))
        if "maskPath" in entry:
            mask = read_mask(os.path.join(base, entry["maskPath"]))
            if mask.shape != w.shape:
                raise ManifestError(
                    f"{manifest_path}: layer {i} mask shape {mask.shape} "
                    f"does not match weights {w.shape}")
            masks.append(mask)
        else:
            masks.append(None)
    stack = LayerStack(layers=layers)
    try:
        stack.validate()
    except DimensionMismatch as exc:
        raise ManifestError(f"{manifest_path}: {exc}") from exc
    return stack, masks, manifest
