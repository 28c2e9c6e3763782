"""
SINT1 model container.

Layout (all integers little-endian):

    magic           5 bytes  b"SINT1"            -+
    manifest length u32                           |
    manifest        UTF-8 JSON, sorted keys       |
    array count     u32                           |  checksummed
    per array:                                    |  body
        name length u16, name (UTF-8)             |
        dtype code  u8 (0 float32, 1 int32)       |
        rank        u8, then one u32 per dim      |
        data        raw little-endian values     -+
    checksum        32 bytes, SHA-256 of the body

The manifest names the component kind, the network specs, standardization
vectors and training history, plus a table of every array's dtype and shape.
"""

import hashlib
import json
import logging
import struct
from pathlib import Path
from typing import Any

import numpy as np

from ..analysis import AtlasPatterns, DensityGrid, ExpectedPattern, UnitAssignment
from ..engine import NetworkSpec, Params
from ..errors import ChecksumError, ContainerError, KindError, ShapeError
from ..models import (
    ActivationRecords,
    AutoencoderModel,
    ClassifierModel,
    EstimatorModel,
    HistoryEntry,
    LatentPoint,
)

logger = logging.getLogger(__name__)

MAGIC = b"SINT1"
FORMAT_VERSION = 1
CHECKSUM_SIZE = 32

DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<i4")}
KINDS = ("classifier", "autoencoder", "estimator", "records", "patterns")


def _storage_array(name: str, array: np.ndarray) -> tuple[int, np.ndarray]:
    array = np.asarray(array)
    if np.issubdtype(array.dtype, np.floating):
        if array.dtype != np.float32:
            logger.warning(f"Array '{name}' is {array.dtype}; storing it as float32")
        return 0, np.ascontiguousarray(array, dtype="<f4")
    if np.issubdtype(array.dtype, np.integer) or array.dtype == np.bool_:
        if array.size and (array.min() < np.iinfo(np.int32).min or array.max() > np.iinfo(np.int32).max):
            raise ContainerError(f"Array '{name}' does not fit into int32")
        return 1, np.ascontiguousarray(array, dtype="<i4")
    raise ContainerError(f"Array '{name}' has unsupported dtype {array.dtype}")


def write_container(
    path: Path, kind: str, manifest: dict[str, Any], arrays: dict[str, np.ndarray]
) -> Path:
    """Write one component. Returns the path written."""
    if kind not in KINDS:
        raise ContainerError(f"Unknown container kind '{kind}'. Must be one of: {list(KINDS)}")

    table = []
    section = [struct.pack("<I", len(arrays))]
    for name, array in arrays.items():
        code, stored = _storage_array(name, array)
        encoded = name.encode("utf-8")
        section.append(struct.pack("<H", len(encoded)))
        section.append(encoded)
        section.append(struct.pack("<BB", code, stored.ndim))
        section.append(struct.pack(f"<{stored.ndim}I", *stored.shape))
        section.append(stored.tobytes())
        table.append({"name": name, "dtype": DTYPE_CODES[code].name, "shape": list(stored.shape)})
    payload = b"".join(section)

    header = dict(manifest, kind=kind, format_version=FORMAT_VERSION, arrays=table)
    encoded_manifest = json.dumps(header, sort_keys=True).encode("utf-8")

    body = MAGIC + struct.pack("<I", len(encoded_manifest)) + encoded_manifest + payload

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(body)
        f.write(hashlib.sha256(body).digest())
    logger.info(f"Saved {kind} container with {len(arrays)} arrays to {path}")
    return path


class _Reader:
    def __init__(self, raw: bytes, start: int, end: int):
        self.raw = raw
        self.offset = start
        self.end = end

    def take(self, size: int) -> bytes:
        if self.offset + size > self.end:
            raise ContainerError(f"Container truncated at byte {self.offset}")
        chunk = self.raw[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_container(
    path: Path, expected_kind: str | None = None
) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
    """Parse and verify a container. Returns (manifest, arrays)."""
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise ContainerError(f"{path} is not a SINT1 container (bad magic)")
    if len(raw) < len(MAGIC) + 4 + CHECKSUM_SIZE:
        raise ContainerError(f"{path} is truncated")

    body_end = len(raw) - CHECKSUM_SIZE
    if hashlib.sha256(raw[:body_end]).digest() != raw[body_end:]:
        raise ChecksumError(f"{path} failed its checksum; the file is corrupted")

    reader = _Reader(raw, len(MAGIC), body_end)
    (manifest_size,) = reader.unpack("<I")
    try:
        manifest = json.loads(reader.take(manifest_size).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ContainerError(f"{path} has an unreadable manifest: {e}") from e

    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise ContainerError(
            f"{path} has format version {version}; this build reads version {FORMAT_VERSION}"
        )
    kind = manifest.get("kind")
    if expected_kind is not None and kind != expected_kind:
        raise KindError(f"{path} holds a '{kind}' component, expected '{expected_kind}'")

    arrays: dict[str, np.ndarray] = {}
    (count,) = reader.unpack("<I")
    for _ in range(count):
        (name_size,) = reader.unpack("<H")
        name = reader.take(name_size).decode("utf-8")
        code, rank = reader.unpack("<BB")
        if code not in DTYPE_CODES:
            raise ContainerError(f"Array '{name}' has unknown dtype code {code}")
        shape = reader.unpack(f"<{rank}I")
        dtype = DTYPE_CODES[code]
        data = reader.take(int(np.prod(shape, dtype=np.int64)) * dtype.itemsize)
        arrays[name] = np.frombuffer(data, dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))
    if reader.offset != body_end:
        raise ContainerError(f"{path} has {body_end - reader.offset} unexpected trailing bytes")

    table = {entry["name"]: entry for entry in manifest.get("arrays", [])}
    if set(table) != set(arrays):
        raise ContainerError(f"{path}: manifest array table does not match the payload")
    for name, array in arrays.items():
        if list(array.shape) != table[name]["shape"] or array.dtype.name != table[name]["dtype"]:
            raise ContainerError(f"{path}: array '{name}' does not match its manifest entry")
    return manifest, arrays


# ============================================================================
# COMPONENT MAPPING
# ============================================================================


def _param_arrays(prefix: str, params: Params) -> dict[str, np.ndarray]:
    arrays = {}
    for i, (weight, bias) in enumerate(zip(params.weights, params.biases)):
        arrays[f"{prefix}.W{i}"] = weight
        arrays[f"{prefix}.b{i}"] = bias
    return arrays


def _params_from(prefix: str, spec: NetworkSpec, arrays: dict[str, np.ndarray]) -> Params:
    try:
        params = Params(
            [arrays[f"{prefix}.W{i}"] for i in range(len(spec.layers))],
            [arrays[f"{prefix}.b{i}"] for i in range(len(spec.layers))],
        )
        params.check(spec)
    except (KeyError, ShapeError) as e:
        raise ContainerError(f"{prefix} parameters do not match the stored spec: {e}") from e
    return params


def _history(entries: list[HistoryEntry]) -> list[dict[str, Any]]:
    return [entry.model_dump() for entry in entries]


def _density_manifest(density: DensityGrid) -> dict[str, Any]:
    return {
        "label": density.label,
        "mass": density.mass,
        "bandwidth": list(density.bandwidth),
    }


def to_container(component) -> tuple[str, dict[str, Any], dict[str, np.ndarray]]:
    """(kind, manifest, arrays) for any storable component."""
    if isinstance(component, ClassifierModel):
        return (
            "classifier",
            {"spec": component.spec.model_dump(mode="json"), "history": _history(component.history)},
            _param_arrays("classifier", component.params),
        )
    if isinstance(component, AutoencoderModel):
        manifest = {
            "encoder_spec": component.encoder_spec.model_dump(mode="json"),
            "decoder_spec": component.decoder_spec.model_dump(mode="json"),
            "mean": component.mean.tolist(),
            "std": component.std.tolist(),
            "mmd_weight": component.mmd_weight,
            "kernel_bandwidth_sq": component.kernel_bandwidth_sq,
            "history": _history(component.history),
        }
        arrays = _param_arrays("encoder", component.encoder_params)
        arrays.update(_param_arrays("decoder", component.decoder_params))
        return "autoencoder", manifest, arrays
    if isinstance(component, EstimatorModel):
        return (
            "estimator",
            {
                "spec": component.spec.model_dump(mode="json"),
                "target_floor": component.target_floor,
                "history": _history(component.history),
            },
            _param_arrays("estimator", component.params),
        )
    if isinstance(component, ActivationRecords):
        return (
            "records",
            {"count": len(component)},
            {
                name: getattr(component, name)
                for name in ("sample_ids", "h", "y_true", "y_hat", "e", "cycle")
            },
        )
    if isinstance(component, AtlasPatterns):
        first = component.densities[0]
        manifest = {
            "grid": {"step": first.step, "extent": first.extent},
            "densities": [_density_manifest(d) for d in component.densities],
            "patterns": [{"label": p.label, "e_z": list(p.e_z)} for p in component.patterns],
            "layer_widths": component.assignment.layer_widths,
        }
        arrays = {
            "density": np.stack([d.values for d in component.densities]),
            "e_h": np.stack([p.e_h for p in component.patterns]),
            "dominant": component.assignment.dominant,
            "colors": component.colors,
        }
        for i, perm in enumerate(component.assignment.permutations):
            arrays[f"perm{i}"] = perm
        return "patterns", manifest, arrays
    raise ContainerError(f"Cannot store objects of type {type(component).__name__}")


def _entries(manifest: dict[str, Any]) -> list[HistoryEntry]:
    return [HistoryEntry.model_validate(entry) for entry in manifest.get("history", [])]


def from_container(manifest: dict[str, Any], arrays: dict[str, np.ndarray]):
    kind = manifest["kind"]
    try:
        if kind == "classifier":
            spec = NetworkSpec.model_validate(manifest["spec"])
            return ClassifierModel(spec, _params_from("classifier", spec, arrays), _entries(manifest))
        if kind == "autoencoder":
            encoder_spec = NetworkSpec.model_validate(manifest["encoder_spec"])
            decoder_spec = NetworkSpec.model_validate(manifest["decoder_spec"])
            return AutoencoderModel(
                encoder_spec,
                _params_from("encoder", encoder_spec, arrays),
                decoder_spec,
                _params_from("decoder", decoder_spec, arrays),
                np.array(manifest["mean"], dtype=np.float64),
                np.array(manifest["std"], dtype=np.float64),
                manifest["mmd_weight"],
                manifest["kernel_bandwidth_sq"],
                _entries(manifest),
            )
        if kind == "estimator":
            spec = NetworkSpec.model_validate(manifest["spec"])
            return EstimatorModel(
                spec, _params_from("estimator", spec, arrays), manifest["target_floor"], _entries(manifest)
            )
        if kind == "records":
            return ActivationRecords(
                sample_ids=arrays["sample_ids"].astype(np.int64),
                h=arrays["h"],
                y_true=arrays["y_true"].astype(np.int64),
                y_hat=arrays["y_hat"],
                e=arrays["e"].astype(np.float64),
                cycle=arrays["cycle"].astype(np.int64),
            )
        if kind == "patterns":
            step = manifest["grid"]["step"]
            n = int(round(manifest["grid"]["extent"] / step))
            axis = step * np.arange(-n, n + 1, dtype=np.float64)
            densities = [
                DensityGrid(axis, step, values.astype(np.float64), d["label"], d["mass"], tuple(d["bandwidth"]))
                for d, values in zip(manifest["densities"], arrays["density"])
            ]
            patterns = [
                ExpectedPattern(p["label"], LatentPoint(*p["e_z"]), e_h.astype(np.float64))
                for p, e_h in zip(manifest["patterns"], arrays["e_h"])
            ]
            widths = manifest["layer_widths"]
            assignment = UnitAssignment(
                arrays["dominant"].astype(np.int64),
                [arrays[f"perm{i}"].astype(np.int64) for i in range(len(widths))],
                widths,
            )
            return AtlasPatterns(densities, patterns, assignment, arrays["colors"].astype(np.float64))
    except (KeyError, ValueError) as e:
        if isinstance(e, ContainerError):
            raise
        raise ContainerError(f"Malformed {kind} container: {e}") from e
    raise ContainerError(f"Unknown container kind '{kind}'")


def save_model(component, path: Path) -> Path:
    kind, manifest, arrays = to_container(component)
    return write_container(path, kind, manifest, arrays)


def load_model(path: Path, expected_kind: str | None = None):
    manifest, arrays = read_container(path, expected_kind)
    component = from_container(manifest, arrays)
    logger.info(f"Loaded {manifest['kind']} from {path}")
    return component
