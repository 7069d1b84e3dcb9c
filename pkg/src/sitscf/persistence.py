"""Checkpoints as a JSON manifest next to a raw little-endian float32 blob.

``save_checkpoint(model, "out/classifier")`` writes ``out/classifier.manifest.json``
and ``out/classifier.bin``. The blob holds every parameter and buffer,
row-major, concatenated in manifest order; the manifest carries the sha256
of the blob, so any tampering is caught at load time.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .models import Classifier, Discriminator, Model, Noiser, NoiserConfig, TempCNNConfig

FORMAT_VERSION = 1
BLOB_DTYPE = "<f4"
MANIFEST_SUFFIX = ".manifest.json"
BLOB_SUFFIX = ".bin"


class CheckpointError(ValueError):
    pass


class UnsupportedVersionError(CheckpointError):
    pass


class KindMismatchError(CheckpointError):
    pass


class MissingTensorError(CheckpointError):
    pass


class NonFiniteParameterError(CheckpointError):
    pass


def checkpoint_paths(path) -> tuple[Path, Path]:
    p = str(path)
    for suffix in (MANIFEST_SUFFIX, BLOB_SUFFIX):
        if p.endswith(suffix):
            p = p[: -len(suffix)]
    return Path(p + MANIFEST_SUFFIX), Path(p + BLOB_SUFFIX)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def dump_json(obj, path) -> None:
    """Stable JSON: sorted keys, fixed indentation, trailing newline."""
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def save_checkpoint(model: Model, path, metadata: dict | None = None, seed: int | None = None) -> tuple[Path, Path]:
    """Write manifest + blob; refuses non-finite tensors. Returns both paths."""
    manifest_path, blob_path = checkpoint_paths(path)
    params = set(model.params)
    entries, chunks = [], []
    offset = 0
    for name, arr in model.state_arrays().items():
        if not np.all(np.isfinite(arr)):
            raise NonFiniteParameterError(f"refusing to save non-finite tensor {name!r}")
        raw = np.ascontiguousarray(arr, dtype=BLOB_DTYPE).tobytes()
        entries.append({
            "name": name, "shape": list(arr.shape), "dtype": BLOB_DTYPE,
            "offset": offset, "length": len(raw),
            "role": "parameter" if name in params else "buffer",
        })
        chunks.append(raw)
        offset += len(raw)
    blob = b"".join(chunks)
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "architecture": model.architecture(),
        "layer_specs": model.layer_specs(),
        "tensors": entries,
        "blob_file": blob_path.name,
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
        "blob_bytes": len(blob),
        "byte_order": "little",
        "metadata": metadata or {},
        "seed": seed,
    }
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    blob_path.write_bytes(blob)
    dump_json(manifest, manifest_path)
    return manifest_path, blob_path


def read_manifest(path) -> dict:
    manifest_path, _ = checkpoint_paths(path)
    if not manifest_path.exists():
        raise FileNotFoundError(f"checkpoint manifest not found: {manifest_path}")
    with open(manifest_path) as f:
        manifest = json.load(f)
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"{manifest_path}: unsupported checkpoint format version {version!r} (expected {FORMAT_VERSION})")
    return manifest


def _build_model(kind: str, arch: dict) -> Model:
    if kind == "classifier":
        return Classifier(arch["n_classes"], TempCNNConfig(**arch["tempcnn"]))
    if kind == "discriminator":
        return Discriminator(TempCNNConfig(**arch["tempcnn"]))
    if kind == "noiser":
        return Noiser(NoiserConfig(**arch["noiser"]))
    raise CheckpointError(f"unknown model kind {kind!r}")


def _check_directory(entries: list[dict], blob_len: int) -> None:
    offset = 0
    for e in entries:
        expected = int(np.prod(e["shape"], dtype=np.int64)) * 4
        if e["dtype"] != BLOB_DTYPE:
            raise CheckpointError(f"tensor {e['name']!r}: unsupported dtype {e['dtype']!r}")
        if e["length"] != expected:
            raise CheckpointError(f"tensor {e['name']!r}: length {e['length']} does not match shape {e['shape']}")
        if e["offset"] != offset:
            raise CheckpointError(f"tensor {e['name']!r}: offset {e['offset']} is not contiguous (expected {offset})")
        offset += e["length"]
    if offset != blob_len:
        raise CheckpointError(f"blob has {blob_len} bytes but the tensor directory covers {offset}")


def load_checkpoint(path, kind: str | None = None) -> tuple[Model, dict]:
    """Rebuild the model stored at ``path``; returns (model, manifest)."""
    manifest = read_manifest(path)
    _, blob_path = checkpoint_paths(path)
    if kind is not None and manifest["kind"] != kind:
        raise KindMismatchError(f"checkpoint holds a {manifest['kind']!r}, not a {kind!r}")
    blob = blob_path.read_bytes()
    digest = hashlib.sha256(blob).hexdigest()
    if digest != manifest["blob_sha256"]:
        raise CheckpointError(f"{blob_path}: content hash mismatch (blob modified or truncated)")
    entries = manifest["tensors"]
    _check_directory(entries, len(blob))

    model = _build_model(manifest["kind"], manifest["architecture"])
    if model.layer_specs() != manifest["layer_specs"]:
        raise CheckpointError("layer specs in the manifest do not match the rebuilt architecture")
    state = {}
    for e in entries:
        arr = np.frombuffer(blob, dtype=BLOB_DTYPE, count=e["length"] // 4, offset=e["offset"])
        state[e["name"]] = arr.reshape(e["shape"]).astype(np.float32)
    expected = model.state_arrays()
    for name in expected:
        if name not in state:
            raise MissingTensorError(f"checkpoint has no tensor named {name!r}")
    extra = set(state) - set(expected)
    if extra:
        raise CheckpointError(f"checkpoint has unexpected tensors: {sorted(extra)}")
    model.set_state(state)
    return model, manifest
