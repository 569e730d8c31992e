"""Binary checkpoint container.

Layout::

    b"QNBMCKPT"                 8-byte magic
    uint32 LE                   header length
    header                      UTF-8 JSON: version, model kind, config,
                                feature names and hash, RNG algorithm, and
                                (name, group, shape, offset) per array
    payload                     little-endian float64 arrays, back to back
    sha256                      32-byte digest of everything above

Any flipped or missing byte fails the digest check.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .config import ModelConfig
from .errors import IncompatibleCheckpointError, IntegrityError, ShapeError
from .numkit import RNG_ALGORITHM
from .params import ModelParams, features_hash

MAGIC = b"QNBMCKPT"
FORMAT_VERSION = 1
_DIGEST = 32


def _encode(params: ModelParams) -> bytes:
    arrays, payload, offset = [], [], 0
    for group, store in (("tensor", params.tensors), ("stat", params.stats)):
        for name in sorted(store):
            a = np.ascontiguousarray(store[name], dtype="<f8")
            arrays.append({"name": name, "group": group, "shape": list(a.shape), "offset": offset})
            payload.append(a.tobytes())
            offset += a.nbytes
    header = {
        "format_version": FORMAT_VERSION,
        "model_kind": params.kind,
        "config": params.config.model_dump(mode="json"),
        "dropout_rate": params.dropout_rate,
        "horizon": params.horizon,
        "quantiles": list(params.config.quantiles),
        "feature_names": params.feature_names,
        "feature_names_hash": features_hash(params.feature_names),
        "rng_algorithm": RNG_ALGORITHM,
        "generation": params.generation,
        "meta": params.meta,
        "arrays": arrays,
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    body = MAGIC + struct.pack("<I", len(hbytes)) + hbytes + b"".join(payload)
    return body + hashlib.sha256(body).digest()


def save_checkpoint(params: ModelParams, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(_encode(params))
    return path


def load_checkpoint(path, feature_names=None) -> ModelParams:
    """Read a checkpoint; with ``feature_names`` also check the dataset layout."""
    blob = Path(path).read_bytes()
    if len(blob) < len(MAGIC) + 4 + _DIGEST or not blob.startswith(MAGIC):
        raise IntegrityError(f"{path}: not a checkpoint or truncated")
    body, digest = blob[:-_DIGEST], blob[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise IntegrityError(f"{path}: checksum mismatch (corrupted or truncated file)")
    (hlen,) = struct.unpack("<I", body[8:12])
    header = json.loads(body[12 : 12 + hlen])
    if header.get("format_version") != FORMAT_VERSION:
        raise IncompatibleCheckpointError(
            f"{path}: format version {header.get('format_version')} unsupported "
            f"(this build reads version {FORMAT_VERSION})"
        )
    payload = body[12 + hlen :]
    tensors, stats = {}, {}
    for entry in header["arrays"]:
        n = int(np.prod(entry["shape"], dtype=np.int64))
        a = np.frombuffer(payload, dtype="<f8", count=n, offset=entry["offset"])
        target = tensors if entry["group"] == "tensor" else stats
        target[entry["name"]] = a.reshape(entry["shape"]).astype(np.float64)
    params = ModelParams(
        kind=header["model_kind"],
        config=ModelConfig.model_validate(header["config"]),
        dropout_rate=header["dropout_rate"],
        horizon=header["horizon"],
        feature_names=header["feature_names"],
        tensors=tensors,
        stats=stats,
        generation=header["generation"],
        meta=header["meta"],
    )
    if feature_names is not None:
        check_compatible(params, feature_names)
    return params


def check_compatible(params: ModelParams, feature_names) -> None:
    names = list(feature_names)
    if len(names) != params.n_features:
        raise ShapeError(
            f"checkpoint expects n_f={params.n_features} features, dataset has n_f={len(names)}"
        )
    if features_hash(names) != features_hash(params.feature_names):
        raise ShapeError("checkpoint and dataset feature names differ")
