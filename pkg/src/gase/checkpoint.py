"""Single-file binary checkpoints: magic "GASE", a u32 format version,
length-prefixed named records (float32/float64 arrays or JSON blobs), and a
trailing CRC32 over everything before it."""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"GASE"
VERSION = 1

_KIND_F32 = 0
_KIND_F64 = 1
_KIND_JSON = 2


class IntegrityError(ValueError):
    """Checkpoint bytes fail the checksum or structural bounds."""


class VersionError(ValueError):
    """Checkpoint was written by an incompatible format version."""


@dataclass
class CheckpointState:
    params: dict[str, np.ndarray]
    extra_arrays: dict[str, np.ndarray] = field(default_factory=dict)
    opt_g: dict | None = None  # {"step": int, "m": {...}, "v": {...}}
    opt_d: dict | None = None
    epoch: int = 0
    rng_state: dict | None = None
    val_history: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)


def _pack_array(name: str, arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr)
    if arr.dtype == np.float64:
        kind, payload = _KIND_F64, arr.astype("<f8").tobytes()
    else:
        kind, payload = _KIND_F32, arr.astype("<f4").tobytes()
    name_b = name.encode()
    head = struct.pack("<I", len(name_b)) + name_b + struct.pack("<BI", kind, arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b""
    return head + struct.pack("<Q", len(payload)) + payload


def _pack_json(name: str, obj) -> bytes:
    payload = json.dumps(obj).encode()
    name_b = name.encode()
    head = struct.pack("<I", len(name_b)) + name_b + struct.pack("<BI", _KIND_JSON, 0)
    return head + struct.pack("<Q", len(payload)) + payload


def _opt_records(prefix: str, opt: dict | None):
    if opt is None:
        return []
    records = []
    for moment in ("m", "v"):
        for name, arr in opt[moment].items():
            records.append((f"{prefix}/{moment}/{name}", arr))
    return records


def save_checkpoint(path, state: CheckpointState) -> Path:
    records = bytearray()
    count = 0

    def emit(blob: bytes):
        nonlocal count
        records.extend(blob)
        count += 1

    meta = {
        "epoch": state.epoch,
        "rng_state": state.rng_state,
        "val_history": state.val_history,
        "config": state.config,
        "meta": state.meta,
        "opt_g_step": None if state.opt_g is None else state.opt_g["step"],
        "opt_d_step": None if state.opt_d is None else state.opt_d["step"],
    }
    emit(_pack_json("meta", meta))
    for name, arr in state.params.items():
        emit(_pack_array(f"param/{name}", arr))
    for name, arr in state.extra_arrays.items():
        emit(_pack_array(f"state/{name}", arr))
    for name, arr in _opt_records("opt_g", state.opt_g) + _opt_records("opt_d", state.opt_d):
        emit(_pack_array(name, arr))

    body = MAGIC + struct.pack("<II", VERSION, count) + bytes(records)
    blob = body + struct.pack("<I", zlib.crc32(body))
    path = Path(path)
    path.write_bytes(blob)
    return path


def load_checkpoint(path) -> CheckpointState:
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise IntegrityError(f"{path}: file too short ({len(raw)} bytes)")
    if raw[:4] != MAGIC:
        raise IntegrityError(f"{path}: bad magic bytes")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise VersionError(
            f"{path}: format version {version} is incompatible with {VERSION}"
        )
    (stored_crc,) = struct.unpack_from("<I", raw, len(raw) - 4)
    if zlib.crc32(raw[:-4]) != stored_crc:
        raise IntegrityError(f"{path}: CRC32 mismatch, file is corrupted")
    (count,) = struct.unpack_from("<I", raw, 8)

    offset = 12
    end = len(raw) - 4
    arrays: dict[str, np.ndarray] = {}
    meta_blob = None
    for _ in range(count):
        try:
            (name_len,) = struct.unpack_from("<I", raw, offset)
            offset += 4
            name = raw[offset : offset + name_len].decode()
            offset += name_len
            kind, ndim = struct.unpack_from("<BI", raw, offset)
            offset += 5
            shape = struct.unpack_from(f"<{ndim}I", raw, offset) if ndim else ()
            offset += 4 * ndim
            (payload_len,) = struct.unpack_from("<Q", raw, offset)
            offset += 8
            if offset + payload_len > end:
                raise IntegrityError(f"{path}: record {name!r} overruns file")
            payload = raw[offset : offset + payload_len]
            offset += payload_len
        except struct.error as exc:
            raise IntegrityError(f"{path}: truncated record at byte {offset}") from exc
        if kind == _KIND_JSON:
            meta_blob = json.loads(payload.decode()) if name == "meta" else meta_blob
        elif kind == _KIND_F32:
            arrays[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
        elif kind == _KIND_F64:
            arrays[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
        else:
            raise IntegrityError(f"{path}: unknown record kind {kind}")
    if meta_blob is None:
        raise IntegrityError(f"{path}: missing meta record")

    def take(prefix: str) -> dict[str, np.ndarray]:
        plen = len(prefix)
        return {n[plen:]: a for n, a in arrays.items() if n.startswith(prefix)}

    def opt_state(prefix: str, step):
        if step is None:
            return None
        return {
            "step": step,
            "m": take(f"{prefix}/m/"),
            "v": take(f"{prefix}/v/"),
        }

    return CheckpointState(
        params=take("param/"),
        extra_arrays=take("state/"),
        opt_g=opt_state("opt_g", meta_blob["opt_g_step"]),
        opt_d=opt_state("opt_d", meta_blob["opt_d_step"]),
        epoch=meta_blob["epoch"],
        rng_state=meta_blob["rng_state"],
        val_history=meta_blob["val_history"],
        config=meta_blob["config"],
        meta=meta_blob["meta"],
    )


def checkpoint_digest(path) -> str:
    import hashlib

    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]
