"""Self-describing binary tensor container plus the file formats built on it.

Single container layout (used standalone as `.ten` and embedded in the
prior-cache and checkpoint formats):

    magic  b"TEN1"
    rank   uint8
    extent uint32-LE per axis
    data   float64-LE, row-major

Prior cache record (one file per image): magic b"PRI1", image id
(uint16 length + utf-8), sample count uint32, alpha/beta float64, then the
reliability map as an embedded tensor block.

Checkpoint: magic b"CKP1", format version uint32, config JSON (uint32
length + utf-8, keys sorted), entry count uint32, then (name, tensor)
entries sorted by name. Byte layout is deterministic, so save/load/save
round-trips bit-exactly.

PGM files are 16-bit binary portable graymaps (maxval 65535,
most-significant byte first) for eyeballing images outside the toolchain.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

TENSOR_MAGIC = b"TEN1"
PRIOR_MAGIC = b"PRI1"
CHECKPOINT_MAGIC = b"CKP1"
CHECKPOINT_VERSION = 1


def _pack_tensor(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim > 0:  # ascontiguousarray would promote 0-d to 1-d
        arr = np.ascontiguousarray(arr)
    header = TENSOR_MAGIC + struct.pack("<B", arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + arr.astype("<f8").tobytes()


def _unpack_tensor(buf: bytes, offset: int) -> tuple[np.ndarray, int]:
    if buf[offset:offset + 4] != TENSOR_MAGIC:
        raise ValueError("not a tensor block (bad magic)")
    offset += 4
    (rank,) = struct.unpack_from("<B", buf, offset)
    offset += 1
    shape = struct.unpack_from(f"<{rank}I", buf, offset)
    offset += 4 * rank
    count = int(np.prod(shape)) if rank else 1
    end = offset + 8 * count
    if end > len(buf):
        raise ValueError("tensor block truncated")
    data = np.frombuffer(buf[offset:end], dtype="<f8").reshape(shape)
    return data.astype(np.float64), end


def write_tensor(path: str | Path, arr: np.ndarray) -> None:
    Path(path).write_bytes(_pack_tensor(arr))


def read_tensor(path: str | Path) -> np.ndarray:
    arr, end = _unpack_tensor(Path(path).read_bytes(), 0)
    return arr


def write_prior(path: str | Path, image_id: str, samples: int, alpha: float,
                beta: float, reliability: np.ndarray) -> None:
    ident = image_id.encode("utf-8")
    blob = PRIOR_MAGIC + struct.pack("<H", len(ident)) + ident
    blob += struct.pack("<I", samples) + struct.pack("<dd", alpha, beta)
    blob += _pack_tensor(reliability)
    Path(path).write_bytes(blob)


def read_prior(path: str | Path) -> tuple[str, int, float, float, np.ndarray]:
    buf = Path(path).read_bytes()
    if buf[:4] != PRIOR_MAGIC:
        raise ValueError(f"{path}: not a prior cache record")
    offset = 4
    (id_len,) = struct.unpack_from("<H", buf, offset)
    offset += 2
    image_id = buf[offset:offset + id_len].decode("utf-8")
    offset += id_len
    (samples,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    alpha, beta = struct.unpack_from("<dd", buf, offset)
    offset += 16
    reliability, _ = _unpack_tensor(buf, offset)
    return image_id, samples, alpha, beta, reliability


def save_checkpoint(path: str | Path, config: dict,
                    tensors: dict[str, np.ndarray]) -> None:
    blob = CHECKPOINT_MAGIC + struct.pack("<I", CHECKPOINT_VERSION)
    config_bytes = json.dumps(config, sort_keys=True).encode("utf-8")
    blob += struct.pack("<I", len(config_bytes)) + config_bytes
    blob += struct.pack("<I", len(tensors))
    for name in sorted(tensors):
        ident = name.encode("utf-8")
        blob += struct.pack("<H", len(ident)) + ident
        blob += _pack_tensor(tensors[name])
    Path(path).write_bytes(blob)


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    buf = Path(path).read_bytes()
    if buf[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    offset = 4
    (version,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    (cfg_len,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    config = json.loads(buf[offset:offset + cfg_len].decode("utf-8"))
    offset += cfg_len
    (count,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", buf, offset)
        offset += 2
        name = buf[offset:offset + name_len].decode("utf-8")
        offset += name_len
        tensors[name], offset = _unpack_tensor(buf, offset)
    return config, tensors


def save_model(path: str | Path, config, params) -> None:
    """Serialize a ModelConfig + ModelParams pair."""
    from dataclasses import asdict

    tensors = {name: t.data for name, t in params.named_parameters()}
    save_checkpoint(path, asdict(config), tensors)


def load_model(path: str | Path):
    """Rebuild (ModelConfig, ModelParams) from a checkpoint."""
    from .model import ModelConfig, ModelParams

    config_dict, tensors = load_checkpoint(path)
    config = ModelConfig(**config_dict)
    params = ModelParams.init(config, np.random.default_rng(0))
    names = {name for name, _ in params.named_parameters()}
    if names != set(tensors):
        missing = names - set(tensors)
        extra = set(tensors) - names
        raise ValueError(
            f"checkpoint does not match config (missing {sorted(missing)}, "
            f"unexpected {sorted(extra)})"
        )
    for name, t in params.named_parameters():
        if t.data.shape != tensors[name].shape:
            raise ValueError(
                f"{name}: checkpoint shape {tensors[name].shape} != "
                f"expected {t.data.shape}"
            )
        t.data[...] = tensors[name]
    return config, params


def write_pgm(path: str | Path, image: np.ndarray) -> None:
    """16-bit binary PGM; values are clipped to [0, 1] and scaled."""
    if image.ndim != 2:
        raise ValueError(f"PGM needs a 2-D image, got shape {image.shape}")
    scaled = np.round(np.clip(image, 0.0, 1.0) * 65535.0).astype(">u2")
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + scaled.tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    buf = Path(path).read_bytes()
    fields: list[bytes] = []
    offset = 0
    while len(fields) < 4:
        while offset < len(buf) and buf[offset:offset + 1].isspace():
            offset += 1
        if buf[offset:offset + 1] == b"#":
            while offset < len(buf) and buf[offset] != 0x0A:
                offset += 1
            continue
        start = offset
        while offset < len(buf) and not buf[offset:offset + 1].isspace():
            offset += 1
        fields.append(buf[start:offset])
    if fields[0] != b"P5" or fields[3] != b"65535":
        raise ValueError(f"{path}: expected a 16-bit binary PGM")
    width, height = int(fields[1]), int(fields[2])
    offset += 1  # single whitespace after maxval
    raw = np.frombuffer(buf[offset:offset + width * height * 2], dtype=">u2")
    return raw.reshape(height, width).astype(np.float64) / 65535.0
