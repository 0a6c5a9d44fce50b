"""Self-describing binary checkpoints: magic + version, config echo, named
float32 parameter records, and per-group Adam state.  Everything is
little-endian; save -> load -> save is byte-identical."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .config import TrainConfig, format_config, parse_config
from .exceptions import CheckpointError, ConfigError
from .model import FusionModel
from .optim import Adam
from .tensor import Tensor

MAGIC = b"BAFU"
VERSION = 1

_GROUP_ORDER = ("backbone", "bag")


def _pack_u32(value: int) -> bytes:
    return struct.pack("<I", value)


def _pack_name(name: str) -> bytes:
    encoded = name.encode("utf-8")
    return _pack_u32(len(encoded)) + encoded


def _pack_array(arr: np.ndarray) -> bytes:
    dims = arr.shape
    head = _pack_u32(len(dims)) + b"".join(_pack_u32(d) for d in dims)
    return head + np.ascontiguousarray(arr, dtype="<f4").tobytes()


class _Cursor:
    """Sequential reader that reports the byte offset of any shortfall."""

    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, count: int, what: str) -> bytes:
        if count < 0 or self.pos + count > len(self.blob):
            raise CheckpointError(f"truncated checkpoint while reading {what}", offset=self.pos)
        chunk = self.blob[self.pos:self.pos + count]
        self.pos += count
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def name(self, what: str) -> str:
        length = self.u32(f"{what} length")
        raw = self.take(length, what)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointError(f"malformed {what}", offset=self.pos - length) from None

    def array(self, what: str, expect_shape: tuple[int, ...] | None = None) -> np.ndarray:
        rank_offset = self.pos
        rank = self.u32(f"{what} rank")
        if rank != 4:
            raise CheckpointError(f"{what}: rank must be 4; got {rank}", offset=rank_offset)
        dims = tuple(self.u32(f"{what} extent") for _ in range(rank))
        if expect_shape is not None and dims != expect_shape:
            raise CheckpointError(
                f"{what}: stored shape {dims} does not match expected {expect_shape}",
                offset=rank_offset,
            )
        count = int(np.prod(dims)) if dims else 0
        payload = self.take(count * 4, f"{what} payload")
        return np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)


def save_checkpoint(path, model: FusionModel, optimizers: dict[str, Adam],
                    global_step: int, config: TrainConfig) -> None:
    """Serialize model parameters and optimizer state for the two groups."""
    for group in _GROUP_ORDER:
        if group not in optimizers:
            raise CheckpointError(f"missing optimizer group {group!r}")
    out = bytearray()
    out += MAGIC
    out += _pack_u32(VERSION)
    config_bytes = format_config(config).encode("utf-8")
    out += _pack_u32(len(config_bytes)) + config_bytes
    out += _pack_u32(global_step)
    params = model.parameters()
    out += _pack_u32(len(params))
    for name, tensor in params.items():
        out += _pack_name(name)
        out += _pack_array(tensor.data)
    out += _pack_u32(len(_GROUP_ORDER))
    for group in _GROUP_ORDER:
        opt = optimizers[group]
        out += _pack_name(group)
        out += _pack_u32(opt.step_count)
        out += _pack_u32(len(opt.params))
        for pname in opt.params:
            out += _pack_name(pname)
            out += _pack_array(opt.m[pname])
            out += np.ascontiguousarray(opt.v[pname], dtype="<f4").tobytes()
    Path(path).write_bytes(bytes(out))


def load_checkpoint(path) -> tuple[FusionModel, dict[str, Adam], int, TrainConfig]:
    """Rebuild model + optimizers; raises CheckpointError before returning
    anything if the file is malformed (no partially-loaded model escapes)."""
    cursor = _Cursor(Path(path).read_bytes())
    magic = cursor.take(4, "magic")
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}; expected {MAGIC!r}", offset=0)
    version_offset = cursor.pos
    version = cursor.u32("version")
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version}; expected {VERSION}",
                              offset=version_offset)
    config_offset = cursor.pos
    config_len = cursor.u32("config length")
    raw_config = cursor.take(config_len, "config echo")
    try:
        config = parse_config(raw_config.decode("utf-8"))
    except (UnicodeDecodeError, ConfigError) as exc:
        raise CheckpointError(f"invalid config echo: {exc}", offset=config_offset) from None
    global_step = cursor.u32("global step")

    model = FusionModel.create(seed=config.seed, channels=config.channels,
                               eps_gate=config.eps_gate, eps_norm=config.eps_norm,
                               force_full_norm=config.disable_bag)
    expected = model.parameters()
    n_params = cursor.u32("parameter count")
    if n_params != len(expected):
        raise CheckpointError(
            f"parameter count {n_params} does not match model ({len(expected)})",
            offset=cursor.pos - 4,
        )
    seen: set[str] = set()
    for _ in range(n_params):
        name = cursor.name("parameter name")
        if name not in expected or name in seen:
            raise CheckpointError(f"unexpected parameter record {name!r}", offset=cursor.pos)
        seen.add(name)
        expected[name].data = cursor.array(f"parameter {name}",
                                           expect_shape=expected[name].data.shape)

    groups: dict[str, dict[str, Tensor]] = {
        "backbone": model.backbone_parameters(),
        "bag": model.bag_parameters(),
    }
    optimizers: dict[str, Adam] = {}
    n_groups = cursor.u32("group count")
    if n_groups != len(_GROUP_ORDER):
        raise CheckpointError(f"optimizer group count {n_groups}; expected {len(_GROUP_ORDER)}",
                              offset=cursor.pos - 4)
    for _ in range(n_groups):
        gname = cursor.name("group name")
        if gname not in groups or gname in optimizers:
            raise CheckpointError(f"unexpected optimizer group {gname!r}", offset=cursor.pos)
        group_params = groups[gname]
        opt = Adam(group_params, lr=config.lr)
        opt.step_count = cursor.u32("group step count")
        n_entries = cursor.u32("group entry count")
        if n_entries != len(group_params):
            raise CheckpointError(
                f"group {gname!r} entry count {n_entries}; expected {len(group_params)}",
                offset=cursor.pos - 4,
            )
        for _ in range(n_entries):
            pname = cursor.name("state entry name")
            if pname not in group_params:
                raise CheckpointError(f"state entry {pname!r} not in group {gname!r}",
                                      offset=cursor.pos)
            shape = group_params[pname].data.shape
            opt.m[pname] = cursor.array(f"first moment of {pname}", expect_shape=shape)
            payload = cursor.take(int(np.prod(shape)) * 4, f"second moment of {pname}")
            opt.v[pname] = np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float32)
        optimizers[gname] = opt
    if cursor.pos != len(cursor.blob):
        raise CheckpointError("trailing bytes after checkpoint payload", offset=cursor.pos)
    return model, optimizers, global_step, config
