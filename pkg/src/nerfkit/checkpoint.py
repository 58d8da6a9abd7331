"""Versioned binary checkpoints for the coarse/fine network pair.

Layout: magic b"NRFK", format version (u32 LE), header length (u32 LE), a
UTF-8 JSON header (encoding config, architecture, layer shapes, iteration
counter, whether optimizer state is present, free-form metadata), then the
raw little-endian float32 arrays in header order.

Weights are always stored as float32.  Optimizer (Adam) moments roughly
triple the file size, so evaluation checkpoints can omit them; a checkpoint
without optimizer state cannot resume training.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass

import numpy as np

from nerfkit.encoding import EncodingConfig
from nerfkit.network import AdamState, MlpConfig, MlpParams

MAGIC = b"NRFK"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    encoding: EncodingConfig
    coarse: MlpParams
    fine: MlpParams
    coarse_adam: AdamState | None
    fine_adam: AdamState | None
    iteration: int
    metadata: dict

    @property
    def has_optimizer(self) -> bool:
        return self.coarse_adam is not None and self.fine_adam is not None


def _array_entries(ckpt: Checkpoint) -> list[tuple[str, np.ndarray]]:
    entries = []
    for net_name, params in (("coarse", ckpt.coarse), ("fine", ckpt.fine)):
        for k, a in params.arrays.items():
            entries.append((f"{net_name}/{k}", a))
    if ckpt.has_optimizer:
        for net_name, st in (("coarse", ckpt.coarse_adam), ("fine", ckpt.fine_adam)):
            for k, a in st.m.items():
                entries.append((f"{net_name}/adam_m/{k}", a))
            for k, a in st.v.items():
                entries.append((f"{net_name}/adam_v/{k}", a))
    return entries


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    entries = _array_entries(ckpt)
    header = {
        "encoding": dataclasses.asdict(ckpt.encoding),
        "coarse_config": dataclasses.asdict(ckpt.coarse.config),
        "fine_config": dataclasses.asdict(ckpt.fine.config),
        "iteration": ckpt.iteration,
        "has_optimizer": ckpt.has_optimizer,
        "adam_steps": ([ckpt.coarse_adam.step_count, ckpt.fine_adam.step_count]
                       if ckpt.has_optimizer else None),
        "arrays": [[name, list(a.shape)] for name, a in entries],
        "metadata": ckpt.metadata,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", FORMAT_VERSION, len(blob)))
        f.write(blob)
        for _, a in entries:
            f.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise ValueError(f"{path}: not a nerfkit checkpoint (magic {magic!r})")
        version, hlen = struct.unpack("<II", f.read(8))
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(f.read(hlen).decode("utf-8"))
        arrays = {}
        for name, shape in header["arrays"]:
            count = int(np.prod(shape)) if shape else 1
            buf = f.read(4 * count)
            if len(buf) != 4 * count:
                raise ValueError(f"{path}: truncated checkpoint at {name}")
            arrays[name] = np.frombuffer(buf, dtype="<f4").reshape(shape).copy()

    encoding = EncodingConfig(**header["encoding"])
    nets = {}
    adams = {}
    for net_name, cfg_key in (("coarse", "coarse_config"), ("fine", "fine_config")):
        cfg = MlpConfig(**header[cfg_key])
        nets[net_name] = MlpParams(cfg, {
            k: arrays[f"{net_name}/{k}"] for k in cfg.layer_shapes()
        })
        if header["has_optimizer"]:
            adams[net_name] = AdamState(
                m={k: arrays[f"{net_name}/adam_m/{k}"] for k in cfg.layer_shapes()},
                v={k: arrays[f"{net_name}/adam_v/{k}"] for k in cfg.layer_shapes()},
            )
    if header["has_optimizer"]:
        adams["coarse"].step_count, adams["fine"].step_count = header["adam_steps"]

    return Checkpoint(
        encoding=encoding,
        coarse=nets["coarse"],
        fine=nets["fine"],
        coarse_adam=adams.get("coarse"),
        fine_adam=adams.get("fine"),
        iteration=header["iteration"],
        metadata=header.get("metadata", {}),
    )
