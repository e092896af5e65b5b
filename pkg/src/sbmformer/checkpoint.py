"""Checkpoint files: a text manifest followed by raw float32 payloads.

Layout (all header lines ASCII, terminated by a lone ``end`` line):

    sbmformer-checkpoint 1
    meta config_hash <hex or ->
    config <key> <value>        (one per resolved config key)
    tensor <name> <rows> <cols> <byte_offset>
    ...
    end
    <little-endian float32 payload, row-major, concatenated>

Offsets are relative to the byte right after ``end\n``. Vectors are stored
as one row. Loading restores float64 arrays whose float32 round-trip is
lossless.
"""

from __future__ import annotations

import numpy as np

from .encoder import EncoderModel, ModelConfig, init_model, named_params, set_param
from .errors import InputError

MAGIC = "sbmformer-checkpoint 1"


def save_model(model: EncoderModel, path, config_items: dict | None = None,
               config_hash: str | None = None) -> None:
    params = named_params(model)
    header = [MAGIC, f"meta config_hash {config_hash or '-'}"]
    for key, value in (config_items or {}).items():
        header.append(f"config {key} {value}")
    payloads = []
    offset = 0
    for name, arr in params.items():
        mat = arr if arr.ndim == 2 else arr.reshape(1, -1)
        raw = np.ascontiguousarray(mat, dtype="<f4").tobytes()
        header.append(f"tensor {name} {mat.shape[0]} {mat.shape[1]} {offset}")
        payloads.append(raw)
        offset += len(raw)
    header.append("end")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        for raw in payloads:
            fh.write(raw)


def read_checkpoint(path) -> tuple[str, dict[str, str], dict[str, np.ndarray]]:
    """Returns (config_hash, config items, name -> float64 array)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    marker = b"\nend\n"
    cut = blob.find(marker)
    if not blob.startswith(MAGIC.encode("ascii")) or cut < 0:
        raise InputError(f"{path} is not a checkpoint file")
    header = blob[:cut].decode("ascii").splitlines()[1:]
    payload = blob[cut + len(marker):]
    config_hash = "-"
    config_items: dict[str, str] = {}
    tensors: dict[str, np.ndarray] = {}
    for line in header:
        kind, rest = line.split(" ", 1)
        if kind == "meta":
            _, config_hash = rest.split(" ", 1)
        elif kind == "config":
            key, value = rest.split(" ", 1)
            config_items[key] = value
        elif kind == "tensor":
            name, rows, cols, offset = rest.rsplit(" ", 3)
            rows, cols, offset = int(rows), int(cols), int(offset)
            count = rows * cols
            arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
            tensors[name] = arr.astype(np.float64).reshape(rows, cols)
        else:
            raise InputError(f"unknown checkpoint header line: {line!r}")
    return config_hash, config_items, tensors


def load_model(path, config: ModelConfig | None = None) -> tuple[EncoderModel, str, dict[str, str]]:
    """Rebuild a model from a checkpoint (config taken from the file if not given)."""
    config_hash, items, tensors = read_checkpoint(path)
    if config is None:
        if not items:
            raise InputError(f"{path} carries no config lines; pass a ModelConfig")
        kw = {}
        for f, cast in (("n_layers", int), ("n_heads", int), ("d", int), ("d_ff", int),
                        ("k", int), ("vocab_size", int), ("max_seq_len", int),
                        ("dropout", float), ("attn_dropout", float), ("delta", float),
                        ("lambda_density", float), ("seed", int), ("n_classes", int)):
            if f in items:
                kw[f] = cast(items[f])
        if "self_loops" in items:
            kw["self_loops"] = items["self_loops"].lower() == "true"
        if "pooling" in items:
            kw["pooling"] = items["pooling"]
        config = ModelConfig(**kw)
    model = init_model(config)
    expected = named_params(model)
    missing = set(expected) - set(tensors)
    if missing:
        raise InputError(f"checkpoint is missing tensors: {sorted(missing)}")
    for name, arr in tensors.items():
        if name not in expected:
            raise InputError(f"checkpoint has unexpected tensor {name!r}")
        target = expected[name]
        set_param(model, name, arr.reshape(target.shape))
    return model, config_hash, items
