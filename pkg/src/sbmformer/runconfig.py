"""Run configuration: typed keys, file parsing, hashing, and the run manifest.

Config files are ``key = value`` lines; ``#`` starts a comment and blank
lines are skipped. Every key has a declared type and default below, unknown
keys are rejected by name, and the resolved configuration hashes to a stable
sha256 so reruns can be matched to their settings.

The vocabulary is implied by the task: tokens are drawn from [1, seq_len]
with 0 reserved for padding, so ``vocab_size = seq_len + 1``.
"""

from __future__ import annotations

import hashlib

from .duplicates import TaskConfig
from .encoder import ModelConfig
from .errors import InputError

# key -> (type, default). "lambda" is the density-regularizer weight; it maps
# to ModelConfig.lambda_density (the bare name is reserved in Python).
SCHEMA: dict[str, tuple[type, object]] = {
    "seq_len": (int, 256),
    "n_layers": (int, 1),
    "n_heads": (int, 1),
    "d": (int, 32),
    "d_ff": (int, 32),
    "k": (int, 128),
    "dropout": (float, 0.0),
    "attn_dropout": (float, 0.0),
    "delta": (float, 0.01),
    "lambda": (float, 0.0),
    "self_loops": (bool, False),
    "pooling": (str, "none"),
    "batch_size": (int, 256),
    "steps": (int, 2000),
    "lr": (float, 1e-3),
    "seed": (int, 0),
    "ckpt_every": (int, 500),
    "eval_batches": (int, 4),
}


def defaults() -> dict:
    return {key: default for key, (_, default) in SCHEMA.items()}


def parse_value(key: str, text: str):
    """Parse ``text`` per the key's declared type; InputError on mismatch."""
    if key not in SCHEMA:
        raise InputError(f"unknown config key {key!r}")
    typ = SCHEMA[key][0]
    text = text.strip()
    try:
        if typ is bool:
            lowered = text.lower()
            if lowered in ("true", "1", "yes"):
                return True
            if lowered in ("false", "0", "no"):
                return False
            raise ValueError(text)
        if typ is int:
            return int(text, 10)
        if typ is float:
            return float(text)
        return text
    except ValueError:
        raise InputError(f"config key {key!r} expects {typ.__name__}, got {text!r}") from None


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def read_config(path: str, base: dict | None = None) -> dict:
    """Resolved config: defaults, overlaid by the file's assignments."""
    config = dict(base) if base is not None else defaults()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InputError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, _, text = line.partition("=")
            key = key.strip()
            config[key] = parse_value(key, text)
    return config


def config_hash(config: dict) -> str:
    """sha256 over the canonical sorted ``key=value`` rendering."""
    blob = "\n".join(f"{k}={format_value(config[k])}" for k in sorted(config))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def model_config(config: dict) -> ModelConfig:
    return ModelConfig(
        n_layers=config["n_layers"],
        n_heads=config["n_heads"],
        d=config["d"],
        d_ff=config["d_ff"],
        k=config["k"],
        vocab_size=config["seq_len"] + 1,
        max_seq_len=config["seq_len"],
        dropout=config["dropout"],
        attn_dropout=config["attn_dropout"],
        delta=config["delta"],
        lambda_density=config["lambda"],
        self_loops=config["self_loops"],
        pooling=config["pooling"],
        seed=config["seed"],
    )


def task_config(config: dict) -> TaskConfig:
    return TaskConfig(seq_len=config["seq_len"], batch_size=config["batch_size"],
                      seed=config["seed"])


def write_manifest(path: str, config: dict) -> None:
    """Record the fully resolved run settings next to the run's outputs."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("sbmformer-run 1\n")
        fh.write(f"config_hash {config_hash(config)}\n")
        for key in SCHEMA:
            fh.write(f"{key} = {format_value(config[key])}\n")
