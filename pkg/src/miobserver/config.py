"""Flat text configuration: one ``key = value`` per line.

Lines are independent; ``#`` starts a comment, blank lines are skipped.
Keys are the field names of ModelConfig and TrainConfig, routed by name,
plus ``preset`` which seeds the model config from a named preset before
any explicit keys are applied. List-valued fields use commas:

    preset = C_T
    window = 8
    alpha = 0.5, 1.0, 1.0, 1.0, 0.75, 0.75, 1.0, 1.0
    lr = 0.0003

Unknown keys, duplicate keys, and malformed values raise ParseError with
the offending line number.
"""

from __future__ import annotations

from dataclasses import replace

from .errors import ParseError
from .model import ModelConfig, preset
from .train import TrainConfig

MODEL_KEYS = frozenset(ModelConfig.__dataclass_fields__)
TRAIN_KEYS = frozenset(TrainConfig.__dataclass_fields__)

_TUPLE_STR = {"head_inputs"}
_TUPLE_FLOAT = {"alpha"}
_FLOAT = {"dropout_embed", "dropout_head", "gamma", "lr", "clip_norm"}
_INT = {"heads", "hops", "window", "d_w", "d_h", "d_s", "min_count",
        "batch_size", "max_epochs", "patience", "seed"}


def _coerce(key: str, raw: str, line: int | None):
    try:
        if key in _TUPLE_STR:
            return tuple(p.strip() for p in raw.split(",") if p.strip())
        if key in _TUPLE_FLOAT:
            return tuple(float(p) for p in raw.split(",") if p.strip())
        if key in _FLOAT:
            return float(raw)
        if key in _INT:
            return int(raw)
        return raw
    except ValueError:
        raise ParseError(f"bad value {raw!r} for {key}", line=line) from None


def parse_config(text: str) -> tuple[str | None, dict, dict]:
    """Split config text into (preset name, model fields, train fields)."""
    preset_name: str | None = None
    model_kv: dict = {}
    train_kv: dict = {}
    seen: set[str] = set()
    for i, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", line=i)
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not key:
            raise ParseError("empty key", line=i)
        if key in seen:
            raise ParseError(f"duplicate key {key!r}", line=i)
        seen.add(key)
        if key == "preset":
            preset_name = val
        elif key in MODEL_KEYS:
            model_kv[key] = _coerce(key, val, i)
        elif key in TRAIN_KEYS:
            train_kv[key] = _coerce(key, val, i)
        else:
            raise ParseError(f"unknown key {key!r}", line=i)
    return preset_name, model_kv, train_kv


def build_configs(
    preset_name: str | None, model_kv: dict, train_kv: dict
) -> tuple[ModelConfig, TrainConfig]:
    base = preset(preset_name) if preset_name else ModelConfig()
    mcfg = replace(base, **model_kv) if model_kv else base
    tcfg = TrainConfig(**train_kv)
    return mcfg, tcfg


def load_config(path: str) -> tuple[ModelConfig, TrainConfig]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read config file {path}: {exc}") from exc
    return build_configs(*parse_config(text))


def apply_overrides(
    mcfg: ModelConfig, tcfg: TrainConfig, pairs: list[str]
) -> tuple[ModelConfig, TrainConfig]:
    """Apply ``key=value`` strings (command line --set) on top of configs."""
    for pair in pairs:
        if "=" not in pair:
            raise ParseError(f"override {pair!r} is not key=value")
        key, _, val = pair.partition("=")
        key, val = key.strip(), val.strip()
        if key == "preset":
            mcfg = preset(val)
        elif key in MODEL_KEYS:
            mcfg = replace(mcfg, **{key: _coerce(key, val, None)})
        elif key in TRAIN_KEYS:
            tcfg = replace(tcfg, **{key: _coerce(key, val, None)})
        else:
            raise ParseError(f"unknown key {key!r}")
    return mcfg, tcfg


def format_config(mcfg: ModelConfig, tcfg: TrainConfig) -> str:
    """Render configs back to the flat text form (parse round-trips)."""
    lines = []
    for key, val in mcfg.to_dict().items():
        if isinstance(val, list):
            lines.append(f"{key} = {', '.join(str(v) for v in val)}")
        else:
            lines.append(f"{key} = {val}")
    for key, val in tcfg.to_dict().items():
        lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"
