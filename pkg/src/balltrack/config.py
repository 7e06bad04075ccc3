"""Layered run configuration.

Configuration comes from three layers with increasing precedence: dataclass
defaults, a flat key-value config file, then command-line flags. Keys are
dotted (section.field), e.g. `infer.gate_radius = 25`. Lines starting with #
and blank lines are ignored. Unknown keys are rejected.

The effective merged configuration is echoed as config.txt into every output
directory; the echoed file parses back to the identical configuration.
"""

import dataclasses
import os
from pathlib import Path
from typing import Callable, NamedTuple

from .errors import UsageError
from .inference import InferenceConfig
from .loss import LossConfig
from .metrics import EvalConfig
from .model import NetworkConfig
from .targets import GtMapConfig
from .train import TrainConfig

ENV_CONFIG = "BALLTRACK_CONFIG"


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def _parse_int_list(raw: str) -> tuple:
    return tuple(int(part) for part in raw.split(","))


def _parse_size(raw: str) -> tuple:
    parts = raw.lower().replace("x", ",").split(",")
    if len(parts) != 2:
        raise ValueError(f"expected two integers like 288x512, got {raw!r}")
    return (int(parts[0]), int(parts[1]))


def _parse_opt_int(raw: str):
    if raw.strip().lower() == "none":
        return None
    return int(raw)


def _fmt_default(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _fmt_size(value) -> str:
    return f"{value[0]}x{value[1]}"


def _fmt_int_list(value) -> str:
    return ",".join(str(v) for v in value)


class _Key(NamedTuple):
    parse: Callable
    fmt: Callable = _fmt_default


SCHEMA = {
    "net.n_frames": _Key(int),
    "net.stem_variant": _Key(str),
    "net.branch_widths": _Key(_parse_int_list, _fmt_int_list),
    "net.blocks_per_branch": _Key(int),
    "net.input_size": _Key(_parse_size, _fmt_size),  # HxW
    "train.epochs": _Key(int),
    "train.batch_size": _Key(int),
    "train.optimizer": _Key(str),
    "train.learning_rate": _Key(float),
    "train.hlsm_epoch": _Key(_parse_opt_int),
    "train.hlsm_threshold": _Key(float),
    "train.seed": _Key(int),
    "infer.step": _Key(int),
    "infer.localization": _Key(str),
    "infer.use_tracker": _Key(_parse_bool),
    "infer.gate_radius": _Key(float),
    "infer.connectivity": _Key(int),
    "infer.miss_reset": _Key(int),
    "infer.batch_size": _Key(int),
    "eval.tau": _Key(float),
    "gtmap.d": _Key(float),
    "gtmap.c_min": _Key(float),
    "gtmap.mode": _Key(str),
    "loss.beta": _Key(float),
    "loss.reduction": _Key(str),
    "synth.n_clips": _Key(int),
    "synth.frames_per_clip": _Key(int),
    "synth.size": _Key(_parse_size, _fmt_size),  # WxH
    "synth.ball_radius": _Key(float),
    "synth.n_distractors": _Key(int),
    "synth.motion": _Key(str),
    "synth.occlusion_rate": _Key(float),
    "synth.camera_jitter": _Key(float),
    "synth.seed": _Key(int),
}

SECTION_CLASSES = {
    "net": NetworkConfig,
    "train": TrainConfig,
    "infer": InferenceConfig,
    "eval": EvalConfig,
    "gtmap": GtMapConfig,
    "loss": LossConfig,
}
# SynthConfig has required fields, so it is built explicitly by the CLI.


def parse_config_file(path) -> dict:
    """Typed values keyed by dotted name; raises UsageError with file:line."""
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    values = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in SCHEMA:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            values[key] = SCHEMA[key].parse(raw)
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return values


def parse_override(key: str, raw: str):
    if key not in SCHEMA:
        raise UsageError(f"unknown config key {key!r}")
    try:
        return SCHEMA[key].parse(raw)
    except ValueError as exc:
        raise UsageError(f"bad value for {key}: {exc}") from exc


def default_config_path() -> str | None:
    return os.environ.get(ENV_CONFIG) or None


def merge_layers(config_path, overrides: dict) -> dict:
    """File values (if any) overridden by typed flag values."""
    values = parse_config_file(config_path) if config_path else {}
    values.update(overrides)
    return values


def build_section(prefix: str, values: dict, cls=None):
    """Instantiate a section dataclass from the merged dotted-key values."""
    if cls is None:
        cls = SECTION_CLASSES[prefix]
    kwargs = {}
    for key, value in values.items():
        section, _, field = key.partition(".")
        if section == prefix:
            kwargs[field] = value
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"invalid {prefix} configuration: {exc}") from exc


def echo_config(out_dir, sections: dict) -> None:
    """Write the effective configuration of the given sections to config.txt."""
    lines = ["# effective configuration"]
    for prefix in sorted(sections):
        instance = sections[prefix]
        for field in dataclasses.fields(instance):
            key = f"{prefix}.{field.name}"
            fmt = SCHEMA[key].fmt if key in SCHEMA else _fmt_default
            lines.append(f"{key} = {fmt(getattr(instance, field.name))}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tmp = out_dir / "config.txt.tmp"
    tmp.write_text("\n".join(lines) + "\n")
    os.replace(tmp, out_dir / "config.txt")
