"""Plain-text run configuration.

Format: sections in square brackets, ``key = value`` lines, ``#`` comments.
Every field has a default; unknown sections or keys are errors. Overrides use
dotted paths (``stages.low_res.steps=0``). ``format_config`` writes the fully
resolved snapshot, which reproduces the run when fed back in.
"""

from __future__ import annotations

import copy

from .errors import ConfigError
from .model import ModelConfig
from .sampler import GuidanceConfig, SamplerConfig
from .trainer import StagePlan

STAGE_ORDER = ("low_res", "high_res", "hq_tune")


def default_config() -> dict:
    return {
        "model": {
            "dim": 192,
            "heads": 6,
            "kv_heads": 2,
            "layers": 6,
            "text_processor_layers": 2,
            "image_processor_layers": 2,
            "patch_size": 2,
            "vocab_size": 64,
            "axes_split": (16, 8, 8),
            "rmsnorm_eps": 1e-5,
            "ffn_hidden": 0,
            "channels": 3,
            "t_embed_dim": 256,
            "rope_base": 128.0,
        },
        "data": {
            "n_total": 100000,
            "tier_fractions": (0.90, 0.09, 0.01),
            "seed": 7,
        },
        "train": {"seed": 0},
        "stages.low_res": {
            "resolution": 16,
            "tier": 1,
            "steps": 4000,
            "batch_size": 8,
            "lr": 8e-4,
            "lambda_aux": 0.0,
            "template": "A",
            "granularity_mix": (0.10, 0.40, 0.25, 0.25),
            "cond_dropout": 0.1,
            "aux_factor": 4,
            "warmup_steps": 100,
            "grad_clip": 1.0,
        },
        "stages.high_res": {
            "resolution": 32,
            "tier": 2,
            "steps": 800,
            "batch_size": 8,
            "lr": 8e-4,
            "lambda_aux": 1.0,
            "template": "A",
            "granularity_mix": (0.10, 0.40, 0.25, 0.25),
            "cond_dropout": 0.1,
            "aux_factor": 4,
            "warmup_steps": 100,
            "grad_clip": 1.0,
        },
        "stages.hq_tune": {
            "resolution": 32,
            "tier": 3,
            "steps": 400,
            "batch_size": 8,
            "lr": 8e-4,
            "lambda_aux": 1.0,
            "template": "B",
            "granularity_mix": (0.10, 0.40, 0.25, 0.25),
            "cond_dropout": 0.1,
            "aux_factor": 4,
            "warmup_steps": 100,
            "grad_clip": 1.0,
        },
        "sampler": {"solver": "euler", "steps": 10, "teacache_delta": None},
        "guidance": {"w": 4.0, "renorm": True, "trunc_alpha": 0.6, "renorm_scope": "sample"},
        "eval": {"n": 500, "seed": 123, "resolution": 32, "granularity": "short", "template": "B"},
    }


def _coerce(raw: str, default):
    raw = raw.strip()
    if default is None or (isinstance(default, float) and raw.lower() in ("none", "null")):
        if raw.lower() in ("none", "null", ""):
            return None
        return float(raw)
    if isinstance(default, bool):
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        parts = [p for p in raw.replace("(", "").replace(")", "").split(",") if p.strip()]
        elem = default[0] if default else 0.0
        return tuple(int(p) if isinstance(elem, int) else float(p) for p in parts)
    return raw


def _set_key(cfg: dict, section: str, key: str, raw: str) -> None:
    if section not in cfg:
        raise ConfigError(f"unknown config section [{section}]")
    if key not in cfg[section]:
        raise ConfigError(f"unknown key {key!r} in section [{section}]")
    cfg[section][key] = _coerce(raw, cfg[section][key])


def parse_config(text: str, base: dict | None = None) -> dict:
    cfg = copy.deepcopy(base) if base is not None else default_config()
    section = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in cfg:
                raise ConfigError(f"unknown config section [{section}] (line {lineno})")
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value' (line {lineno}): {line!r}")
        if section is None:
            raise ConfigError(f"key outside any section (line {lineno}): {line!r}")
        key, raw = line.split("=", 1)
        _set_key(cfg, section, key.strip(), raw)
    return cfg


def apply_overrides(cfg: dict, overrides) -> dict:
    """Dotted-path overrides: 'stages.low_res.steps=0'."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        path, raw = item.split("=", 1)
        path = path.strip().lstrip("-")
        if "." not in path:
            raise ConfigError(f"override path needs a section: {item!r}")
        section, key = path.rsplit(".", 1)
        _set_key(cfg, section, key, raw)
    return cfg


def _format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_config(cfg: dict) -> str:
    lines = []
    for section in cfg:
        lines.append(f"[{section}]")
        for key, value in cfg[section].items():
            lines.append(f"{key} = {_format_value(value)}")
        lines.append("")
    return "\n".join(lines)


def build_model_config(cfg: dict) -> ModelConfig:
    return ModelConfig(**cfg["model"])


def build_stage_plans(cfg: dict) -> list:
    plans = []
    for name in STAGE_ORDER:
        section = dict(cfg[f"stages.{name}"])
        plans.append(StagePlan(name=name, **section))
    return plans


def build_guidance(cfg: dict) -> GuidanceConfig:
    return GuidanceConfig(**cfg["guidance"])


def build_sampler_config(cfg: dict) -> SamplerConfig:
    return SamplerConfig(**cfg["sampler"])
