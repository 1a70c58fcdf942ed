"""Experiment configuration: a TOML file with [dataset], [model], [train] and
[eval] sections.

Every key has a default; unknown sections or keys are errors.  The resolved
configuration (all defaults filled in) is hashed with SHA-256 over its
canonical JSON form, and that hash is stamped into every artifact.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .datagen import ForwardTMParams, PhysicalEnsembleParams
from .evaluation import DEFAULT_TAU
from .matrix import Family

FAMILIES = tuple(f.value for f in Family)

DEFAULTS = {
    "dataset": {"family": "forward", "n": 16, "count": 2200, "seed": 0},
    "model": {
        "name": "attention_fcnn",
        "seed": 0,
        "fcnn_width": 128,
        "fcnn_identity_init": True,
        "cnn_channels": [4, 8, 16, 24],
        "softmax_axis": "row",
        "attn_identity_gain": "auto",
        "init_eps": 0.01,
        "cond_ceiling": 1e8,
        "ae_bottleneck_frac": 0.04,
        "ae_hidden": "auto",
        "invert_hidden": "none",
    },
    "train": {
        "alpha": 0.2,
        "batch_size": 32,
        "max_epochs": 100,
        "patience": 10,
        "seed": 0,
        "lr": 1e-3,
        "decay": 1e-5,
        "decay_mode": "lr",
        "clip_norm": 10.0,
        "l1_target": "transformed",
    },
    "eval": {
        "tau": DEFAULT_TAU,
        "ls_ratio": True,
        "ls_epochs": 30,
        "ls_lr": 3e-3,
        "ls_batch_size": 32,
        "ls_max_retries": 2,
        "ladder_max_root": 0,  # 0 selects the default ceiling
        "ls_hidden": "auto",
    },
}

# family-specific generator parameters accepted in [dataset]
_FORWARD_KEYS = {f.name for f in dataclasses.fields(ForwardTMParams)} - {"n", "seed"}
_PHYSICAL_KEYS = {f.name for f in dataclasses.fields(PhysicalEnsembleParams)} - {"n", "seed"}


class ConfigError(ValueError):
    pass


def _hidden(value):
    """TOML has no null: "none" selects a linear network, "auto" the default width."""
    if value == "none":
        return None
    if value == "auto" or isinstance(value, int):
        return value
    raise ConfigError(f"hidden size must be an integer, 'auto' or 'none', got {value!r}")


def resolve(raw: dict | None = None) -> dict:
    """Merge ``raw`` over the defaults, rejecting unknown keys and checking types."""
    raw = raw or {}
    unknown = set(raw) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    out = copy.deepcopy(DEFAULTS)
    for section, values in raw.items():
        if not isinstance(values, dict):
            raise ConfigError(f"[{section}] must be a table")
        allowed = set(DEFAULTS[section])
        if section == "dataset":
            allowed |= _FORWARD_KEYS | _PHYSICAL_KEYS
        bad = set(values) - allowed
        if bad:
            raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(bad))}")
        for key, value in values.items():
            default = DEFAULTS[section].get(key)
            if isinstance(default, bool) and not isinstance(value, bool):
                raise ConfigError(f"[{section}] {key} must be a boolean")
            if isinstance(default, (int, float)) and not isinstance(default, bool):
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ConfigError(f"[{section}] {key} must be a number, got {value!r}")
                if isinstance(default, int) and not isinstance(value, int):
                    raise ConfigError(f"[{section}] {key} must be an integer, got {value!r}")
                if isinstance(default, float):
                    value = float(value)  # 1 and 1.0 hash identically
            out[section][key] = value
    _validate(out)
    return out


def _validate(cfg):
    ds = cfg["dataset"]
    if ds["family"] not in FAMILIES:
        raise ConfigError(f"[dataset] family must be one of {', '.join(FAMILIES)}")
    extra = set(ds) - set(DEFAULTS["dataset"])
    allowed = _PHYSICAL_KEYS if ds["family"] == "physical" else _FORWARD_KEYS
    if extra - allowed:
        raise ConfigError(f"key(s) {', '.join(sorted(extra - allowed))} do not apply to family {ds['family']}")
    for key in ("ae_hidden", "invert_hidden"):
        _hidden(cfg["model"][key])
    _hidden(cfg["eval"]["ls_hidden"])
    if cfg["model"]["attn_identity_gain"] != "auto" and not isinstance(cfg["model"]["attn_identity_gain"],
                                                                       (int, float)):
        raise ConfigError("[model] attn_identity_gain must be a number or 'auto'")


def load(path) -> dict:
    """Parse and resolve a TOML config file."""
    try:
        raw = tomllib.loads(Path(path).read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return resolve(raw)


def config_hash(cfg: dict) -> str:
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def dataset_params(cfg: dict):
    """Generator parameters for the [dataset] section."""
    ds = cfg["dataset"]
    extra = {k: v for k, v in ds.items() if k not in DEFAULTS["dataset"]}
    if ds["family"] == "physical":
        return PhysicalEnsembleParams(n=ds["n"], **extra)
    return ForwardTMParams(n=ds["n"], **extra)


def model_options(cfg: dict) -> dict:
    """Keyword arguments for :func:`fibretm.models.build_pipeline` (minus name, n and seed)."""
    m = cfg["model"]
    opts = {
        "fcnn_width": m["fcnn_width"],
        "fcnn_identity_init": m["fcnn_identity_init"],
        "cnn_channels": tuple(m["cnn_channels"]),
        "softmax_axis": m["softmax_axis"],
        "attn_identity_gain": m["attn_identity_gain"],
        "init_eps": m["init_eps"],
        "cond_ceiling": m["cond_ceiling"],
        "ae_bottleneck_frac": m["ae_bottleneck_frac"],
        "ae_hidden": _hidden(m["ae_hidden"]),
        "invert_hidden": _hidden(m["invert_hidden"]),
    }
    return opts


def train_config(cfg: dict, dataset_path=None):
    from .training import TrainConfig

    t = cfg["train"]
    return TrainConfig(model=cfg["model"]["name"], dataset=None if dataset_path is None else str(dataset_path),
                       model_options=model_options(cfg), **t)


def ls_options(cfg: dict) -> dict:
    e = cfg["eval"]
    return {"epochs": e["ls_epochs"], "lr": e["ls_lr"], "batch_size": e["ls_batch_size"],
            "max_retries": e["ls_max_retries"], "ladder_max_root": e["ladder_max_root"] or None,
            "hidden": _hidden(e["ls_hidden"])}


def dumps_toml(cfg: dict) -> str:
    """Render a resolved config back to TOML (flat tables of scalars and lists)."""
    lines = []
    for section in DEFAULTS:
        lines.append(f"[{section}]")
        for key, value in cfg[section].items():
            lines.append(f"{key} = {_toml_value(value)}")
        lines.append("")
    return "\n".join(lines)


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, float):
        return repr(v) if v == v and v not in (float("inf"), float("-inf")) else ("inf" if v > 0 else "-inf")
    return str(v)
