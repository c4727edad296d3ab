"""Run configuration: ``key = value`` sections plus command-line overrides."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _str(text: str) -> str:
    return str(text).strip()


# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple]] = {
    "grid": {"nx": (int, 128), "ny": (int, 128)},
    "bc": {"hot": (float, 1.0), "cold": (float, 0.0)},
    "layout": {"case": (int, 1), "width": (int, None), "holes": (_str, None)},
    "solver": {"method": (_str, "sor"), "omega": (float, 1.9), "max_iterations": (int, 200_000),
               "tolerance": (float, 1e-8)},
    "train": {"epochs": (int, 1000), "batch": (int, 10), "lr": (float, 1e-3), "depth": (int, 7),
              "base_channels": (int, 8), "max_channels": (int, 256), "normalization": (_bool, True),
              "decoder_activation": (_str, "relu"), "dropout": (float, 0.0), "log_every": (int, 1), "checkpoint_every": (int, 0),
              "fixed_layout": (_bool, False)},
    "swarm": {"particles": (int, 10), "inertia": (float, 0.729), "cognitive": (float, 1.49445),
              "social": (float, 1.49445), "iterations": (int, 30), "quantize": (_bool, False)},
    "run": {"seed": (int, 0), "out_dir": (_str, "out"), "threads": (int, 1), "checkpoint": (_str, None),
            "backend": (_str, "oracle")},
}


@dataclass
class RunConfig:
    values: dict[str, dict] = field(default_factory=dict)

    def __getitem__(self, key: str):
        section, name = key.split(".")
        return self.values[section][name]


def parse_holes(text: str):
    """``"cx,cy,w,h; cx,cy,w,h"`` to a list of integer 4-tuples."""
    holes = []
    for chunk in text.split(";"):
        if not chunk.strip():
            continue
        parts = [int(p) for p in chunk.split(",")]
        if len(parts) != 4:
            raise ValueError(f"hole {chunk.strip()!r} needs cx,cy,w,h")
        holes.append(tuple(parts))
    return holes


def load_config(path=None, overrides: dict[str, object] | None = None) -> RunConfig:
    """Defaults, then the file at ``path``, then ``{"section.key": value}`` overrides.

    Unknown sections or keys raise :class:`ConfigError` naming the key.
    """
    values = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
    if path is not None:
        if not Path(path).exists():
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser(comment_prefixes=("#",), inline_comment_prefixes=("#",),
                                           interpolation=None)
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                _assign(values, section, key, raw)
    for dotted, raw in (overrides or {}).items():
        if raw is None:
            continue
        section, _, key = dotted.partition(".")
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        _assign(values, section, key, raw)
    return RunConfig(values)


def _assign(values, section, key, raw):
    if key not in SCHEMA[section]:
        raise ConfigError(f"unknown config key {section}.{key}")
    conv = SCHEMA[section][key][0]
    try:
        values[section][key] = raw if isinstance(raw, bool) and conv is _bool else conv(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {section}.{key}: {raw!r} ({exc})") from exc
