"""Run configuration: a flat ``key = value`` text file.

Blank lines and lines starting with ``#`` or ``;`` are ignored.  Every key
must be one of the names in :data:`KEYS`; anything else is an error so that
typos never fall back silently to a default.

Example::

    # six repetitions, faster learning rate
    repetitions = 6
    learning_rate = 1e-4
    methods = multiple_image, single_image
"""
from __future__ import annotations

import configparser
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from . import __version__
from .evaluation import method_by_name
from .features import Variant
from .generator import GenTargets
from .model import TrainConfig

_SECTION = "run"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    count: int = 1213
    gen_seed: int = 0
    targets: GenTargets = field(default_factory=GenTargets)
    train: TrainConfig = field(default_factory=TrainConfig)
    repetitions: int = 20
    base_seed: int = 0
    methods: tuple[str, ...] = ("multiple_image",)
    variant: str = Variant.STANDARD.value

    def __post_init__(self):
        if self.count < 1:
            raise ConfigError("count must be at least 1")
        if self.repetitions < 2:
            raise ConfigError("repetitions must be at least 2")
        for m in self.methods:
            method_by_name(m)
        Variant(self.variant)


_GROUPS = {
    "targets": [f.name for f in fields(GenTargets)],
    "train": [f.name for f in fields(TrainConfig)],
}
_TOP = [f.name for f in fields(RunConfig) if f.name not in _GROUPS]
# training seeds derive from base_seed (one per repetition), so no separate key
KEYS = sorted(_TOP + _GROUPS["targets"] + [k for k in _GROUPS["train"] if k != "seed"])


def _convert(raw: str, like):
    if isinstance(like, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(raw)
    if isinstance(like, float):
        return float(raw)
    if isinstance(like, tuple):
        return tuple(p.strip() for p in raw.split(",") if p.strip())
    return raw


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                       comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(f"[{_SECTION}]\n" + text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    if parser.sections() != [_SECTION]:
        raise ConfigError(f"{source}: sections are not supported, use plain key = value lines")
    items = dict(parser[_SECTION])
    unknown = sorted(set(items) - set(KEYS))
    if unknown:
        raise ConfigError(f"{source}: unknown key {unknown[0]!r}")

    base = RunConfig()
    top, groups = {}, {"targets": {}, "train": {}}
    try:
        for key, raw in items.items():
            if key in _GROUPS["targets"]:
                groups["targets"][key] = _convert(raw, getattr(base.targets, key))
            elif key in _GROUPS["train"]:
                groups["train"][key] = _convert(raw, getattr(base.train, key))
            else:
                top[key] = _convert(raw, getattr(base, key))
        return replace(base, targets=replace(base.targets, **groups["targets"]),
                       train=replace(base.train, **groups["train"]), **top)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    return parse_config(Path(path).read_text(encoding="utf-8"), str(path))


def config_dict(config: RunConfig) -> dict:
    d = asdict(config)
    d["methods"] = list(config.methods)
    return d


def save_manifest(config: RunConfig, outcome: dict, path: str | Path, command: dict | None = None) -> None:
    """Record what ran: artifact version, the resolved config and the outcome."""
    doc = {"artifact_version": __version__, "command": command or {}, "config": config_dict(config),
           "outcome": outcome}
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
