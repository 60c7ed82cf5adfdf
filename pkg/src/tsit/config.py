"""Run configuration: INI files with [net], [train], [loss], [data] and [run]
sections.  Unknown sections or keys are rejected."""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .data import BatchLoader, DatasetSpec, ImageFolderDataset, make_synthetic_dataset
from .networks import NetConfig
from .train import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    source: str = "synthetic"  # synthetic | folder
    mode: str = "paired"  # paired | unpaired | semantic
    content_dir: str = ""
    style_dir: str = ""
    height: int = 256
    width: int = 256
    num_classes: int = 0
    synthetic_n: int = 8
    synthetic_palettes: int = 4
    seed: int = 0
    flip: bool = False


@dataclass
class RunSection:
    out_dir: str = "runs/default"
    metrics_file: str = "metrics.csv"
    checkpoint_file: str = "final.ckpt"
    manifest_file: str = "manifest.ini"


LOSS_KEYS = ("lambda_p", "lambda_fm", "distance", "extractor_seed", "extractor_weights")


@dataclass
class RunConfig:
    net: NetConfig = field(default_factory=NetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    run: RunSection = field(default_factory=RunSection)

    def validate(self) -> None:
        try:
            self.net.validate()
            self.train.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        d = self.data
        if d.source not in ("synthetic", "folder"):
            raise ConfigError(f"data.source must be synthetic or folder, got {d.source!r}")
        if d.mode not in ("paired", "unpaired", "semantic"):
            raise ConfigError(f"data.mode must be paired, unpaired or semantic, got {d.mode!r}")
        f = 2**self.net.k
        if d.height % f or d.width % f:
            raise ConfigError(f"data extent {d.height}x{d.width} is not divisible by 2^k = {f}")
        if d.mode == "semantic":
            if d.num_classes < 2:
                raise ConfigError("semantic mode needs data.num_classes >= 2")
            if self.net.content_channels != d.num_classes:
                raise ConfigError(f"net.content_channels ({self.net.content_channels}) must equal "
                                  f"data.num_classes ({d.num_classes}) in semantic mode")
        m = 2 ** (self.net.d_scales - 1 + self.net.d_layers)
        if d.height < m or d.width < m:
            raise ConfigError(f"data extent {d.height}x{d.width} is below the discriminator minimum {m}")


# -- value conversion ----------------------------------------------------------


def _field_types(obj) -> dict[str, object]:
    return {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj) if f.name != "extra"}


def _convert(section: str, key: str, raw: str, current):
    raw = raw.strip()
    try:
        if section == "net" and key == "schedule":
            return [int(v) for v in raw.replace(",", " ").split()] if raw else None
        if isinstance(current, bool):
            lowered = raw.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from None
    return raw


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ", ".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _sections(cfg: RunConfig) -> dict[str, tuple[object, tuple[str, ...]]]:
    train_keys = tuple(k for k in _field_types(cfg.train) if k not in LOSS_KEYS)
    return {
        "net": (cfg.net, tuple(_field_types(cfg.net))),
        "train": (cfg.train, train_keys),
        "loss": (cfg.train, LOSS_KEYS),
        "data": (cfg.data, tuple(_field_types(cfg.data))),
        "run": (cfg.run, tuple(_field_types(cfg.run))),
    }


def apply_values(cfg: RunConfig, values: dict[str, dict[str, str]]) -> RunConfig:
    """Apply string values ``{section: {key: raw}}`` onto ``cfg`` with strict key checking."""
    sections = _sections(cfg)
    pending: dict[str, dict] = {}
    for section, items in values.items():
        if section not in sections:
            raise ConfigError(f"unknown section [{section}]")
        obj, keys = sections[section]
        for key, raw in items.items():
            if key not in keys:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            target = "train" if section == "loss" else section
            pending.setdefault(target, {})[key] = _convert(section, key, raw, getattr(obj, key))
    net_changes = pending.pop("net", {})
    if net_changes:
        d = cfg.net.to_dict()
        if ("k" in net_changes or "base_width" in net_changes) and "schedule" not in net_changes:
            d["schedule"] = None  # re-derive the ladder
        d.update(net_changes)
        try:
            cfg.net = NetConfig.from_dict(d)
        except ValueError as exc:
            raise ConfigError(f"[net] {exc}") from None
    for section, changes in pending.items():
        obj = getattr(cfg, section)
        setattr(cfg, section, dataclasses.replace(obj, **changes))
    return cfg


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    values = {s: dict(parser.items(s)) for s in parser.sections()}
    cfg = apply_values(base or RunConfig(), values)
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text())


def parse_override(text: str) -> tuple[str, str, str]:
    """``section.key=value`` -> (section, key, value)."""
    if "=" not in text or "." not in text.split("=", 1)[0]:
        raise ConfigError(f"override must look like section.key=value, got {text!r}")
    lhs, value = text.split("=", 1)
    section, key = lhs.strip().split(".", 1)
    return section, key, value


def apply_overrides(cfg: RunConfig, overrides) -> RunConfig:
    values: dict[str, dict[str, str]] = {}
    for item in overrides:
        section, key, value = parse_override(item)
        values.setdefault(section, {})[key] = value
    apply_values(cfg, values)
    cfg.validate()
    return cfg


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for section, (obj, keys) in _sections(cfg).items():
        lines.append(f"[{section}]")
        for key in keys:
            value = getattr(obj, key)
            lines.append(f"{key} = {_format(value) if value is not None else ''}")
        lines.append("")
    return "\n".join(lines)


PRESETS = {
    "desk-style-transfer": """
[net]
k = 3
base_width = 16
d_base_width = 16
[train]
steps = 500
task = style_transfer
[loss]
lambda_p = 1.0
lambda_fm = 1.0
[data]
source = synthetic
mode = paired
height = 32
width = 32
synthetic_n = 8
[run]
out_dir = runs/desk-style-transfer
""",
    "desk-convergence": """
[net]
k = 3
base_width = 16
d_base_width = 16
[train]
steps = 2000
task = style_transfer
[loss]
lambda_p = 1.0
lambda_fm = 1.0
[data]
source = synthetic
mode = paired
height = 32
width = 32
synthetic_n = 8
[run]
out_dir = runs/desk-convergence
""",
    "desk-semantic": """
[net]
k = 3
base_width = 16
d_base_width = 16
content_channels = 4
[train]
steps = 500
task = semantic_synthesis
[loss]
lambda_p = 20.0
lambda_fm = 10.0
[data]
source = synthetic
mode = semantic
num_classes = 4
height = 32
width = 32
synthetic_n = 8
[run]
out_dir = runs/desk-semantic
""",
}


def preset(name: str) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return parse_config(PRESETS[name])


def build_dataset(data: DataConfig):
    if data.source == "synthetic":
        kind = "semantic" if data.mode == "semantic" else "style_transfer"
        return make_synthetic_dataset(kind, data.synthetic_n, data.height, data.width, data.seed,
                                      n_palettes=data.synthetic_palettes,
                                      num_classes=data.num_classes or 4, mode=data.mode)
    spec = DatasetSpec(data.mode, data.content_dir, data.style_dir, data.height, data.width, data.seed,
                       data.num_classes, data.flip)
    return ImageFolderDataset(spec)


def build_loader(cfg: RunConfig) -> BatchLoader:
    return BatchLoader(build_dataset(cfg.data), cfg.train.batch_size, cfg.data.seed, cfg.data.flip)
