"""Run configuration files: flat ``key = value`` lines, ``#`` comments."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .data import DatasetSpec
from .spaces import ColourSpace
from .vqvae import VqvaeConfig


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> parser
_KEYS = {
    "K": int,
    "D": int,
    "input_space": ColourSpace.parse,
    "output_space": ColourSpace.parse,
    "hidden_channels": int,
    "image_side": int,
    "epochs": int,
    "learning_rate": float,
    "beta": float,
    "seed": int,
    "dataset": str,
    "dataset_path": str,
    "dataset_count": int,
    "dataset_seed": int,
    "output_dir": str,
    "evaluate": _bool,
}


@dataclass(frozen=True)
class RunConfig:
    model: VqvaeConfig
    dataset: DatasetSpec
    output_dir: Path
    evaluate: bool = True


def parse_config_text(text: str, base_dir=".") -> RunConfig:
    """Parse and validate a config; every problem is reported before any compute."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None

    model_keys = {f.name for f in fields(VqvaeConfig)}
    try:
        model = VqvaeConfig(**{k: v for k, v in values.items() if k in model_keys})
        dataset_path = values.get("dataset_path")
        if dataset_path is not None:
            dataset_path = str((Path(base_dir) / dataset_path).resolve())
        dataset = DatasetSpec(
            source=values.get("dataset", "synthetic"),
            image_side=model.image_side,
            count=values.get("dataset_count", 64),
            seed=values.get("dataset_seed", 0),
            path=dataset_path,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    output_dir = Path(base_dir) / values.get("output_dir", "run")
    return RunConfig(model, dataset, output_dir, values.get("evaluate", True))


def load_config(path) -> RunConfig:
    """Read a config file; relative paths inside resolve against its directory."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, base_dir=path.parent)


def format_config(run: RunConfig) -> str:
    m, d = run.model, run.dataset
    lines = [
        f"K = {m.K}",
        f"D = {m.D}",
        f"input_space = {m.input_space.short_name}",
        f"output_space = {m.output_space.short_name}",
        f"hidden_channels = {m.hidden_channels}",
        f"image_side = {m.image_side}",
        f"epochs = {m.epochs}",
        f"learning_rate = {m.learning_rate!r}",
        f"beta = {m.beta!r}",
        f"seed = {m.seed}",
        f"dataset = {d.source}",
        f"dataset_count = {d.count}",
        f"dataset_seed = {d.seed}",
        f"evaluate = {'true' if run.evaluate else 'false'}",
    ]
    if d.path:
        lines.append(f"dataset_path = {d.path}")
    return "\n".join(lines) + "\n"
