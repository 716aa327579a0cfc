"""
Configuration
-------------
Defaults resolution (user file, repository file, built-in dictionary),
environment overrides and run-config parsing for the CLI.
"""
from __future__ import annotations

import configparser
import copy
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Final, Mapping

import yaml
from dotenv import load_dotenv

from choquetrl.errors import ConfigError

SEED_ENV: Final = "CHOQUET_SEED"
HOME_ENV: Final = "CHOQUETRL_HOME"

COMMANDS: Final = ("validate", "eval", "maximize", "solve-lq", "simulate", "compare")
OUTPUTS: Final = ("json", "csv")

REQUIRED_FIELDS: Final[dict[str, tuple[str, ...]]] = {
    "validate": ("distortion",),
    "eval": ("distortion", "distribution"),
    "maximize": ("distortion", "constraint"),
    "solve-lq": ("distortion", "model"),
    "simulate": ("distortion", "model"),
    "compare": ("distortions", "model", "xs"),
}

DEFAULT_CONFIG: Final[dict[str, Any]] = {
    "oracle": {"trials": 100_000, "atoms": 7, "seed": 0, "workers": 1},
    "sim": {
        "dt": 1e-3,
        "horizon": 10.0,
        "n_paths": 10_000,
        "seed": 0,
        "antithetic": False,
        "workers": 1,
        "batch_size": 512,
        "n_checkpoints": 10,
        "regularizer": "closed-form",
    },
    "validate": {"grid_size": 1001},
    "tables": {"size": 1025, "tol": 1e-7},
    "defaults": {"log": True},
}


def app_home() -> Path:
    return Path(os.environ.get(HOME_ENV) or Path.home() / "ChoquetRL")


def _merge(base: dict[str, Any], extra: Mapping[str, Any]) -> dict[str, Any]:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_defaults() -> dict[str, Any]:
    """Load configuration from defaults.yaml"""
    user_config_path = app_home() / "config" / "defaults.yaml"
    repo_config_path = Path(__file__).resolve().parent.parent / "config" / "defaults.yaml"

    for path in (user_config_path, repo_config_path):
        if path.exists():
            try:
                with open(path) as f:
                    loaded = yaml.safe_load(f) or {}
            except yaml.YAMLError as exc:
                raise ConfigError(f"cannot parse {path}: {exc}") from None
            if not isinstance(loaded, dict):
                raise ConfigError(f"{path} must hold a mapping")
            return _merge(DEFAULT_CONFIG, loaded)
    return copy.deepcopy(DEFAULT_CONFIG)


def load_environment() -> None:
    load_dotenv(app_home() / ".env")
    load_dotenv(Path.cwd() / ".env")


def resolve_seed(configured: int) -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return int(configured)
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


# ---------------------------------------------------------------------------
# Run configs
# ---------------------------------------------------------------------------
def parse_scalar(text: str) -> Any:
    """Decimal or scientific numbers, booleans, comma lists, else the string."""
    value = text.strip()
    if "," in value:
        return [parse_scalar(part) for part in value.split(",") if part.strip()]
    lowered = value.lower()
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


_RUN_SECTION: Final = "run"


def _read_sectioned(path: Path) -> dict[str, Any]:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path) as f:
            text = f.read()
        if not text.lstrip().startswith("["):
            text = f"[{_RUN_SECTION}]\n{text}"
        parser.read_string(text, source=str(path))
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None

    data: dict[str, Any] = {}
    for section in parser.sections():
        values = {key: parse_scalar(raw) for key, raw in parser.items(section)}
        if section == _RUN_SECTION:
            data.update(values)
        else:
            data[section] = values
    return data


def read_config_file(path: str | os.PathLike) -> dict[str, Any]:
    """Read a YAML or key = value run config into a plain mapping."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    if path.suffix.lower() in (".yaml", ".yml"):
        try:
            with open(path) as f:
                data = yaml.safe_load(f) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path} must hold a mapping")
        return data
    return _read_sectioned(path)


def _as_list(value: Any) -> list[Any]:
    if value is None:
        return []
    if isinstance(value, str):
        return [parse_scalar(part) for part in value.split(",") if part.strip()]
    if isinstance(value, (list, tuple)):
        return list(value)
    return [value]


def _distortion_entry(value: Any) -> dict[str, Any]:
    if isinstance(value, str):
        return {"kind": value}
    if isinstance(value, Mapping):
        return dict(value)
    raise ConfigError(f"distortion entries must be tags or mappings, got {value!r}")


@dataclass
class RunConfig:
    command: str
    distortion: dict[str, Any] | None = None
    distortions: list[dict[str, Any]] | None = None
    distribution: dict[str, Any] | None = None
    model: dict[str, Any] | None = None
    sim: dict[str, Any] = field(default_factory=dict)
    constraint: dict[str, Any] | None = None
    oracle: dict[str, Any] | None = None
    xs: list[float] = field(default_factory=list)
    x0: float = 0.0
    grid_size: int = 1001
    output: str = "json"
    output_path: str | None = None
    checkpoints_path: str | None = None

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        values = {k: v for k, v in data.items() if v is not None}
        if "command" not in values:
            raise ConfigError("config needs a command")

        if isinstance(values.get("distortion"), str):
            values["distortion"] = {"kind": values["distortion"]}
        if "distortions" in values:
            values["distortions"] = [_distortion_entry(v) for v in _as_list(values["distortions"])]
        if "xs" in values:
            try:
                values["xs"] = [float(x) for x in _as_list(values["xs"])]
            except (TypeError, ValueError):
                raise ConfigError(f"xs must be numbers, got {values['xs']!r}") from None
        for key in ("distortion", "distribution", "model", "sim", "constraint", "oracle"):
            if key in values and not isinstance(values[key], Mapping):
                raise ConfigError(f"{key} must be a mapping")
        try:
            values["x0"] = float(values.get("x0", 0.0))
            values["grid_size"] = int(values.get("grid_size", 1001))
        except (TypeError, ValueError):
            raise ConfigError("x0 and grid_size must be numeric") from None

        cfg = cls(**values)
        cfg.check()
        return cfg

    def check(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; choose from {list(COMMANDS)}")
        if self.output not in OUTPUTS:
            raise ConfigError(f"output must be one of {list(OUTPUTS)}")
        missing = [name for name in REQUIRED_FIELDS[self.command] if not getattr(self, name)]
        if missing:
            raise ConfigError(f"{self.command} needs {', '.join(missing)}")


def merge_overrides(base: Mapping[str, Any], overrides: Mapping[str, Any]) -> dict[str, Any]:
    """Explicit values win over file values; None means not given."""
    out = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, Mapping):
            given = {k: v for k, v in value.items() if v is not None}
            current = out.get(key)
            out[key] = {**current, **given} if isinstance(current, Mapping) else given
        else:
            out[key] = value
    return out


def schema_help() -> str:
    lines = ["Run config keys:"]
    lines += [f"  {f.name}" for f in fields(RunConfig)]
    lines.append("Required per command:")
    lines += [f"  {cmd}: {', '.join(req)}" for cmd, req in REQUIRED_FIELDS.items()]
    return "\n".join(lines)
