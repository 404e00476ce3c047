import logging
import os
import re
from pathlib import Path
from typing import Literal

import Levenshtein
import toml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .paths import expand_user_path

logger = logging.getLogger(__name__)

METHODS = ("standard", "lca", "hcc", "hcc-no-prune", "hcc-no-correction", "hcc-crc")
COVER_MODES = ("exhaustive", "depth-limited", "auto")
ENV_PREFIX = "HIERCP_"
DEFAULT_CONFIG_FILE = "hiercp.toml"


class RunConfigModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    taxonomy_path: str | None = None
    scores_path: str | None = None
    model_path: str | None = None
    alpha: float = 0.1
    beta: float | Literal["auto"] = "auto"
    method: Literal[METHODS + ("all",)] = "hcc"  # type: ignore[valid-type]
    split_ratio: float = 0.8
    seed: int = 0
    max_covers: int = Field(default=200_000, ge=1)
    cover_mode: Literal[COVER_MODES] = "auto"  # type: ignore[valid-type]
    renormalize: bool = False
    pad_empty: bool = False
    threads: int = Field(default=1, ge=1)
    output_path: str = "hiercp-out"
    betas: list[float] | None = None
    beta_points: int = Field(default=10, ge=1)

    @field_validator("alpha")
    @classmethod
    def alpha_in_range(cls, value):
        if not 0.0 <= value < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {value}")
        return value

    @field_validator("beta", mode="before")
    @classmethod
    def parse_beta(cls, value):
        if isinstance(value, str):
            value = value.strip().lower()
            if value == "auto":
                return value
            try:
                value = float(value)
            except ValueError:
                raise ValueError(f"beta must be a number or 'auto', got '{value}'") from None
        if value < 0:
            raise ValueError(f"beta must be nonnegative, got {value}")
        return value

    @field_validator("split_ratio")
    @classmethod
    def ratio_in_range(cls, value):
        if not 0.0 < value < 1.0:
            raise ValueError(f"split ratio must lie in (0, 1), got {value}")
        return value

    @field_validator("betas", mode="before")
    @classmethod
    def parse_betas(cls, value):
        if isinstance(value, str):
            value = [item for item in re.split(r"[,\s]+", value.strip()) if item]
        if value is not None:
            value = [float(item) for item in value]
            if not value:
                raise ValueError("beta list must not be empty")
            if any(item < 0 for item in value):
                raise ValueError("beta values must be nonnegative")
        return value


def rank_name_matches(name, candidates, limit=5):
    if not name:
        return []

    def normalize(value):
        if value is None:
            return ""
        value = str(value).lower()
        value = re.sub(r"[^a-z0-9]+", " ", value)
        return re.sub(r"\s+", " ", value).strip()

    needle = normalize(name)
    ranked = []
    for candidate in candidates:
        normalized = normalize(candidate)
        dist = Levenshtein.distance(normalized, needle, weights=(1, 1, 2))
        ratio = dist / max(len(normalized), len(needle), 1)

        if needle == normalized:
            rank = 0
        elif needle and needle in normalized:
            rank = 1
        elif needle and all(part in normalized for part in needle.split()):
            rank = 2
        elif ratio <= 0.45:
            rank = 3
        else:
            continue
        ranked.append((rank, ratio, dist, candidate))

    ranked.sort(key=lambda x: (x[0], x[1], x[2], x[3]))
    return [item[3] for item in ranked[:limit]]


def load_config_file(config_file=None):
    path = Path(config_file or DEFAULT_CONFIG_FILE)
    if not path.exists():
        if config_file:
            raise ValueError(f"Config file '{config_file}' does not exist")
        return {}
    try:
        data = toml.load(path)
    except (toml.TomlDecodeError, OSError) as exc:
        raise ValueError(f"Cannot read config file '{path}': {exc}") from exc
    section = data.get("run", {})
    logger.debug("load_config_file: path=%s keys=%s", path, sorted(section))
    return dict(section)


def env_overrides(environ=None):
    environ = os.environ if environ is None else environ
    overrides = {}
    for field_name in RunConfigModel.model_fields:
        key = ENV_PREFIX + field_name.upper()
        if key in environ:
            overrides[field_name] = environ[key]
    return overrides


def expand_config(raw):
    raw = dict(raw)
    for item in ["taxonomy_path", "scores_path", "model_path", "output_path"]:
        if raw.get(item) is not None:
            raw[item] = expand_user_path(raw.get(item))
    return raw


def resolve_run_config(config_file=None, cli_values=None, environ=None) -> RunConfigModel:
    merged = load_config_file(config_file)
    merged.update(env_overrides(environ))
    for key, value in (cli_values or {}).items():
        if value is not None:
            merged[key] = value
    try:
        return RunConfigModel.model_validate(expand_config(merged))
    except ValidationError as exc:
        problems = []
        for error in exc.errors():
            location = ".".join(str(part) for part in error.get("loc", ()))
            problems.append(f"'{location}' {error.get('msg', 'invalid value')}")
        raise ValueError("Invalid configuration:\n- " + "\n- ".join(problems)) from exc


def validate_run_config(cfg: RunConfigModel, *, require=(), command="run"):
    errors = []

    def require_path(key):
        value = getattr(cfg, key)
        if value is None or str(value).strip() == "":
            errors.append(f"'{key}' is required for {command}")
        elif not Path(value).exists():
            errors.append(f"'{key}' points to a missing file: {value}")

    for key in require:
        require_path(key)

    if cfg.method == "all" and command != "evaluate":
        errors.append(f"method 'all' is only supported by evaluate, not {command}")

    if errors:
        raise ValueError("Invalid configuration:\n- " + "\n- ".join(errors))
