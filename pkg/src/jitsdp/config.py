"""Run configuration: TOML file, JITSDP_* environment overrides, flag overrides.

Precedence, lowest to highest: dataclass defaults, config file, environment,
explicit overrides passed by the caller (the CLI maps flags onto these).
Unknown sections or keys are errors, not warnings.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields

import tomli

from .balance import SmoteConfig, SmotePcConfig
from .curve import CurveConfig
from .data import WINDOW_90_DAYS
from .errors import ConfigError, PlanError
from .experiments import ExperimentPlan
from .nn.train import TrainConfig

ENV_PREFIX = "JITSDP_"


@dataclass(frozen=True)
class InputConfig:
    """Where the changeset CSV lives and how to read it."""

    path: str | None = None
    project: str = ""
    # canonical column name -> actual header in the file
    schema_map: dict[str, str] = field(default_factory=dict)
    # restrict the active feature set; None keeps the loader's default
    features: tuple[str, ...] | None = None


@dataclass(frozen=True)
class PreprocessConfig:
    log_transform: bool = True
    drop_collinear: bool = True
    collinear_threshold: float = 0.9
    drift_window_seconds: int = WINDOW_90_DAYS

    def __post_init__(self) -> None:
        if not 0.0 < self.collinear_threshold <= 1.0:
            raise ValueError(
                f"collinear_threshold must be in (0, 1], got {self.collinear_threshold}"
            )
        if self.drift_window_seconds < 1:
            raise ValueError("drift_window_seconds must be >= 1")


@dataclass(frozen=True)
class HarnessConfig:
    """Knobs shared by the experiment runners."""

    lookback: int = 6
    train_fraction: float = 0.8
    rq1_band: float = 0.03
    rq4_band: float = 0.005

    def __post_init__(self) -> None:
        if self.lookback < 1:
            raise ValueError("lookback must be >= 1")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        if self.rq1_band <= 0 or self.rq4_band <= 0:
            raise ValueError("comparison bands must be positive")


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs. The root seed feeds every random stream;
    train.seed and plan.seeds default to it when the file does not pin them."""

    seed: int
    out_dir: str = "out"
    input: InputConfig = field(default_factory=InputConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    curve: CurveConfig = field(default_factory=CurveConfig)
    balance: SmotePcConfig = field(default_factory=SmotePcConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    plan: ExperimentPlan = field(default_factory=ExperimentPlan)
    experiment: HarnessConfig = field(default_factory=HarnessConfig)


def config_digest(config: RunConfig) -> str:
    """First 12 hex digits of the sha256 over the sorted JSON form."""
    payload = json.dumps(asdict(config), sort_keys=True, default=str)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


# ------------------------------------------------------------------ loading

_TOP_KEYS = ("seed", "out_dir")
_SECTIONS = ("input", "preprocess", "curve", "balance", "train", "plan", "experiment")
_BALANCE_SUBS = ("smote", "curve")


def _field_names(cls) -> tuple[str, ...]:
    return tuple(f.name for f in fields(cls))


def _check_keys(given: dict, allowed: tuple[str, ...], where: str) -> None:
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _parse_env_value(text: str):
    lowered = text.strip().lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    if "," in text:
        return [_parse_env_value(part) for part in text.split(",")]
    for kind in (int, float):
        try:
            return kind(text)
        except ValueError:
            continue
    return text


def _env_path(name: str) -> list[str]:
    """Resolve JITSDP_FOO_BAR into a key path within the config tree."""
    tokens = name[len(ENV_PREFIX):].lower().split("_")
    if tokens[0] in _SECTIONS:
        section, rest = tokens[0], tokens[1:]
        if section == "balance" and rest and rest[0] in _BALANCE_SUBS:
            return [section, rest[0], "_".join(rest[1:])]
        return [section, "_".join(rest)]
    return ["_".join(tokens)]


def _set_path(tree: dict, path: list[str], value) -> None:
    node = tree
    for part in path[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override non-table key {part!r}")
    node[path[-1]] = value


def _apply_env(raw: dict, env) -> None:
    for name in sorted(env):
        if not name.startswith(ENV_PREFIX):
            continue
        path = _env_path(name)
        if path == [""] or path[-1] == "":
            raise ConfigError(f"cannot parse environment override {name}")
        _set_path(raw, path, _parse_env_value(env[name]))


def _build_section(cls, given: dict, where: str, **forced):
    _check_keys(given, _field_names(cls), where)
    merged = {**given, **forced}
    for key, value in merged.items():
        if isinstance(value, list):
            merged[key] = tuple(value)
    try:
        return cls(**merged)
    except (TypeError, ValueError, PlanError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def load_config(
    path: str | None = None,
    env=None,
    overrides: dict | None = None,
) -> RunConfig:
    """Assemble a RunConfig.

    `env` defaults to os.environ; pass a mapping to isolate tests.
    `overrides` uses dotted keys ("seed", "input.path", "train.epochs")
    and wins over both the file and the environment.
    """
    raw: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomli.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None

    _apply_env(raw, os.environ if env is None else env)

    for dotted, value in (overrides or {}).items():
        if value is not None:
            _set_path(raw, dotted.split("."), value)

    _check_keys(raw, _TOP_KEYS + _SECTIONS, "config")
    for name in _SECTIONS:
        if name in raw and not isinstance(raw[name], dict):
            raise ConfigError(f"[{name}] must be a table")

    if "seed" not in raw:
        raise ConfigError("seed is mandatory; set it in the file, JITSDP_SEED, or --seed")
    try:
        seed = int(raw["seed"])
    except (TypeError, ValueError):
        raise ConfigError(f"seed must be an integer, got {raw['seed']!r}") from None

    input_raw = dict(raw.get("input", {}))
    schema_map = input_raw.pop("schema_map", {})
    if not isinstance(schema_map, dict):
        raise ConfigError("[input] schema_map must be a table of column renames")
    input_cfg = _build_section(
        InputConfig, input_raw, "[input]",
        schema_map={str(k): str(v) for k, v in schema_map.items()},
    )
    if input_cfg.path is not None and not os.path.exists(input_cfg.path):
        raise ConfigError(f"input path does not exist: {input_cfg.path}")

    balance_raw = dict(raw.get("balance", {}))
    smote_raw = balance_raw.pop("smote", {})
    curve_raw = balance_raw.pop("curve", {})
    balance_cfg = _build_section(
        SmotePcConfig, balance_raw, "[balance]",
        smote=_build_section(SmoteConfig, smote_raw, "[balance.smote]"),
        curve=_build_section(CurveConfig, curve_raw, "[balance.curve]"),
    )

    train_raw = dict(raw.get("train", {}))
    train_raw.setdefault("seed", seed)
    plan_raw = dict(raw.get("plan", {}))
    plan_raw.setdefault("seeds", (seed,))

    return RunConfig(
        seed=seed,
        out_dir=str(raw.get("out_dir", "out")),
        input=input_cfg,
        preprocess=_build_section(PreprocessConfig, raw.get("preprocess", {}), "[preprocess]"),
        curve=_build_section(CurveConfig, raw.get("curve", {}), "[curve]"),
        balance=balance_cfg,
        train=_build_section(TrainConfig, train_raw, "[train]"),
        plan=_build_section(ExperimentPlan, plan_raw, "[plan]"),
        experiment=_build_section(HarnessConfig, raw.get("experiment", {}), "[experiment]"),
    )
