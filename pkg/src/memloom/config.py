"""Engine configuration: defaults < config file < environment < flags.

The file format is plain INI with [engine] and [backend] sections; any key
can be overridden by an environment variable MEMLOOM_<SECTION>_<KEY>.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Optional

from .cluster import THREAD_THETA, TOPIC_THETA, ThetaParams
from .errors import MalformedInput
from .gateway import BackendConfig

_ENV_PREFIX = "MEMLOOM"

_ENGINE_KEYS = {
    "data_dir": str,
    "embedding_dimension": int,
    "retrieval_k": int,
    "variance_target": float,
    "seed": int,
    "topic_n_neighbors": int,
    "topic_min_cluster_size": int,
    "thread_n_neighbors": int,
    "thread_min_cluster_size": int,
}

_BACKEND_KEYS = {
    "kind": str,
    "endpoint_url": str,
    "chat_model": str,
    "embed_model": str,
    "api_key_env": str,
    "timeout_s": float,
    "max_retries": int,
    "max_in_flight": int,
}


@dataclass(frozen=True)
class EngineConfig:
    backend: BackendConfig = field(default_factory=BackendConfig)
    data_dir: Path = Path("memloom-data")
    embedding_dimension: int = 64
    retrieval_k: int = 10
    variance_target: float = 0.95
    seed: int = 7
    theta_topic: ThetaParams = TOPIC_THETA
    theta_thread: ThetaParams = THREAD_THETA

    def __post_init__(self):
        if self.embedding_dimension < 1:
            raise ValueError("embedding_dimension must be positive")
        if self.retrieval_k < 1:
            raise ValueError("retrieval_k must be >= 1")
        if not 0.0 < self.variance_target <= 1.0:
            raise ValueError("variance_target must be in (0, 1]")


def _read_file(path: Path) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise MalformedInput(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise MalformedInput(f"bad config {path}: {exc}") from exc
    return {section: dict(parser[section]) for section in parser.sections()}


def _env_overrides(env: Mapping[str, str]) -> dict[str, dict[str, str]]:
    out: dict[str, dict[str, str]] = {"engine": {}, "backend": {}}
    for section, keys in (("engine", _ENGINE_KEYS), ("backend", _BACKEND_KEYS)):
        for key in keys:
            value = env.get(f"{_ENV_PREFIX}_{section.upper()}_{key.upper()}")
            if value is not None:
                out[section][key] = value
    return out


def _coerce(section: str, key: str, value: str, caster) -> object:
    try:
        return caster(value)
    except (TypeError, ValueError) as exc:
        raise MalformedInput(f"config [{section}] {key}={value!r}: {exc}") from exc


def load_config(
    path: Optional[str | Path] = None,
    env: Optional[Mapping[str, str]] = None,
    flag_overrides: Optional[dict[str, dict[str, str]]] = None,
) -> EngineConfig:
    """Assemble the effective config. flag_overrides wins over env over file."""
    env = os.environ if env is None else env
    merged: dict[str, dict[str, str]] = {"engine": {}, "backend": {}}
    layers = []
    if path is not None:
        layers.append(_read_file(Path(path)))
    layers.append(_env_overrides(env))
    if flag_overrides:
        layers.append(flag_overrides)
    for layer in layers:
        for section in ("engine", "backend"):
            merged[section].update(layer.get(section, {}))

    engine_raw = merged["engine"]
    backend_raw = merged["backend"]
    for key in engine_raw:
        if key not in _ENGINE_KEYS:
            raise MalformedInput(f"unknown [engine] config key {key!r}")
    for key in backend_raw:
        if key not in _BACKEND_KEYS:
            raise MalformedInput(f"unknown [backend] config key {key!r}")

    backend_kwargs = {
        key: _coerce("backend", key, value, _BACKEND_KEYS[key]) for key, value in backend_raw.items()
    }
    backend = BackendConfig(**backend_kwargs)

    engine_values = {
        key: _coerce("engine", key, value, _ENGINE_KEYS[key]) for key, value in engine_raw.items()
    }
    theta_topic = ThetaParams(
        n_neighbors=engine_values.pop("topic_n_neighbors", TOPIC_THETA.n_neighbors),
        min_cluster_size=engine_values.pop("topic_min_cluster_size", TOPIC_THETA.min_cluster_size),
    )
    theta_thread = ThetaParams(
        n_neighbors=engine_values.pop("thread_n_neighbors", THREAD_THETA.n_neighbors),
        min_cluster_size=engine_values.pop("thread_min_cluster_size", THREAD_THETA.min_cluster_size),
    )
    if "data_dir" in engine_values:
        engine_values["data_dir"] = Path(engine_values["data_dir"])
    return EngineConfig(
        backend=backend,
        theta_topic=theta_topic,
        theta_thread=theta_thread,
        **engine_values,
    )


def with_seed(config: EngineConfig, seed: int) -> EngineConfig:
    return replace(config, seed=seed)
