"""Declarative service configuration (config/rag.yaml).

Unknown keys are rejected and every constraint owned by the individual
modules is re-validated at load time. Environment variables override the
offload keys only (OFFLOAD_ENABLED, OFFLOAD_RELEASE_POLICY).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

import yaml

from .engine import RetrievalConfig, ScoreAdjustments
from .normalize import (
    DEFAULT_BANNER_LITERALS,
    DEFAULT_HEADER_PATTERNS,
    DEFAULT_REPLY_INTRO_PATTERNS,
    DEFAULT_SIGNATURE_PATTERNS,
    ChunkingPolicy,
    NormalizationRules,
)
from .synthetic import DEFAULT_DEPARTMENTS
from .variants import VariantWeights

DEFAULT_CONFIG_PATH = Path("config") / "rag.yaml"


class ConfigError(ValueError):
    pass


def _require_mapping(value, section: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"section {section!r} must be a mapping")
    return value


def _check_keys(d: dict, allowed, section: str) -> None:
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r} in section {section!r}")


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.5
    b: float = 0.75


@dataclass(frozen=True)
class VariantsConfig:
    weights: VariantWeights = field(default_factory=VariantWeights)
    lexicon_path: str | None = None
    dictionary_path: str | None = None
    typo_min_frequency: int = 5


@dataclass(frozen=True)
class IngestionConfig:
    overlap_hours: float = 48.0
    backup_retention: int = 5


@dataclass(frozen=True)
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    cors_origins: tuple = ()
    rt_base_url: str = "https://rt.example.org"


@dataclass(frozen=True)
class OffloadConfig:
    enabled: bool = False
    release_policy: str = "auto"  # auto | explicit_cancel
    queue_delay_seconds: float = 0.0

    def __post_init__(self) -> None:
        if self.release_policy not in ("auto", "explicit_cancel"):
            raise ConfigError(f"unknown release_policy {self.release_policy!r}")


@dataclass(frozen=True)
class ServiceConfig:
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    chunking: ChunkingPolicy = field(default_factory=ChunkingPolicy)
    bm25: Bm25Params = field(default_factory=Bm25Params)
    variants: VariantsConfig = field(default_factory=VariantsConfig)
    ingestion: IngestionConfig = field(default_factory=IngestionConfig)
    server: ServerConfig = field(default_factory=ServerConfig)
    offload: OffloadConfig = field(default_factory=OffloadConfig)
    normalization: NormalizationRules = field(default_factory=NormalizationRules)
    departments: tuple = DEFAULT_DEPARTMENTS


def _build(cls, payload: dict, section: str, converters: dict | None = None):
    converters = converters or {}
    names = [f.name for f in dc_fields(cls)]
    _check_keys(payload, names, section)
    kwargs = {}
    for name, value in payload.items():
        if name in converters:
            value = converters[name](value)
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid section {section!r}: {exc}") from exc


def config_from_dict(payload: dict) -> ServiceConfig:
    payload = _require_mapping(payload, "<root>")
    _check_keys(
        payload,
        [f.name for f in dc_fields(ServiceConfig)],
        "<root>",
    )

    retrieval_raw = _require_mapping(payload.get("retrieval"), "retrieval")
    retrieval = _build(
        RetrievalConfig,
        retrieval_raw,
        "retrieval",
        converters={
            "adjustments": lambda d: _build(
                ScoreAdjustments, _require_mapping(d, "retrieval.adjustments"),
                "retrieval.adjustments",
            ),
            "department_aliases": lambda d: dict(
                _require_mapping(d, "retrieval.department_aliases")
            ),
        },
    )
    chunking = _build(
        ChunkingPolicy, _require_mapping(payload.get("chunking"), "chunking"), "chunking"
    )
    bm25 = _build(Bm25Params, _require_mapping(payload.get("bm25"), "bm25"), "bm25")
    variants = _build(
        VariantsConfig,
        _require_mapping(payload.get("variants"), "variants"),
        "variants",
        converters={
            "weights": lambda d: _build(
                VariantWeights, _require_mapping(d, "variants.weights"), "variants.weights"
            )
        },
    )
    ingestion = _build(
        IngestionConfig, _require_mapping(payload.get("ingestion"), "ingestion"), "ingestion"
    )
    server = _build(
        ServerConfig,
        _require_mapping(payload.get("server"), "server"),
        "server",
        converters={"cors_origins": tuple},
    )
    offload = _build(
        OffloadConfig, _require_mapping(payload.get("offload"), "offload"), "offload"
    )
    normalization = _build(
        NormalizationRules,
        _require_mapping(payload.get("normalization"), "normalization"),
        "normalization",
        converters={
            "reply_intro_patterns": tuple,
            "header_patterns": tuple,
            "signature_patterns": tuple,
            "banner_literals": tuple,
        },
    )
    departments = tuple(payload.get("departments", DEFAULT_DEPARTMENTS))
    if not departments:
        raise ConfigError("departments must be a non-empty list")

    return ServiceConfig(
        retrieval=retrieval,
        chunking=chunking,
        bm25=bm25,
        variants=variants,
        ingestion=ingestion,
        server=server,
        offload=offload,
        normalization=normalization,
        departments=departments,
    )


def apply_env_overrides(config: ServiceConfig, env=os.environ) -> ServiceConfig:
    enabled = config.offload.enabled
    policy = config.offload.release_policy
    if "OFFLOAD_ENABLED" in env:
        enabled = env["OFFLOAD_ENABLED"].strip().lower() in ("1", "true", "yes", "on")
    if "OFFLOAD_RELEASE_POLICY" in env:
        policy = env["OFFLOAD_RELEASE_POLICY"].strip()
    offload = OffloadConfig(
        enabled=enabled,
        release_policy=policy,
        queue_delay_seconds=config.offload.queue_delay_seconds,
    )
    return ServiceConfig(
        retrieval=config.retrieval,
        chunking=config.chunking,
        bm25=config.bm25,
        variants=config.variants,
        ingestion=config.ingestion,
        server=config.server,
        offload=offload,
        normalization=config.normalization,
        departments=config.departments,
    )


def load_config(path=None, *, env=os.environ) -> ServiceConfig:
    """Load the YAML config; a missing default path yields built-in defaults."""
    if path is None:
        if DEFAULT_CONFIG_PATH.is_file():
            path = DEFAULT_CONFIG_PATH
        else:
            return apply_env_overrides(ServiceConfig(), env)
    with open(path, encoding="utf-8") as fh:
        payload = yaml.safe_load(fh) or {}
    return apply_env_overrides(config_from_dict(payload), env)
