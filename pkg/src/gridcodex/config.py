"""Engine configuration: provider role assignments, retrieval and guardrail
settings, data directory layout. Loaded from YAML; credentials come only
from environment variables, never from config files."""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError
from .providers import (
    HashEmbedder,
    HttpChatProvider,
    HttpEmbeddingProvider,
    ProviderConfig,
    ScriptedChatProvider,
)
from .raptor import RaptorConfig

CHAT_ROLES = ("refiner", "translator", "synthesizer", "summarizer", "judge")


@dataclass
class GuardrailPolicy:
    abstain_instruction: str = (
        "If the evidence is insufficient, state that the regulations provided "
        "do not answer the question."
    )
    min_hits: int = 1
    min_top_score: float = 0.15

    def to_dict(self) -> dict:
        return {
            "abstain_instruction": self.abstain_instruction,
            "min_hits": self.min_hits,
            "min_top_score": self.min_top_score,
        }


@dataclass
class EngineConfig:
    data_dir: Path = Path("./data")
    providers: dict = field(default_factory=dict)  # role -> spec dict
    chunk_budget: int = 256
    retrieval_k: int = 30
    term_k: int = 5
    term_floor: float = 0.25
    english_ascii_ratio: float = 0.9
    raptor: RaptorConfig = field(default_factory=RaptorConfig)
    guardrail: GuardrailPolicy = field(default_factory=GuardrailPolicy)
    max_in_flight: int = 4
    host: str = "127.0.0.1"
    port: int = 8340
    prompts_dir: Path | None = None
    bearer_token_env: str = ""

    def snapshot(self) -> dict:
        """Config echo embedded into traces and reports."""
        return {
            "chunk_budget": self.chunk_budget,
            "retrieval_k": self.retrieval_k,
            "term_k": self.term_k,
            "term_floor": self.term_floor,
            "raptor": self.raptor.to_dict(),
            "guardrail": self.guardrail.to_dict(),
            "providers": {
                role: {k: v for k, v in spec.items() if "key" not in k}
                for role, spec in self.providers.items()
            },
        }

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path | None = None) -> "EngineConfig":
        base_dir = base_dir or Path(".")
        cfg = cls()
        if "data_dir" in raw:
            cfg.data_dir = (base_dir / raw["data_dir"]).resolve()
        for key in (
            "chunk_budget",
            "retrieval_k",
            "term_k",
            "term_floor",
            "english_ascii_ratio",
            "max_in_flight",
            "host",
            "port",
            "bearer_token_env",
        ):
            if key in raw:
                setattr(cfg, key, raw[key])
        if cfg.retrieval_k < 1:
            raise ConfigError("retrieval_k must be >= 1", field="retrieval_k")
        if "raptor" in raw:
            cfg.raptor = RaptorConfig(**raw["raptor"])
        if "guardrail" in raw:
            cfg.guardrail = GuardrailPolicy(**raw["guardrail"])
        if "prompts_dir" in raw:
            cfg.prompts_dir = (base_dir / raw["prompts_dir"]).resolve()
        cfg.providers = {}
        for role, spec in (raw.get("providers") or {}).items():
            spec = dict(spec)
            # file paths in provider specs resolve relative to the config file
            for key in ("rules", "fixture_dir"):
                if key in spec:
                    spec[key] = str((base_dir / spec[key]).resolve())
            cfg.providers[role] = spec
        return cfg

    @classmethod
    def from_yaml(cls, path: str | Path) -> "EngineConfig":
        path = Path(path)
        try:
            raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {path}: {exc}")
        return cls.from_dict(raw, base_dir=path.parent)

    @classmethod
    def scripted(cls, fixture_dir: str | Path, data_dir: str | Path, **overrides) -> "EngineConfig":
        """Offline configuration: hash embedder plus rule-table chat for
        every role, driven by files in the fixture directory."""
        fixture_dir = Path(fixture_dir)
        raw = {"providers": {"embedder": {"type": "hash", "fixture_dir": str(fixture_dir)}}}
        for role in CHAT_ROLES:
            raw["providers"][role] = {
                "type": "scripted",
                "rules": str(fixture_dir / "chat_rules.json"),
            }
        cfg = cls.from_dict(raw)
        cfg.data_dir = Path(data_dir).resolve()
        for key, value in overrides.items():
            setattr(cfg, key, value)
        return cfg


def load_presets() -> dict:
    text = importlib.resources.files("gridcodex").joinpath("presets.yaml").read_text(encoding="utf-8")
    return yaml.safe_load(text)["roles"]


@dataclass
class Providers:
    embedder: object
    chats: dict  # role -> chat provider

    def chat(self, role: str):
        return self.chats[role]


def build_providers(cfg: EngineConfig) -> Providers:
    """Instantiate providers per role from their config specs."""
    presets = load_presets()
    specs = cfg.providers or {}

    embed_spec = specs.get("embedder", {"type": "hash"})
    etype = embed_spec.get("type", "hash")
    if etype == "hash":
        dim = int(embed_spec.get("dim", 0)) or _fixture_dim(embed_spec)
        embedder = HashEmbedder(dim=dim or 256)
    elif etype == "http":
        embedder = HttpEmbeddingProvider(_provider_config(embed_spec, presets["embedder"]))
    else:
        raise ConfigError(f"unknown embedder type {etype!r}", field="providers.embedder")

    chats = {}
    for role in CHAT_ROLES:
        spec = specs.get(role, {"type": "scripted_echo"})
        ctype = spec.get("type")
        if ctype == "scripted":
            chats[role] = ScriptedChatProvider.from_file(spec["rules"])
        elif ctype == "http":
            chats[role] = HttpChatProvider(_provider_config(spec, presets.get(role, {})))
        else:
            raise ConfigError(f"unknown chat provider type {ctype!r}", field=f"providers.{role}")
    return Providers(embedder=embedder, chats=chats)


def _fixture_dim(spec: dict) -> int:
    fixture_dir = spec.get("fixture_dir")
    if not fixture_dir:
        return 0
    path = Path(fixture_dir) / "embedder.yaml"
    if path.is_file():
        return int((yaml.safe_load(path.read_text(encoding="utf-8")) or {}).get("dim", 0))
    return 0


def _provider_config(spec: dict, preset: dict) -> ProviderConfig:
    return ProviderConfig(
        endpoint_url=spec.get("endpoint_url", ""),
        model_name=spec.get("model_name", preset.get("model_name", "")),
        api_key_env=spec.get("api_key_env", ""),
        timeout=float(spec.get("timeout", 60.0)),
        max_retries=int(spec.get("max_retries", 2)),
        temperature=float(spec.get("temperature", 0.0)),
    )
