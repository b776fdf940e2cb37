"""Run configuration: one YAML document validated at startup."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .distill import BUILTIN_TEMPLATES, Template
from .errors import ConfigError
from .scoring import STRATEGIES, RegulatedAttribute

VERIFICATION_MODES = ("auto", "human")
PROVIDER_KINDS = ("mock", "http")


@dataclass
class ProviderConfig:
    kind: str = "mock"
    endpoint: str | None = None
    auth_token: str | None = None
    model: str | None = None
    dim: int = 16
    noise: float = 0.01
    # Mock embedder only: texts mentioning these tags anchor to per-group axes.
    groups: list[str] | None = None

    def validate(self, name: str) -> None:
        if self.kind not in PROVIDER_KINDS:
            raise ConfigError(f"providers.{name}.kind must be one of {PROVIDER_KINDS}")
        if self.kind == "http" and not self.endpoint:
            raise ConfigError(f"providers.{name}: http provider needs an endpoint")


@dataclass
class LoopConfig:
    budget: int = 100
    batch_size: int = 20
    clusters: int = 10
    strategy: str = "cluster"
    bootstrap_n: int = 100

    def validate(self) -> None:
        if self.budget < 0:
            raise ConfigError("loop.budget must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("loop.batch_size must be >= 1")
        if self.clusters < 1:
            raise ConfigError("loop.clusters must be >= 1")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"loop.strategy must be one of {STRATEGIES}")
        if self.bootstrap_n < 0:
            raise ConfigError("loop.bootstrap_n must be >= 0")


@dataclass
class HoldoutConfig:
    test_size: int = 400
    remove_from_pool: bool = True


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8008
    auth_token: str | None = None
    ui_dir: str | None = None


@dataclass
class Config:
    workdir: str | None = None
    seed: int = 0
    pool_path: str | None = None
    loop: LoopConfig = field(default_factory=LoopConfig)
    holdout: HoldoutConfig = field(default_factory=HoldoutConfig)
    attribute: RegulatedAttribute = field(
        default_factory=lambda: RegulatedAttribute(
            name="inoffensiveness", adhere_index=0
        )
    )
    template: Template = BUILTIN_TEMPLATES["counter_narration"]
    providers: dict[str, ProviderConfig] = field(
        default_factory=lambda: {
            name: ProviderConfig() for name in ("embedder", "scorer", "learner", "teacher")
        }
    )
    verification_mode: str = "auto"
    poll_interval: float = 0.2
    teacher_temperature: float = 0.7
    max_tokens: int = 256
    finetune_epochs: int = 10
    finetune_learning_rate: float = 3e-5
    record: bool = False
    replay_dir: str | None = None
    retry_base_delay: float = 0.2
    distill_concurrency: int = 4
    distill_rate_limit_per_s: float | None = None
    server: ServerConfig = field(default_factory=ServerConfig)

    def validate(self) -> None:
        self.loop.validate()
        for name in ("embedder", "scorer", "learner", "teacher"):
            if name not in self.providers:
                raise ConfigError(f"providers.{name} missing")
            self.providers[name].validate(name)
        if self.verification_mode not in VERIFICATION_MODES:
            raise ConfigError(
                f"verification.mode must be one of {VERIFICATION_MODES}"
            )
        if self.holdout.test_size < 0:
            raise ConfigError("holdout.test_size must be >= 0")
        if self.attribute.adhere_index < 0:
            raise ConfigError("attribute.adhere_index must be >= 0")
        if self.distill_concurrency < 1:
            raise ConfigError("distillation.concurrency must be >= 1")
        if self.distill_rate_limit_per_s is not None and self.distill_rate_limit_per_s <= 0:
            raise ConfigError("distillation.rate_limit_per_s must be positive")


def _template_from(section: Mapping[str, Any]) -> Template:
    task = section.get("task")
    if task is not None:
        if task not in BUILTIN_TEMPLATES:
            raise ConfigError(
                f"template.task must be one of {sorted(BUILTIN_TEMPLATES)}"
            )
        return BUILTIN_TEMPLATES[task]
    try:
        return Template(
            task_directive=section.get("task_directive", ""),
            instruction=section.get("instruction", ""),
            preamble=section.get("preamble"),
            input_block=section.get("input_block", "Input: {input}"),
        )
    except TypeError as exc:
        raise ConfigError(f"bad template section: {exc}") from exc


def load_config(path: str | Path) -> Config:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(raw, Mapping):
        raise ConfigError(f"config root must be a mapping, got {type(raw).__name__}")
    return config_from_dict(raw)


def config_from_dict(raw: Mapping[str, Any]) -> Config:
    cfg = Config()
    cfg.workdir = raw.get("workdir", cfg.workdir)
    cfg.seed = int(raw.get("seed", cfg.seed))

    pool = raw.get("pool", {}) or {}
    cfg.pool_path = pool.get("path", cfg.pool_path)
    hold = pool.get("holdout", {}) or {}
    cfg.holdout = HoldoutConfig(
        test_size=int(hold.get("test_size", cfg.holdout.test_size)),
        remove_from_pool=bool(hold.get("remove_from_pool", cfg.holdout.remove_from_pool)),
    )

    loop = raw.get("loop", {}) or {}
    cfg.loop = LoopConfig(
        budget=int(loop.get("budget", cfg.loop.budget)),
        batch_size=int(loop.get("batch_size", cfg.loop.batch_size)),
        clusters=int(loop.get("clusters", cfg.loop.clusters)),
        strategy=loop.get("strategy", cfg.loop.strategy),
        bootstrap_n=int(loop.get("bootstrap_n", cfg.loop.bootstrap_n)),
    )

    attr = raw.get("attribute", {}) or {}
    cfg.attribute = RegulatedAttribute(
        name=attr.get("name", "inoffensiveness"),
        adhere_index=int(attr.get("adhere_index", 0)),
        description=attr.get("description", ""),
    )

    if "template" in raw and raw["template"]:
        cfg.template = _template_from(raw["template"])

    providers = raw.get("providers", {}) or {}
    for name in ("embedder", "scorer", "learner", "teacher"):
        section = providers.get(name, {}) or {}
        cfg.providers[name] = ProviderConfig(
            kind=section.get("kind", "mock"),
            endpoint=section.get("endpoint"),
            auth_token=section.get("auth_token"),
            model=section.get("model"),
            dim=int(section.get("dim", 16)),
            noise=float(section.get("noise", 0.01)),
            groups=list(section["groups"]) if section.get("groups") else None,
        )

    verification = raw.get("verification", {}) or {}
    cfg.verification_mode = verification.get("mode", cfg.verification_mode)
    cfg.poll_interval = float(verification.get("poll_interval", cfg.poll_interval))

    decoding = raw.get("decoding", {}) or {}
    cfg.teacher_temperature = float(
        decoding.get("temperature", cfg.teacher_temperature)
    )
    cfg.max_tokens = int(decoding.get("max_tokens", cfg.max_tokens))

    finetune = raw.get("finetune", {}) or {}
    cfg.finetune_epochs = int(finetune.get("epochs", cfg.finetune_epochs))
    cfg.finetune_learning_rate = float(
        finetune.get("learning_rate", cfg.finetune_learning_rate)
    )

    rr = raw.get("record_replay", {}) or {}
    cfg.record = bool(rr.get("record", cfg.record))
    cfg.replay_dir = rr.get("replay_dir", cfg.replay_dir)

    distillation = raw.get("distillation", {}) or {}
    cfg.distill_concurrency = int(distillation.get("concurrency", cfg.distill_concurrency))
    rate = distillation.get("rate_limit_per_s")
    cfg.distill_rate_limit_per_s = float(rate) if rate is not None else None

    server = raw.get("server", {}) or {}
    cfg.server = ServerConfig(
        host=server.get("host", cfg.server.host),
        port=int(server.get("port", cfg.server.port)),
        auth_token=server.get("auth_token"),
        ui_dir=server.get("ui_dir"),
    )

    cfg.validate()
    return cfg
