"""Run configuration: one YAML file holding every tunable knob.

The config never contains key material; real keys and backend tokens are
reached only through the environment variables it names. Startup scans
the file for any resolved secret and refuses to run on a hit.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path

import yaml

from .backends import (
    ChatBackend,
    HttpChatBackend,
    ModelProfile,
    RuleBackend,
    ScriptedBackend,
    load_scripted_backend,
)
from .conversation import Assistant, ConversationConfig
from .judging import JudgeConfig
from .orchestrator import PolicyFlags
from .prompts import JUDGE_SYSTEM_PROMPT


class ConfigError(Exception):
    pass


@dataclass
class SandboxSettings:
    interpreter: str | None = None  # None -> current Python
    timeout_s: float = 60.0
    stream_cap_bytes: int = 16 * 1024


@dataclass
class RunConfig:
    seed: int
    dataset: str | None
    store_path: str | None
    ledger_path: str | None
    verdict_mode: str  # "human" | "autonomous"
    flags: PolicyFlags
    conversation: ConversationConfig
    sandbox: SandboxSettings
    hierarchy: list[Assistant]
    judge: JudgeConfig | None
    embedder_dim: int = 256
    retrieval_floor: float = -1.0
    host: str = "127.0.0.1"
    port: int = 8765
    raw: dict = field(default_factory=dict)

    def real_key_env_names(self) -> list[str]:
        """Env vars that may hold secrets (dataset key_env values are read
        at ingest time; here we report backend auth vars)."""
        names = []
        for tier in self.raw.get("hierarchy", []):
            backend = tier.get("backend", {})
            if backend.get("api_key_env"):
                names.append(backend["api_key_env"])
        return names


def _build_backend(spec: dict, base_dir: Path) -> ChatBackend:
    kind = spec.get("kind")
    if kind == "scripted":
        if "file" in spec:
            return load_scripted_backend(base_dir / spec["file"])
        if "script" in spec:
            return ScriptedBackend(spec["script"])
        rules = [(r.get("match"), r["respond"]) for r in spec.get("rules", [])]
        return RuleBackend(rules, spec.get("default", ""))
    if kind == "http":
        endpoint = spec.get("endpoint") or os.environ.get(spec.get("endpoint_env", ""), "")
        if not endpoint:
            raise ConfigError("http backend needs endpoint or endpoint_env")
        api_key = os.environ.get(spec["api_key_env"]) if spec.get("api_key_env") else None
        return HttpChatBackend(
            endpoint=endpoint,
            model=spec.get("model", "default"),
            api_key=api_key,
            timeout=float(spec.get("timeout", 60.0)),
            retries=int(spec.get("retries", 3)),
            backoff_base=float(spec.get("backoff_base", 1.0)),
        )
    raise ConfigError(f"unknown backend kind: {kind!r}")


def _build_profile(tier: dict, rank: int) -> ModelProfile:
    try:
        return ModelProfile(
            name=tier["name"],
            price_in=Decimal(str(tier.get("price_in", "0"))),
            price_out=Decimal(str(tier.get("price_out", "0"))),
            context_window=int(tier.get("context_window", 8192)),
            rank=rank,
        )
    except KeyError as exc:
        raise ConfigError(f"hierarchy tier missing field: {exc}") from exc


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    data = yaml.safe_load(text) or {}
    base_dir = path.parent

    tiers = data.get("hierarchy") or []
    if not tiers:
        raise ConfigError("config must define a nonempty hierarchy")
    hierarchy = [
        Assistant(profile=_build_profile(tier, rank), backend=_build_backend(tier.get("backend", {}), base_dir))
        for rank, tier in enumerate(tiers)
    ]

    verdict_mode = data.get("verdict_mode", "human")
    if verdict_mode not in ("human", "autonomous"):
        raise ConfigError(f"verdict_mode must be human or autonomous, got {verdict_mode!r}")

    judge_cfg = None
    if data.get("judge"):
        j = data["judge"]
        judge_profile = ModelProfile(
            name=j.get("name", "judge"),
            price_in=Decimal(str(j.get("price_in", "0"))),
            price_out=Decimal(str(j.get("price_out", "0"))),
            context_window=int(j.get("context_window", 32768)),
            rank=0,
        )
        judge_cfg = JudgeConfig(
            profile=judge_profile,
            backend=_build_backend(j.get("backend", {}), base_dir),
            system_prompt=j.get("system_prompt") or JUDGE_SYSTEM_PROMPT,
        )
    if verdict_mode == "autonomous" and judge_cfg is None:
        raise ConfigError("autonomous mode requires a judge config")

    flags_raw = data.get("flags", {})
    flags = PolicyFlags(
        use_hierarchy=bool(flags_raw.get("use_hierarchy", True)),
        use_solution_demo=bool(flags_raw.get("use_solution_demo", True)),
        use_cot=bool(flags_raw.get("use_cot", False)),
    )

    conv_raw = data.get("conversation", {})
    conversation = ConversationConfig(
        max_turns=int(conv_raw.get("max_turns", 5)),
        sentinel=conv_raw.get("sentinel", "TERMINATE"),
        context_margin=int(conv_raw.get("context_margin", 256)),
        system_prompt=conv_raw.get("system_prompt", ConversationConfig.system_prompt),
    )

    sandbox_raw = data.get("sandbox", {})
    sandbox = SandboxSettings(
        interpreter=sandbox_raw.get("interpreter"),
        timeout_s=float(sandbox_raw.get("timeout_s", 60.0)),
        stream_cap_bytes=int(sandbox_raw.get("stream_cap_bytes", 16 * 1024)),
    )

    retrieval = data.get("retrieval", {})
    service = data.get("service", {})

    def _resolve(key: str) -> str | None:
        value = data.get(key)
        if value is None:
            return None
        p = Path(value)
        return str(p if p.is_absolute() else base_dir / p)

    config = RunConfig(
        seed=int(data.get("seed", 0)),
        dataset=_resolve("dataset"),
        store_path=_resolve("store_path"),
        ledger_path=_resolve("ledger_path"),
        verdict_mode=verdict_mode,
        flags=flags,
        conversation=conversation,
        sandbox=sandbox,
        hierarchy=hierarchy,
        judge=judge_cfg,
        embedder_dim=int(retrieval.get("dim", 256)),
        retrieval_floor=float(retrieval.get("floor", -1.0)),
        host=service.get("host", "127.0.0.1"),
        port=int(service.get("port", 8765)),
        raw=data,
    )
    scan_config_for_secrets(text, config)
    return config


def scan_config_for_secrets(config_text: str, config: RunConfig) -> None:
    """Refuse to start when the config file contains a resolved secret."""
    env_names = set(config.real_key_env_names())
    if config.dataset:
        dataset_path = Path(config.dataset)
        if dataset_path.exists():
            import json

            with open(dataset_path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        try:
                            env_names.add(json.loads(line).get("key_env", ""))
                        except json.JSONDecodeError:
                            continue
    for name in env_names:
        value = os.environ.get(name or "", "")
        if value and value in config_text:
            raise ConfigError(
                f"config file contains the resolved value of {name}; keys must stay in the environment"
            )
