"""Engine and LLM configuration: defaults, config file, environment overrides."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

ENV_PREFIX = "FLOWSTUDIO_"


@dataclass
class EngineConfig:
    pool_size: int = 4
    exec_timeout_s: float = 60.0
    max_repairs: int = 3
    build_workers: int = 8
    llm_concurrency: int = 4
    llm_rate_per_s: float | None = None
    schema_reask_limit: int = 2
    tool_loop_max_iters: int = 10
    # Locked nodes get a consistency check instead of resynthesis during builds.
    check_locked_consistency: bool = True
    temperature: float = 0.0


@dataclass
class LlmConfig:
    endpoint: str = ""
    model: str = "default"
    api_key: str = ""


def load_llm_config(path: str | Path | None = None) -> LlmConfig:
    """Read the LLM configuration file, then apply environment overrides."""
    cfg = LlmConfig()
    candidates = [Path(path)] if path else [Path("flowstudio.config.json"), Path.home() / ".flowstudio.json"]
    for candidate in candidates:
        if candidate.is_file():
            doc = json.loads(candidate.read_text())
            cfg.endpoint = doc.get("endpoint", cfg.endpoint)
            cfg.model = doc.get("model", cfg.model)
            cfg.api_key = doc.get("api_key", cfg.api_key)
            break
    cfg.endpoint = os.environ.get(ENV_PREFIX + "LLM_ENDPOINT", cfg.endpoint)
    cfg.model = os.environ.get(ENV_PREFIX + "LLM_MODEL", cfg.model)
    cfg.api_key = os.environ.get(ENV_PREFIX + "LLM_API_KEY", cfg.api_key)
    return cfg
