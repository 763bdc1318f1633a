"""Pipeline configuration with declared defaults and JSON overrides."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields, replace
from pathlib import Path


@dataclass(frozen=True)
class PipelineConfig:
    sup_threshold: int = 2
    cmp_threshold: int = 3
    match_threshold: float = 0.3
    link_floor: float = 0.5
    year_range: tuple = (1000, 2100)
    max_hops: int = 2
    candidate_cap: int = 512
    temporal_relations: tuple = (
        "birth_date", "death_date", "in_office_date", "release_date",
    )
    ordering_fallback_count: int = 3
    ranker_weights: tuple = (0.5, 0.3, 0.2)
    brute_force_guard: int = 2000

    def override(self, **kwargs) -> "PipelineConfig":
        known = {f.name for f in fields(self)}
        clean = {}
        for key, value in kwargs.items():
            if key not in known:
                raise KeyError(f"unknown config key {key!r}")
            if value is not None:
                clean[key] = _coerce(key, value)
        return replace(self, **clean)


def _coerce(key: str, value):
    if key in ("year_range", "temporal_relations", "ranker_weights"):
        return tuple(value)
    return value


def load_config(path) -> PipelineConfig:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return PipelineConfig().override(**data)
