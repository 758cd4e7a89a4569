"""Single run-config (TOML or JSON) covering every tunable section."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .encoder import TrainConfig
from .gmm import EMConfig
from .loop import SessionConfig
from .risk import RiskBoundConfig, RiskSeries
from .sampler import SamplerConfig
from .segmenter import SlidingWindowConfig


@dataclass
class SeriesConfig:
    risk_level: float = 0.5
    window: int = 100
    trigger_threshold: float = 0.5

    def make_series(self) -> RiskSeries:
        return RiskSeries(risk_level=self.risk_level, window=self.window,
                          trigger_threshold=self.trigger_threshold)


@dataclass
class RunConfig:
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    sliding_window: SlidingWindowConfig = field(default_factory=SlidingWindowConfig)
    risk_bound: RiskBoundConfig = field(default_factory=RiskBoundConfig)
    series: SeriesConfig = field(default_factory=SeriesConfig)
    session: SessionConfig = field(default_factory=SessionConfig)
    em: EMConfig = field(default_factory=EMConfig)

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(
            self,
            sampler=replace(self.sampler, rng_seed=seed),
            train=replace(self.train, rng_seed=seed),
            em=replace(self.em, rng_seed=seed),
        )


_SECTIONS = {
    "sampler": SamplerConfig,
    "train": TrainConfig,
    "sliding_window": SlidingWindowConfig,
    "risk_bound": RiskBoundConfig,
    "series": SeriesConfig,
    "session": SessionConfig,
    "em": EMConfig,
}

# dataclass fields that arrive from TOML/JSON as lists
_TUPLE_FIELDS = {"channels", "brightness_range", "contrast_range", "saturation_range"}


def _build_section(cls, data: dict):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {
        k: tuple(v) if k in _TUPLE_FIELDS and isinstance(v, list) else v
        for k, v in data.items()
    }
    return cls(**kwargs)


def load_run_config(path=None, seed: Optional[int] = None) -> RunConfig:
    """Load the run config; missing path or sections fall back to defaults."""
    cfg = RunConfig()
    if path is not None:
        path = Path(path)
        if path.suffix.lower() == ".json":
            raw = json.loads(path.read_text(encoding="utf-8"))
        else:
            with open(path, "rb") as f:
                raw = tomllib.load(f)
        unknown = set(raw) - set(_SECTIONS)
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        sections = {
            name: _build_section(cls, raw.get(name, {}))
            for name, cls in _SECTIONS.items()
        }
        cfg = RunConfig(
            sampler=sections["sampler"],
            train=sections["train"],
            sliding_window=sections["sliding_window"],
            risk_bound=sections["risk_bound"],
            series=sections["series"],
            session=sections["session"],
            em=sections["em"],
        )
    if seed is not None:
        cfg = cfg.with_seed(seed)
    return cfg
