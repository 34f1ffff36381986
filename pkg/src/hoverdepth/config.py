"""Pipeline configuration and its JSON form."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .energy import EnergyParams
from .initialization import InitParams
from .optimizer import SolverConfig
from .segmentation import SegmentationParams


@dataclass
class PipelineConfig:
    segmentation: SegmentationParams = field(default_factory=SegmentationParams)
    init: InitParams = field(default_factory=InitParams)
    energy: EnergyParams = field(default_factory=EnergyParams)
    solver: SolverConfig = field(default_factory=SolverConfig)
    patch_size: int = 8
    normalize_intensity: bool = True  # rescale so the reference maximum is 255
    view_weighting: bool = True
    min_images: int = 20
    workers: int = 1  # segment-level thread pool size

    _SECTIONS = {"segmentation": SegmentationParams, "init": InitParams, "energy": EnergyParams,
                 "solver": SolverConfig}

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = asdict(v) if f.name in self._SECTIONS else v
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for k, v in data.items():
            if k in cls._SECTIONS:
                section = cls._SECTIONS[k]
                names = {f.name for f in fields(section)}
                bad = set(v) - names
                if bad:
                    raise ValueError(f"unknown keys in {k!r}: {sorted(bad)}")
                kwargs[k] = section(**v)
            else:
                kwargs[k] = v
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")
