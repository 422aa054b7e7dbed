"""Pipeline configuration: an INI file with one section per stage.

Stage seeds are derived from the single global ``seed`` so a run is fully
described by the file. Each stage's config hash covers its own sections and
those of every upstream stage.
"""
from __future__ import annotations

import configparser
import io
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Dict, Tuple

from .embedder import SgnsConfig
from .encoder import EncoderConfig
from .evaluation import BaselineConfig
from .ssgan import GanTrainConfig
from .synthgen import CohortConfig

# stage -> config sections it reads, upstream first
STAGE_SECTIONS: Dict[str, Tuple[str, ...]] = {
    "gen-data": ("pipeline", "cohort"),
    "build-vocab": ("pipeline", "cohort", "vocab"),
    "train-embedding": ("pipeline", "cohort", "vocab", "skipgram"),
    "train-encoder": ("pipeline", "cohort", "vocab", "skipgram", "encoder"),
    "encode-features": ("pipeline", "cohort", "vocab", "skipgram", "encoder"),
    "train-gan": ("pipeline", "cohort", "vocab", "skipgram", "encoder", "gan"),
    "train-baseline": ("pipeline", "cohort", "vocab", "skipgram", "encoder", "baseline"),
    "evaluate": ("pipeline", "cohort", "vocab", "skipgram", "encoder", "gan", "baseline"),
    "export-pr": ("pipeline", "cohort", "vocab", "skipgram", "encoder", "gan", "baseline"),
}

# offsets keep each stage's random stream distinct under one global seed
_SEED_OFFSETS = {"cohort": 0, "split": 1, "skipgram": 2, "encoder": 3, "gan": 4, "baseline": 5}


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    train_fraction: float = 0.8
    min_count: int = 5
    cohort: CohortConfig = field(default_factory=CohortConfig)
    skipgram: SgnsConfig = field(default_factory=SgnsConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    gan: GanTrainConfig = field(default_factory=GanTrainConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)

    def stage_seed(self, name: str) -> int:
        return self.seed * 1000 + _SEED_OFFSETS[name]

    # seeded views used by the stages
    def cohort_cfg(self):
        return replace(self.cohort, seed=self.stage_seed("cohort"))

    def skipgram_cfg(self):
        return replace(self.skipgram, seed=self.stage_seed("skipgram"))

    def encoder_cfg(self):
        return replace(self.encoder, seed=self.stage_seed("encoder"))

    def gan_cfg(self):
        return replace(self.gan, seed=self.stage_seed("gan"))

    def baseline_cfg(self):
        return replace(self.baseline, seed=self.stage_seed("baseline"))

    def with_seed(self, seed: int) -> "PipelineConfig":
        return replace(self, seed=int(seed))

    def sections(self) -> Dict[str, dict]:
        def strip(obj):
            d = asdict(obj)
            d.pop("seed", None)
            return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}
        return {
            "pipeline": {"seed": self.seed, "train_fraction": self.train_fraction},
            "cohort": strip(self.cohort),
            "vocab": {"min_count": self.min_count},
            "skipgram": strip(self.skipgram),
            "encoder": strip(self.encoder),
            "gan": strip(self.gan),
            "baseline": strip(self.baseline),
        }

    def stage_hash(self, stage: str) -> str:
        secs = self.sections()
        doc = {name: secs[name] for name in STAGE_SECTIONS[stage]}
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_ini(self) -> str:
        parser = configparser.ConfigParser()
        for name, values in self.sections().items():
            parser[name] = {k: _fmt(v) for k, v in values.items()}
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str) -> "PipelineConfig":
        parser = configparser.ConfigParser()
        parser.read_string(text)
        known = {"pipeline", "cohort", "vocab", "skipgram", "encoder", "gan", "baseline"}
        unknown = set(parser.sections()) - known
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        if not parser.has_option("pipeline", "seed"):
            raise ValueError("config must set [pipeline] seed")
        p = parser["pipeline"]
        kwargs = {"seed": p.getint("seed"),
                  "train_fraction": p.getfloat("train_fraction", fallback=0.8)}
        if parser.has_section("vocab"):
            kwargs["min_count"] = parser["vocab"].getint("min_count", fallback=5)
        for name, typ in (("cohort", CohortConfig), ("skipgram", SgnsConfig),
                          ("encoder", EncoderConfig), ("gan", GanTrainConfig),
                          ("baseline", BaselineConfig)):
            if parser.has_section(name):
                kwargs[name] = _build(typ, parser[name], name)
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        with open(path) as f:
            return cls.from_ini(f.read())


def _fmt(v):
    if isinstance(v, (list, tuple)):
        return ",".join(str(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def _build(typ, section, name):
    types = {f.name: f.type for f in fields(typ)}
    defaults = asdict(typ())
    kwargs = {}
    for key, raw in section.items():
        if key not in types or key == "seed":
            raise ValueError(f"[{name}] unknown or disallowed key {key!r}")
        default = defaults[key]
        if isinstance(default, tuple):
            kwargs[key] = tuple(int(x) for x in raw.split(",") if x.strip())
        elif isinstance(default, bool):
            kwargs[key] = section.getboolean(key)
        elif isinstance(default, int):
            kwargs[key] = int(raw)
        elif isinstance(default, float):
            kwargs[key] = float(raw)
        else:
            kwargs[key] = raw
    return typ(**kwargs)
