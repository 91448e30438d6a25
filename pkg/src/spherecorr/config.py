"""Experiment configuration: a frozen, versioned TOML schema.

Every run is reproducible from (config file, seed); the config hash is the
sha256 of the canonical sorted-key JSON form, so reordering keys in the
file cannot change it. Unknown sections or keys are rejected rather than
ignored: a typo that silently falls back to a default is how experiments
stop being comparable.

Parsing uses tomli; writing is a local serializer covering exactly the
schema's needs (scalars and flat lists) since no TOML writer ships with
this Python.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from . import features, grids, pose, training
from .errors import ConfigError

SCHEMA_VERSION = 1
GRID_KINDS = ("healpix", "equirect", "fibonacci")
LOSS_KINDS = ("l1", "smooth_l1", "hyp_l1", "l2", "hyp_l2")
SCHEDULES = ("cosine", "constant")
CATEGORIES = ("bottle", "mug", "box")


@dataclass(frozen=True)
class GridSpec:
    kind: str = "healpix"
    resolution: int | list = 4

    def validate(self):
        if self.kind not in GRID_KINDS:
            raise ConfigError(f"grid.kind must be one of {GRID_KINDS}, got {self.kind!r}")
        res = self.resolution
        if isinstance(res, list):
            if self.kind != "equirect" or len(res) != 2:
                raise ConfigError("a resolution pair is only valid for equirect grids")
            ok = all(isinstance(v, int) and v >= 1 for v in res)
        else:
            ok = isinstance(res, int) and res >= 1
        if not ok:
            raise ConfigError(f"grid.resolution invalid: {res!r}")


@dataclass(frozen=True)
class ModelSpec:
    layers: int = 2
    width: int = 32
    hidden: int = 64
    epos_sigma: float = 0.02
    feature_k: int = 25

    def validate(self):
        if self.layers < 0 or self.width < 8 or self.hidden < 1 or self.feature_k < 1:
            raise ConfigError("model sizes out of range")
        if not 0.0 < self.epos_sigma < 1.0:
            raise ConfigError("model.epos_sigma must be in (0, 1)")


@dataclass(frozen=True)
class TrainingSpec:
    steps: int = 5000
    batch: int = 16
    lr: float = 1e-3
    schedule: str = "cosine"
    seed: int = 0
    loss_kind: str = "hyp_l2"
    clip_norm: float = 1.0
    include_unassigned: bool = True
    augment: bool = True
    augment_copies: int = 4

    def validate(self):
        if self.steps < 0 or self.batch < 1 or self.lr <= 0 or self.augment_copies < 1:
            raise ConfigError("training budget values out of range")
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"training.schedule must be one of {SCHEDULES}")
        if self.loss_kind not in LOSS_KINDS:
            raise ConfigError(f"training.loss_kind must be one of {LOSS_KINDS}")
        if self.clip_norm <= 0:
            raise ConfigError("training.clip_norm must be positive")


@dataclass(frozen=True)
class DataSpec:
    categories: list = field(default_factory=lambda: list(CATEGORIES))
    train_instances: int = 150
    test_instances: int = 50
    noise_sigma: float = 0.002
    test_noise_sigma: float = 0.0
    shape_points: int = 4096
    augment_t: float = 0.02
    augment_s: list = field(default_factory=lambda: [0.8, 1.2])
    augment_rot_deg: list = field(default_factory=lambda: [-30.0, 30.0])

    def validate(self):
        if not self.categories:
            raise ConfigError("data.categories must not be empty")
        for cat in self.categories:
            if cat not in CATEGORIES:
                raise ConfigError(f"unknown category {cat!r}; choose from {CATEGORIES}")
        if self.train_instances < 1 or self.test_instances < 1 or self.shape_points < 64:
            raise ConfigError("data instance counts out of range")
        if self.noise_sigma < 0 or self.test_noise_sigma < 0:
            raise ConfigError("noise sigmas must be non-negative")
        if len(self.augment_s) != 2 or len(self.augment_rot_deg) != 2:
            raise ConfigError("augmentation ranges are [lo, hi] pairs")


@dataclass(frozen=True)
class RansacSpec:
    iterations: int = 256
    sample_size: int = 3
    threshold: float = 0.0873
    refine: float = 0.0  # tightened second-refit gate; 0 disables

    def validate(self):
        if self.iterations < 1 or self.sample_size < 3 or self.threshold <= 0:
            raise ConfigError("ransac parameters out of range")
        if not 0.0 <= self.refine < math.pi:
            raise ConfigError("ransac refine must lie in [0, pi)")


@dataclass(frozen=True)
class BenchSpec:
    mc_samples: int = 1_000_000
    healpix_nside: int = 8
    equirect_n: int = 28
    fibonacci_n: int = 768
    observations: int = 6

    def validate(self):
        if min(self.healpix_nside, self.equirect_n, self.fibonacci_n, self.observations) < 1:
            raise ConfigError("bench parameters out of range")
        if self.mc_samples < 100_000:
            # Below this the per-cell counts are too noisy to bound ratios.
            raise ConfigError("bench.mc_samples must be at least 100000")


@dataclass(frozen=True)
class OutputSpec:
    dir: str = "runs/desk"

    def validate(self):
        if not self.dir:
            raise ConfigError("output.dir must not be empty")


_SECTIONS = {
    "grid": GridSpec,
    "model": ModelSpec,
    "training": TrainingSpec,
    "data": DataSpec,
    "ransac": RansacSpec,
    "bench": BenchSpec,
    "output": OutputSpec,
}


@dataclass(frozen=True)
class ExperimentConfig:
    grid: GridSpec = field(default_factory=GridSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    training: TrainingSpec = field(default_factory=TrainingSpec)
    data: DataSpec = field(default_factory=DataSpec)
    ransac: RansacSpec = field(default_factory=RansacSpec)
    bench: BenchSpec = field(default_factory=BenchSpec)
    output: OutputSpec = field(default_factory=OutputSpec)

    def validate(self):
        for name in _SECTIONS:
            getattr(self, name).validate()
        return self

    def to_dict(self) -> dict:
        return {"version": SCHEMA_VERSION, **{n: asdict(getattr(self, n)) for n in _SECTIONS}}

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    # Bridges into the runtime dataclasses.
    def build_grid(self):
        res = self.grid.resolution
        return grids.build_grid(self.grid.kind, tuple(res) if isinstance(res, list) else res)

    def feature_config(self) -> features.FeatureConfig:
        return features.FeatureConfig(c=self.model.width, k=self.model.feature_k)

    def train_config(self) -> training.TrainConfig:
        t = self.training
        return training.TrainConfig(
            steps=t.steps,
            batch_size=t.batch,
            lr=t.lr,
            loss_kind=t.loss_kind,
            seed=t.seed,
            clip_norm=t.clip_norm,
            include_unassigned=t.include_unassigned,
            augment=t.augment,
            augment_copies=t.augment_copies,
            schedule=t.schedule,
            layers=self.model.layers,
            width=self.model.width,
            hidden=self.model.hidden,
            feature_k=self.model.feature_k,
            augment_t_range=self.data.augment_t,
            augment_s_range=tuple(self.data.augment_s),
            augment_rot_range=tuple(self.data.augment_rot_deg),
        )

    def ransac_config(self) -> pose.RansacConfig:
        r = self.ransac
        return pose.RansacConfig(
            iterations=r.iterations,
            sample_size=r.sample_size,
            inlier_threshold=r.threshold,
            refine_threshold=r.refine if r.refine > 0 else None,
        )


def from_dict(raw: dict) -> ExperimentConfig:
    raw = dict(raw)
    version = raw.pop("version", None)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"config version must be {SCHEMA_VERSION}, got {version!r}")
    parts = {}
    for name, cls in _SECTIONS.items():
        section = raw.pop(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"[{name}] must be a table")
        known = {f.name for f in fields(cls)}
        unknown = set(section) - known
        if unknown:
            raise ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")
        parts[name] = cls(**section)
    if raw:
        raise ConfigError(f"unknown config sections: {sorted(raw)}")
    return ExperimentConfig(**parts).validate()


def loads(text: str) -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from exc
    return from_dict(raw)


def load(path) -> ExperimentConfig:
    try:
        with open(path) as f:
            return loads(f.read())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        out = repr(v)
        return out if any(c in out for c in ".einf") else out + ".0"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise ConfigError(f"unserializable config value: {v!r}")


def dumps(cfg: ExperimentConfig) -> str:
    lines = [f"version = {SCHEMA_VERSION}", ""]
    for name in _SECTIONS:
        lines.append(f"[{name}]")
        for key, value in asdict(getattr(cfg, name)).items():
            lines.append(f"{key} = {_toml_value(value)}")
        lines.append("")
    return "\n".join(lines)


def save(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as f:
        f.write(dumps(cfg))


def load_preset(name: str) -> ExperimentConfig:
    from importlib import resources

    ref = resources.files("spherecorr").joinpath("presets", f"{name}.toml")
    try:
        text = ref.read_text()
    except FileNotFoundError as exc:
        raise ConfigError(f"no preset named {name!r}") from exc
    return loads(text)
