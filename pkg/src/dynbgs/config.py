"""Run configuration.

One JSON document configures every subcommand. Missing keys take the
defaults below; command-line flags override values from the file, and
``--set dotted.key=value`` overrides anything. Schema::

    {
      "dataset":     {"layout": "cdnet" | "i2r" | "synthetic", "path": str,
                      "gt_map": str | null, "temporal_roi": [int, int] | null},
      "scale_policy": {"max_dim": int | null},
      "training":    {"max_frames": 300, "explicit_indices": [int] | null,
                      "ae":   {"learning_rate": 1e-4, "epochs": 50, "batch_size": 8},
                      "unet": {"learning_rate": 5e-3, "epochs": 50, "batch_size": 4},
                      "unet_features": [64, 128, 256, 512, 1024]},
      "label_prep":  {"theta_label": 0.1, "channel_reduce": "max"},
      "thresholds":  {"alpha": 0.2, "beta": 0.08},
      "postproc":    {"median_kernel": 5, "closing_kernel": 3, "closing_iterations": 1},
      "mode": "online" | "batch",
      "calibrate": true,
      "synth": { SynthSceneSpec fields },
      "output_dir": str,
      "seed": 0
    }
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .data_ingest import ScalePolicy
from .dynamic_background import FEATURES
from .label_prep import LabelPrepConfig
from .segmentation import PostProcParams, ThresholdParams
from .synth import SynthSceneSpec
from .training import AUTOENCODER_DEFAULTS, UNET_DEFAULTS, TrainConfig

LAYOUTS = ("cdnet", "i2r", "synthetic")
MODES = ("online", "batch")


@dataclass
class DatasetConfig:
    layout: str = "cdnet"
    path: Optional[str] = None
    gt_map: Optional[str] = None
    temporal_roi: Optional[list] = None


@dataclass
class NetConfig:
    learning_rate: float
    epochs: int
    batch_size: int

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.epochs, self.batch_size, seed)


def _net(defaults: TrainConfig):
    return lambda: NetConfig(defaults.learning_rate, defaults.epochs, defaults.batch_size)


@dataclass
class TrainingConfig:
    max_frames: int = 300
    explicit_indices: Optional[list] = None
    ae: NetConfig = field(default_factory=_net(AUTOENCODER_DEFAULTS))
    unet: NetConfig = field(default_factory=_net(UNET_DEFAULTS))
    unet_features: list = field(default_factory=lambda: list(FEATURES))


@dataclass
class RunConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    scale_policy: dict = field(default_factory=lambda: {"max_dim": 320})
    training: TrainingConfig = field(default_factory=TrainingConfig)
    label_prep: dict = field(default_factory=lambda: asdict(LabelPrepConfig()))
    thresholds: dict = field(default_factory=lambda: asdict(ThresholdParams()))
    postproc: dict = field(default_factory=lambda: asdict(PostProcParams()))
    mode: str = "online"
    calibrate: bool = True
    synth: dict = field(default_factory=lambda: SynthSceneSpec().to_dict())
    output_dir: str = "run"
    seed: int = 0

    def __post_init__(self):
        if self.dataset.layout not in LAYOUTS:
            raise ValueError(f"dataset.layout must be one of {LAYOUTS}, got {self.dataset.layout!r}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        # Validate the typed sections eagerly so bad files fail at load time.
        self.scale()
        self.label_config()
        self.threshold_params()
        self.postproc_params()
        self.synth_spec()
        self.training.ae.train_config(self.seed)
        self.training.unet.train_config(self.seed)

    def scale(self) -> ScalePolicy:
        return ScalePolicy(max_dim=self.scale_policy.get("max_dim", 320))

    def label_config(self) -> LabelPrepConfig:
        return LabelPrepConfig(**self.label_prep)

    def threshold_params(self) -> ThresholdParams:
        return ThresholdParams(**self.thresholds)

    def postproc_params(self) -> PostProcParams:
        return PostProcParams(**self.postproc)

    def synth_spec(self) -> SynthSceneSpec:
        d = {k: tuple(v) if isinstance(v, list) else v for k, v in self.synth.items()}
        return SynthSceneSpec(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def hash(self) -> str:
        # Where results land does not change them.
        d = self.to_dict()
        d.pop("output_dir")
        canonical = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        base = RunConfig().to_dict()
        _merge(base, data)
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        t = base["training"]
        training = TrainingConfig(
            max_frames=t["max_frames"],
            explicit_indices=t["explicit_indices"],
            ae=NetConfig(**t["ae"]),
            unet=NetConfig(**t["unet"]),
            unet_features=list(t["unet_features"]),
        )
        return cls(
            dataset=DatasetConfig(**base["dataset"]),
            scale_policy=base["scale_policy"],
            training=training,
            label_prep=base["label_prep"],
            thresholds=base["thresholds"],
            postproc=base["postproc"],
            mode=base["mode"],
            calibrate=base["calibrate"],
            synth={k: list(v) if isinstance(v, tuple) else v for k, v in base["synth"].items()},
            output_dir=base["output_dir"],
            seed=base["seed"],
        )

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_json(Path(path).read_text())

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json() + "\n")
        return path


def _merge(base: dict, override: dict):
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _merge(base[k], v)
        else:
            base[k] = copy.deepcopy(v)


def apply_override(data: dict, assignment: str) -> dict:
    """Apply one ``dotted.key=value`` override; the value is parsed as JSON
    when possible, otherwise kept as a string."""
    key, sep, raw = assignment.partition("=")
    if not sep:
        raise ValueError(f"override {assignment!r} is not of the form key=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = data
    parts = key.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value
    return data
