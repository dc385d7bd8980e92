"""Checkpoint container shared by both networks.

On disk a checkpoint is a zip archive holding ``meta.json`` (model kind,
architecture spec, working size, training fingerprint and a manifest of
parameter names/shapes) plus one raw little-endian float32 blob per
parameter under ``params/``. Zip entry timestamps are pinned so identical
checkpoints produce identical bytes.
"""

from __future__ import annotations

import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import torch

from .errors import CheckpointError, ShapeMismatchError

FORMAT_VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


@dataclass
class Checkpoint:
    model_kind: str
    weights: dict[str, np.ndarray]
    spec: dict[str, Any]
    working_size: tuple[int, int, int]
    training_fingerprint: dict[str, Any] = field(default_factory=dict)
    _model: Any = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.model_kind not in ("autoencoder", "unet"):
            raise CheckpointError(f"unknown model kind {self.model_kind!r}")
        self.working_size = tuple(int(v) for v in self.working_size)
        self.weights = {
            k: np.ascontiguousarray(v, dtype="<f4") for k, v in self.weights.items()
        }

    @classmethod
    def from_module(cls, kind, module, spec, working_size, fingerprint=None):
        weights = {k: v.detach().cpu().numpy() for k, v in module.state_dict().items()}
        return cls(kind, weights, spec, working_size, fingerprint or {})

    def model(self):
        """The inference module, built once per checkpoint and cached."""
        if self._model is None:
            if self.model_kind == "autoencoder":
                from .static_background import Autoencoder

                module = Autoencoder(**self.spec)
            else:
                from .dynamic_background import UNet

                module = UNet(**self.spec)
            state = {k: torch.from_numpy(v.astype(np.float32)) for k, v in self.weights.items()}
            module.load_state_dict(state)
            module.eval()
            for p in module.parameters():
                p.requires_grad_(False)
            self._model = module
        return self._model

    def require_size(self, hw, what="frame"):
        if tuple(hw[:2]) != self.working_size[:2]:
            raise ShapeMismatchError(
                f"{what} size {tuple(hw[:2])} does not match the {self.model_kind} "
                f"checkpoint working size {self.working_size[:2]}"
            )

    def __eq__(self, other):
        if not isinstance(other, Checkpoint):
            return NotImplemented
        return (
            self.model_kind == other.model_kind
            and self.spec == other.spec
            and self.working_size == other.working_size
            and self.training_fingerprint == other.training_fingerprint
            and self.weights.keys() == other.weights.keys()
            and all(np.array_equal(self.weights[k], other.weights[k]) for k in self.weights)
        )

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        meta = {
            "format_version": FORMAT_VERSION,
            "model_kind": self.model_kind,
            "spec": self.spec,
            "working_size": list(self.working_size),
            "training_fingerprint": self.training_fingerprint,
            "params": [
                {"name": k, "shape": list(v.shape), "dtype": "<f4"} for k, v in self.weights.items()
            ],
        }
        with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
            _write(zf, "meta.json", json.dumps(meta, indent=2, sort_keys=True).encode())
            for k, v in self.weights.items():
                _write(zf, f"params/{k}.bin", v.tobytes(order="C"))
        return path

    @classmethod
    def load(cls, path) -> "Checkpoint":
        path = Path(path)
        try:
            with zipfile.ZipFile(path) as zf:
                meta = json.loads(zf.read("meta.json"))
                weights = {}
                for entry in meta["params"]:
                    raw = zf.read(f"params/{entry['name']}.bin")
                    arr = np.frombuffer(raw, dtype="<f4").reshape(entry["shape"])
                    weights[entry["name"]] = arr.copy()
        except (OSError, KeyError, ValueError, zipfile.BadZipFile) as exc:
            raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
        return cls(
            meta["model_kind"],
            weights,
            meta["spec"],
            tuple(meta["working_size"]),
            meta.get("training_fingerprint", {}),
        )


def _write(zf: zipfile.ZipFile, name: str, data: bytes):
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)
