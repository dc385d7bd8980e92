"""Command-line entry point: ``dynbgs {train,infer,evaluate,benchmark,synth,run-all}``.

Exit codes: 0 ok, 2 input/data error, 3 checkpoint/shape error, 4 numeric
failure.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import sys
from pathlib import Path

import cv2
import numpy as np
import torch

from . import __version__
from .checkpoint import Checkpoint
from .config import RunConfig, apply_override
from .data_ingest import (
    ScalePolicy,
    load_cdnet_sequence,
    load_frames,
    load_i2r_sequence,
    resize_mask,
    select_training_frames,
)
from .dynamic_background import train_unet
from .errors import CheckpointError, DataError, DynBGSError, NumericError
from .evaluation import (
    benchmark_fps,
    evaluate_sequence,
    fps_trend,
    summary_table,
    write_report_csv,
)
from .label_prep import make_dynamic_labels, save_labels
from .segmentation import calibrate_max_F, run_pipeline, run_pipeline_batch
from .static_background import train_autoencoder
from .synth import export_cdnet, generate_scene

log = logging.getLogger("dynbgs")

EXIT_OK, EXIT_DATA, EXIT_CHECKPOINT, EXIT_NUMERIC = 0, 2, 3, 4


class StageError(Exception):
    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        if isinstance(cause, NumericError):
            self.exit_code = EXIT_NUMERIC
        elif isinstance(cause, CheckpointError):
            self.exit_code = EXIT_CHECKPOINT
        else:
            self.exit_code = EXIT_DATA
        super().__init__(f"[{stage}] {cause}")


@contextlib.contextmanager
def stage(name: str):
    try:
        yield
    except StageError:
        raise
    except (DynBGSError, ValueError, TypeError, OSError) as exc:
        raise StageError(name, exc) from exc


# ---------------------------------------------------------------- paths


def out_dir(cfg: RunConfig) -> Path:
    return Path(cfg.output_dir)


def checkpoint_paths(cfg: RunConfig, override=None) -> tuple[Path, Path]:
    d = Path(override) if override else out_dir(cfg) / "checkpoints"
    return d / "autoencoder.ckpt", d / "unet.ckpt"


def synthetic_root(cfg: RunConfig) -> Path:
    return Path(cfg.dataset.path) if cfg.dataset.path else out_dir(cfg) / "scene"


def load_manifest(cfg: RunConfig):
    ds = cfg.dataset
    if ds.layout == "synthetic":
        root = synthetic_root(cfg)
        if not (root / "temporalROI.txt").exists():
            export_cdnet(generate_scene(cfg.synth_spec()), cfg.synth_spec(), root)
        return load_cdnet_sequence(root)
    if not ds.path:
        raise DataError("dataset.path is not set")
    if ds.layout == "cdnet":
        m = load_cdnet_sequence(ds.path)
        if ds.temporal_roi:
            m.temporal_roi = tuple(ds.temporal_roi)
            m.__post_init__()
        return m
    return load_i2r_sequence(ds.path, ds.gt_map, ds.temporal_roi)


def training_indices(cfg: RunConfig, manifest) -> list[int]:
    return select_training_frames(manifest, cfg.training.max_frames, cfg.training.explicit_indices)


# ---------------------------------------------------------------- commands


def cmd_train(cfg: RunConfig) -> dict:
    with stage("data_ingest"):
        manifest = load_manifest(cfg)
        indices = training_indices(cfg, manifest)
        frames = load_frames(manifest, indices, cfg.scale())
    fingerprint = {"sequence": manifest.name, "frame_indices": indices}
    log.info("training on %d frames of %s at %s", len(indices), manifest.name, frames.shape[1:])

    with stage("static_background"):
        ae = train_autoencoder(frames, cfg.training.ae.train_config(cfg.seed), fingerprint)
    with stage("label_prep"):
        labels = make_dynamic_labels(frames, ae, cfg.label_config())
    with stage("dynamic_background"):
        unet = train_unet(
            frames, labels, cfg.training.unet.train_config(cfg.seed),
            features=cfg.training.unet_features, fingerprint=fingerprint,
        )

    with stage("persist"):
        ae_path, unet_path = checkpoint_paths(cfg)
        ae.save(ae_path)
        unet.save(unet_path)
        save_labels(labels, out_dir(cfg) / "labels", indices)
        run_manifest = {
            "config_hash": cfg.hash(),
            "seed": cfg.seed,
            "sequence": manifest.name,
            "frame_indices": indices,
            "working_size": list(frames.shape[1:]),
            "version": __version__,
        }
        path = out_dir(cfg) / "run_manifest.json"
        path.write_text(json.dumps(run_manifest, indent=2, sort_keys=True) + "\n")
        cfg.save(out_dir(cfg) / "config.json")
    return run_manifest


def _load_checkpoints(cfg, checkpoints=None):
    ae_path, unet_path = checkpoint_paths(cfg, checkpoints)
    for p in (ae_path, unet_path):
        if not p.exists():
            raise CheckpointError(f"checkpoint {p} not found")
    ae, unet = Checkpoint.load(ae_path), Checkpoint.load(unet_path)
    if ae.model_kind != "autoencoder" or unet.model_kind != "unet":
        raise CheckpointError("checkpoint kinds do not match autoencoder/unet")
    return ae, unet


def _overlay(frame_bgr: np.ndarray, mask: np.ndarray) -> np.ndarray:
    out = frame_bgr.copy()
    out[mask > 0] = (0.5 * out[mask > 0] + [0, 0, 127]).astype(np.uint8)
    return out


def cmd_infer(cfg: RunConfig, checkpoints=None, overlays: bool = False) -> Path:
    with stage("checkpoint"):
        ae, unet = _load_checkpoints(cfg, checkpoints)
    with stage("data_ingest"):
        manifest = load_manifest(cfg)
        policy = cfg.scale()
        hw = policy.working_hw(*manifest.native_size[:2])
    with stage("checkpoint"):
        ae.require_size(hw, f"{manifest.name} working")
        unet.require_size(hw, f"{manifest.name} working")

    calib = 0.0
    if cfg.calibrate:
        with stage("calibration"):
            frames = load_frames(manifest, training_indices(cfg, manifest), policy)
            calib = calibrate_max_F(frames, ae, unet, cfg.label_config().channel_reduce)

    masks_dir = out_dir(cfg) / "masks"
    masks_dir.mkdir(parents=True, exist_ok=True)
    if overlays:
        (out_dir(cfg) / "overlays").mkdir(parents=True, exist_ok=True)
    native_hw = manifest.native_size[:2]
    run = run_pipeline if cfg.mode == "online" else run_pipeline_batch
    rows = []
    with stage("segmentation"):
        results = run(
            manifest, ae, unet, cfg.threshold_params(), cfg.postproc_params(),
            calibration_max_F=calib, policy=policy, reduce=cfg.label_config().channel_reduce,
        )
        for res in results:
            mask = resize_mask(res.S_postproc, native_hw)
            cv2.imwrite(str(masks_dir / f"bin{res.frame_index:06d}.png"), mask * np.uint8(255))
            if overlays:
                frame = cv2.imread(str(manifest.frame_path(res.frame_index)))
                cv2.imwrite(str(out_dir(cfg) / "overlays" / f"ovl{res.frame_index:06d}.jpg"), _overlay(frame, mask))
            rows.append((res.frame_index, int(res.S_postproc.sum()), f"{res.max_F:.6f}", f"{res.mean_C:.6f}"))

    with (out_dir(cfg) / "diagnostics.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "foreground_pixel_count", "max_F", "mean_C"])
        w.writerows(rows)
    log.info("wrote %d masks to %s", len(rows), masks_dir)
    return masks_dir


def cmd_evaluate(cfg: RunConfig, masks_dir=None):
    with stage("evaluation"):
        manifest = load_manifest(cfg)
        report = evaluate_sequence(manifest, Path(masks_dir) if masks_dir else out_dir(cfg) / "masks")
        write_report_csv([report], out_dir(cfg) / "report.csv")
        table = summary_table({"Our Method": {report.sequence: report.f_measure}})
        (out_dir(cfg) / "summary.md").write_text(table)
    print(table, end="")
    return report


def cmd_benchmark(cfg: RunConfig, checkpoints=None, warmup: int = 3, repeats: int = 3, trend: bool = True):
    with stage("checkpoint"):
        ae, unet = _load_checkpoints(cfg, checkpoints)
    with stage("data_ingest"):
        manifest = load_manifest(cfg)
        first, last = manifest.temporal_roi
        frames = load_frames(manifest, range(first, last + 1), cfg.scale())
    with stage("checkpoint"):
        ae.require_size(frames.shape[1:3], "benchmark frame")
    record = benchmark_fps(frames, ae, unet, cfg.threshold_params(), cfg.postproc_params(), warmup, repeats)
    print(record.to_json())
    (out_dir(cfg)).mkdir(parents=True, exist_ok=True)
    (out_dir(cfg) / "benchmark.json").write_text(record.to_json() + "\n")
    if trend:
        for size, fps in fps_trend(ae.working_size, unet.spec["features"]):
            log.info("fps trend: untrained nets at %s -> %.1f fps", size, fps)
    return record


def cmd_synth(cfg: RunConfig, path=None) -> Path:
    with stage("synth"):
        spec = cfg.synth_spec()
        root = Path(path) if path else synthetic_root(cfg)
        export_cdnet(generate_scene(spec), spec, root)
        (root / "synth_spec.json").write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n")
    log.info("synthetic scene written to %s", root)
    return root


def cmd_run_all(cfg: RunConfig):
    cmd_train(cfg)
    cmd_infer(cfg)
    return cmd_evaluate(cfg)


# ---------------------------------------------------------------- argparse


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="JSON run configuration")
    common.add_argument("--dataset", help="dataset path (overrides dataset.path)")
    common.add_argument("--layout", choices=("cdnet", "i2r", "synthetic"))
    common.add_argument("--gt-map", help="I2R frame-to-ground-truth mapping file")
    common.add_argument("-o", "--output-dir")
    common.add_argument("--seed", type=int)
    common.add_argument("--mode", choices=("online", "batch"))
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config value, e.g. training.unet.epochs=5")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="dynbgs", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train autoencoder, prepare labels, train U-Net")
    p = sub.add_parser("infer", parents=[common], help="segment the temporal-ROI frames")
    p.add_argument("--checkpoints", help="directory holding autoencoder.ckpt and unet.ckpt")
    p.add_argument("--overlays", action="store_true", help="also write overlay images")
    p = sub.add_parser("evaluate", parents=[common], help="score masks against ground truth")
    p.add_argument("--masks", help="directory of bin%%06d.png masks")
    p = sub.add_parser("benchmark", parents=[common], help="measure inference frames per second")
    p.add_argument("--checkpoints")
    p.add_argument("--warmup", type=int, default=3)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--no-trend", action="store_true")
    p = sub.add_parser("synth", parents=[common], help="export a synthetic scene in CDnet layout")
    p.add_argument("path", nargs="?")
    sub.add_parser("run-all", parents=[common], help="train, infer and evaluate")
    return parser


def resolve_config(args) -> RunConfig:
    data = json.loads(Path(args.config).read_text()) if args.config else {}
    flags = {
        "dataset.path": args.dataset,
        "dataset.layout": args.layout,
        "dataset.gt_map": args.gt_map,
        "output_dir": args.output_dir,
        "seed": args.seed,
        "mode": args.mode,
    }
    for key, value in flags.items():
        if value is not None:
            apply_override(data, f"{key}={json.dumps(value)}")
    for assignment in args.set:
        apply_override(data, assignment)
    return RunConfig.from_dict(data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    torch.use_deterministic_algorithms(True)
    try:
        with stage("config"):
            cfg = resolve_config(args)
        if args.command == "train":
            cmd_train(cfg)
        elif args.command == "infer":
            cmd_infer(cfg, args.checkpoints, args.overlays)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, args.masks)
        elif args.command == "benchmark":
            cmd_benchmark(cfg, args.checkpoints, args.warmup, args.repeats, not args.no_trend)
        elif args.command == "synth":
            cmd_synth(cfg, args.path)
        elif args.command == "run-all":
            cmd_run_all(cfg)
    except StageError as exc:
        print(f"error {exc}", file=sys.stderr)
        return exc.exit_code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
