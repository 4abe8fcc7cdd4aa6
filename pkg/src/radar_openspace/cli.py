"""Command-line front end: simulate | train | eval | bench | matrix."""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import dataio, eval as evaluation, simulate, training
from .eval import ARCHS, MATRIX_ROWS
from .models import build_model
from .training import IN_CHANNELS, LABEL_HW

MODALITIES = ("rad", "ra", "doa")
LABEL_DOMAINS = ("polar", "cartesian")
INPUT_HW = {"rad": (128, 48), "ra": (128, 48), "doa": (128, 128)}


@dataclass(frozen=True)
class ExperimentConfig:
    modality: str = "ra"
    label_domain: str = "polar"
    arch: str = "fcn_tiny"
    lr: float = 0.005
    steps: int = 3000
    batch_size: int = 8
    seed: int = 0
    dataset: str = "dataset"
    window: str = "hann"       # none | hann
    tdm: str = "off"           # on | off
    n_sequences: int = 11
    frames_per_seq: int = 32

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ValueError(f"modality must be one of {MODALITIES}, got {self.modality!r}")
        if self.label_domain not in LABEL_DOMAINS:
            raise ValueError(f"label_domain must be one of {LABEL_DOMAINS}")
        if self.arch not in ARCHS:
            raise ValueError(f"arch must be one of {ARCHS}, got {self.arch!r}")
        if self.modality == "doa" and self.label_domain != "cartesian":
            raise ValueError("doa input is already Cartesian; its labels must be too")
        if self.window not in ("none", "hann"):
            raise ValueError("window must be 'none' or 'hann'")
        if self.tdm not in ("on", "off"):
            raise ValueError("tdm must be 'on' or 'off'")

    def render(self) -> str:
        return "".join(f"{f.name}={getattr(self, f.name)}\n" for f in fields(self))

    @staticmethod
    def parse(text: str) -> "ExperimentConfig":
        types = {f.name: f.type for f in fields(ExperimentConfig)}
        casts = {"float": float, "int": int, "str": str}
        kv = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key = key.strip()
            if not sep or key not in types:
                raise ValueError(f"bad config line: {line!r}")
            kv[key] = casts[types[key]](value.strip())
        return ExperimentConfig(**kv)


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    for f in fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        p.add_argument(flag, type={"float": float, "int": int, "str": str}[f.type],
                       default=None, help=f"override {f.name} (default {f.default})")


def _resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.config:
        cfg = ExperimentConfig.parse(Path(args.config).read_text())
    overrides = {
        f.name: getattr(args, f.name)
        for f in fields(ExperimentConfig)
        if getattr(args, f.name, None) is not None
    }
    return replace(cfg, **overrides)


def write_pgm(path: str | Path, grid: np.ndarray) -> None:
    """8-bit binary portable graymap."""
    grid = np.ascontiguousarray(grid, dtype=np.uint8)
    h, w = grid.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + grid.tobytes())


def mask_to_image(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """0 = ignore, 128 = not open, 255 = open."""
    img = np.where(pred == 1, 255, 128).astype(np.uint8)
    img[gt == 255] = 0
    return img


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    cfg = _resolve_config(args)
    out = Path(args.out or cfg.dataset)
    radar = simulate.default_config(tdm_mode=cfg.tdm == "on")
    manifest = dataio.build_synthetic_dataset(
        seed=cfg.seed, out_dir=out, n_sequences=cfg.n_sequences,
        frames_per_seq=cfg.frames_per_seq, cfg=radar, window=cfg.window,
    )
    n_train = sum(s.n_frames for s in manifest.split_sequences("train"))
    n_eval = sum(s.n_frames for s in manifest.split_sequences("eval"))
    print(f"dataset={out}")
    print(f"sequences={len(manifest.sequences)} train_frames={n_train} eval_frames={n_eval}")
    for name in sorted(manifest.stats):
        mean, std = manifest.stats[name]
        print(f"stats.{name}.mean={mean:.6f} stats.{name}.std={std:.6f}")
    return 0


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    manifest = dataio.DatasetManifest.load(Path(cfg.dataset) / dataio.MANIFEST_NAME)
    out = Path(args.out or "runs")
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / f"{cfg.arch}_{cfg.modality}_{cfg.label_domain}_seed{cfg.seed}.rsgc"
    log_path = out / f"{ckpt.stem}.log"
    with open(log_path, "w") as fh:
        def log(entry):
            line = " ".join(f"{k}={v:.6f}" if isinstance(v, float) else f"{k}={v}"
                            for k, v in entry.items())
            fh.write(line + "\n")
            if "eval_miou" in entry:
                print(line)

        result = training.run_training(
            manifest, cfg.modality, cfg.label_domain, cfg.arch,
            steps=cfg.steps, batch_size=cfg.batch_size, lr=cfg.lr,
            seed=cfg.seed, checkpoint_path=ckpt, log=log,
        )
    print(f"checkpoint={ckpt}")
    print(f"best_eval_miou={result.best_miou:.6f} best_step={result.best_step}")
    return 0


def cmd_eval(args) -> int:
    cfg = _resolve_config(args)
    model, _, meta = training.load_model(args.checkpoint)
    if getattr(args, "arch", None) is not None and args.arch != meta["arch"]:
        raise ValueError(
            f"checkpoint holds arch {meta['arch']!r}, requested {args.arch!r}"
        )
    modality, label_domain = meta["modality"], meta["label_domain"]
    manifest = dataio.DatasetManifest.load(Path(cfg.dataset) / dataio.MANIFEST_NAME)
    x, y = dataio.load_split(manifest, args.split, modality, label_domain)
    miou, ious, cm = training.evaluate_model(model, x, y, cfg.batch_size)
    report = evaluation.metrics_report(miou, ious, cm)
    print(report, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.txt").write_text(report)
    if args.dump_masks:
        out = Path(args.out or "masks")
        out.mkdir(parents=True, exist_ok=True)
        frame_ids = [
            (rec.sequence_id, rec.frame_id)
            for seq in manifest.split_sequences(args.split)
            for rec in dataio.read_container(manifest.root / seq.filename)
        ]
        for i, (seq_id, frame_id) in enumerate(frame_ids):
            logits = model.forward(x[i : i + 1], train=False)
            pred = logits[0].argmax(axis=-1).astype(np.uint8)
            write_pgm(out / f"seq_{seq_id:03d}_frame_{frame_id:05d}.pgm",
                      mask_to_image(pred, y[i]))
        print(f"masks={out} frames={len(frame_ids)}")
    return 0


def cmd_bench(args) -> int:
    requested = args.arch
    args.arch = None if requested in (None, "all") else requested
    cfg = _resolve_config(args)
    archs = ARCHS if requested in (None, "all") else (requested,)
    in_ch = IN_CHANNELS[cfg.modality]
    h, w = INPUT_HW[cfg.modality]
    for arch in archs:
        model = build_model(arch, in_ch, LABEL_HW[cfg.label_domain], seed=cfg.seed)
        r = evaluation.benchmark_fps(model, (h, w, in_ch),
                                     warmup=args.warmup, iters=args.iters)
        print(f"arch={arch} fps={r.fps:.2f} fps_std={r.fps_std:.2f} "
              f"median_latency_s={r.median_latency_s:.6f} hardware={r.hardware}")
    return 0


def _matrix_cell(task):
    manifest_path, modality, label_domain, arch, steps, batch_size, lr, seed, log_path = task
    manifest = dataio.DatasetManifest.load(manifest_path)
    with open(log_path, "w") as fh:
        result = training.run_training(
            manifest, modality, label_domain, arch, steps=steps,
            batch_size=batch_size, lr=lr, seed=seed,
            log=lambda e: fh.write(repr(e) + "\n"),
        )
    return (modality, label_domain), arch, result.best_miou


def cmd_matrix(args) -> int:
    cfg = _resolve_config(args)
    manifest_path = Path(cfg.dataset) / dataio.MANIFEST_NAME
    out = Path(args.out or "matrix")
    out.mkdir(parents=True, exist_ok=True)
    archs = ARCHS if args.archs == "all" else tuple(args.archs.split(","))
    tasks = [
        (manifest_path, modality, label_domain, arch, cfg.steps, cfg.batch_size,
         cfg.lr, cfg.seed, out / f"cell_{modality}_{label_domain}_{arch}.log")
        for modality, label_domain in MATRIX_ROWS
        for arch in archs
    ]
    workers = int(os.environ.get("RADAR_OPENSPACE_THREADS", "1"))
    results: dict[tuple[str, str], dict[str, float]] = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_matrix_cell, tasks))
    else:
        cells = [_matrix_cell(t) for t in tasks]
    for row, arch, miou in cells:
        results.setdefault(row, {})[arch] = miou
    report = evaluation.matrix_report_csv(results)
    (out / "matrix.csv").write_text(report)
    print(report, end="")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radar-openspace",
        description="Synthetic radar open-space segmentation experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize a seeded dataset")
    _add_config_args(p)
    p.add_argument("--out", help="output directory (default: config dataset path)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train one model")
    _add_config_args(p)
    p.add_argument("--out", help="run directory (default: runs/)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _add_config_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="eval", choices=("train", "eval"))
    p.add_argument("--dump-masks", action="store_true",
                   help="write predicted masks as PGM images")
    p.add_argument("--out", help="output directory for metrics/masks")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="inference throughput")
    _add_config_args(p)
    p.add_argument("--warmup", type=int, default=5)
    p.add_argument("--iters", type=int, default=30)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("matrix", help="train/eval all five input/label rows")
    _add_config_args(p)
    p.add_argument("--archs", default="all", help="'all' or comma list")
    p.add_argument("--out", help="output directory (default: matrix/)")
    p.set_defaults(func=cmd_matrix)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
