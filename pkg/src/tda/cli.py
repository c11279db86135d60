"""Command-line entry point wiring the pipeline.

Subcommands: ``synth`` renders paired day/night sequences, ``mine`` runs
prompt-driven object mining over a frame directory, ``train`` runs the
adversarial training loop on a synth data root, ``eval`` scores prediction
files against ground truth, and ``report`` runs the alignment/ablation
experiment. Every subcommand writes its artifacts under one run directory
and records them in ``manifest.json`` there.

Exit codes: 0 success, 2 usage error, 3 configuration error, 1 any other
failure (with a one-line diagnostic on stderr).
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

import numpy as np

from . import evaluation, manifest, mining, synthetic
from .config import AppConfig, load_config, dump_config
from .core import DomainLabel, FrameTensor
from .errors import ConfigurationError, TdaError


def _default_out(subcommand: str) -> Path:
    root = os.environ.get("TDA_RUN_DIR", "runs")
    return Path(root) / subcommand


def _add_common(parser: argparse.ArgumentParser, subcommand: str):
    parser.add_argument("--config", type=Path, default=None, help="sectioned key-value config file")
    parser.add_argument("--out", type=Path, default=None, help="run directory (default: $TDA_RUN_DIR/<cmd>)")
    parser.add_argument("--seed", type=int, default=None, help="override the configured seed")
    parser.add_argument("--device", default="cpu", help="compute device (cpu only)")
    parser.set_defaults(out_default=_default_out(subcommand))


def _prepare(args) -> tuple[AppConfig, Path]:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.training.seed = args.seed
    if args.device != "cpu":
        raise ConfigurationError(f"only cpu is supported, got device {args.device!r}")
    out = args.out if args.out is not None else args.out_default
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out


def _finish(out: Path, cfg: AppConfig, command: str, artifacts: list[tuple[str, Path]]):
    m = manifest.load_or_create(out, cfg.training.seed, dump_config(cfg))
    for kind, path in artifacts:
        m.add_artifact(kind, path, out)
    m.record_command(command)
    m.save(out)


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg, out = _prepare(args)
    seed = cfg.training.seed
    artifacts = []
    for i in range(args.n):
        day, night = synthetic.generate_pair(
            cfg.scene, seed=seed + i, name=f"seq{i:04d}"
        )
        for seq in (day, night):
            paths = synthetic.save_sequence(seq, out)
            domain = "day" if seq.domain is DomainLabel.SOURCE_DAY else "night"
            artifacts.append((f"{domain}-annotation", paths["anno"]))
            artifacts.append((f"{domain}-objects", paths["objects"]))
    _finish(out, cfg, f"synth --n {args.n}", artifacts)
    print(f"wrote {args.n} day/night sequence pairs under {out}")
    return 0


# ---------------------------------------------------------------------------
# mine
# ---------------------------------------------------------------------------


def _resolve_oracle_objects(video: Path) -> dict:
    candidates = [
        video.parent.parent / "objects" / f"{video.name}.csv",
        video.with_suffix(".objects.csv"),
    ]
    for c in candidates:
        if c.is_file():
            return synthetic.load_objects_file(c)
    raise ConfigurationError(
        f"oracle detector needs planted ground truth; none found near {video}"
    )


def _load_video_frames(video: Path) -> list[FrameTensor]:
    if video.is_dir():
        stack = synthetic.load_frames(video)
    elif video.suffix == ".npz":
        with np.load(video) as payload:
            stack = payload[payload.files[0]]
        if stack.ndim != 4 or stack.shape[1] != 3:
            raise ConfigurationError(f"npz video must hold a (T, 3, H, W) array, got {stack.shape}")
        stack = stack.astype(np.float32)
    else:
        raise ConfigurationError(f"--video must be a frame directory or .npz file, got {video}")
    return [FrameTensor(stack[t], t) for t in range(stack.shape[0])]


def cmd_mine(args) -> int:
    cfg, out = _prepare(args)
    video = Path(args.video)
    frames = _load_video_frames(video)
    objects = None
    if cfg.mining.detector == "oracle":
        objects = _resolve_oracle_objects(video)
    detector = mining.make_detector(cfg.mining, objects)
    patches, trajectories = mining.mine(frames, args.prompt, detector, cfg.mining)

    traj_path = out / "trajectories.txt"
    mining.write_trajectories(traj_path, trajectories)
    artifacts = [("trajectories", traj_path)]
    patch_dir = out / "patches"
    patch_dir.mkdir(exist_ok=True)
    from PIL import Image

    for patch in patches:
        for tag, img in (("z", patch.template), ("x", patch.search)):
            arr = (np.round(np.clip(img, 0.0, 1.0) * 255.0)).astype(np.uint8).transpose(1, 2, 0)
            p = patch_dir / f"track{patch.track_id:03d}_frame{patch.frame_index + 1:06d}_{tag}.png"
            Image.fromarray(arr).save(p)
    artifacts.append(("patches", patch_dir))
    _finish(out, cfg, f"mine --video {video} --prompt {args.prompt!r}", artifacts)
    print(
        f"mined {len(trajectories)} trajectories / {len(patches)} patch pairs from {len(frames)} frames"
    )
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _load_training_pairs(cfg: AppConfig, data_root: Path):
    day_names = synthetic.list_sequences(data_root, DomainLabel.SOURCE_DAY)
    night_names = synthetic.list_sequences(data_root, DomainLabel.TARGET_NIGHT)
    shared = [n for n in day_names if n in set(night_names)]
    if not shared:
        raise ConfigurationError(f"no paired day/night sequences under {data_root}")
    pairs = []
    for name in shared:
        day_frames = synthetic.load_frames(data_root / "day" / "seqs" / name)
        night_frames = synthetic.load_frames(data_root / "night" / "seqs" / name)
        boxes = synthetic.load_primary_boxes(data_root / "day" / "anno" / f"{name}.txt")
        pairs.append(((day_frames, boxes), night_frames))
    return pairs


def cmd_train(args) -> int:
    from .training import AdversarialTrainer, DomainBatch

    cfg, out = _prepare(args)
    data_root = Path(args.data) if args.data is not None else Path(cfg.data.root)
    if not data_root.is_dir():
        raise ConfigurationError(f"training data root not found: {data_root}")
    raw_pairs = _load_training_pairs(cfg, data_root)

    batches = []
    step = cfg.training.batch_pairs
    for start in range(0, len(raw_pairs), step):
        chunk = raw_pairs[start : start + step]
        batch = DomainBatch([src for src, _ in chunk], [tgt for _, tgt in chunk])
        batch.validate()
        batches.append(batch)

    trainer = AdversarialTrainer(cfg.generator, cfg.discriminator, cfg.training)
    result = trainer.train(batches, out_dir=out)
    artifacts = [("loss-history", out / "history.csv"), ("epoch-means", out / "epochs.csv")]
    artifacts += [("checkpoint", p) for p in result.checkpoint_paths]
    _finish(out, cfg, f"train --data {data_root}", artifacts)
    final = result.epoch_means[-1] if result.epoch_means else None
    if final is not None:
        print(
            f"trained {cfg.training.epochs} epochs x {len(batches)} batches; "
            f"final e_d={final.e_d:.4f} e_g={final.e_g:.4f} l_gt={final.l_gt:.4f}"
        )
    else:
        print("no batches; nothing trained")
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def cmd_eval(args) -> int:
    cfg, out = _prepare(args)
    annotated = evaluation.load_annotated_dir(Path(args.gt))
    trackers = evaluation.load_prediction_dir(Path(args.results))
    per_tracker = {}
    for tracker, runs in trackers.items():
        if args.attribute:
            curves = evaluation.attribute_report(runs, annotated, args.attribute)
            if curves is None:
                print(f"no sequence carries attribute {args.attribute}; empty report")
                (out / "EMPTY_REPORT").write_text(
                    f"no sequence carries attribute {args.attribute}\n"
                )
                _finish(out, cfg, f"eval --attribute {args.attribute}", [("empty-report", out / "EMPTY_REPORT")])
                return 0
        else:
            curves = evaluation.evaluate_pooled(runs, annotated)
        per_tracker[tracker] = curves
    written = evaluation.emit_report(per_tracker, out)
    artifacts = [("metrics", p) for p in written]
    _finish(out, cfg, f"eval --gt {args.gt} --results {args.results}", artifacts)
    for tracker in sorted(per_tracker):
        c = per_tracker[tracker]
        print(
            f"{tracker}: precision@20px={c.precision_at_20px:.4f} "
            f"norm_precision@0.2={c.norm_precision_at_0_2:.4f} success_auc={c.success_auc:.4f}"
        )
    return 0


# ---------------------------------------------------------------------------
# report (alignment + ablation experiment)
# ---------------------------------------------------------------------------


def cmd_report(args) -> int:
    from .experiment import AlignmentExperimentConfig, run_alignment_experiment

    cfg, out = _prepare(args)
    exp = AlignmentExperimentConfig(
        n_pairs=args.pairs,
        holdout_pairs=args.holdout,
        epochs=args.epochs,
        seed=cfg.training.seed,
        scene=cfg.scene,
        generator=cfg.generator,
        discriminator=cfg.discriminator,
        training=cfg.training,
    )
    result = run_alignment_experiment(exp, out_dir=out)
    artifacts = [("ablation-table", out / "ablation.csv"), ("experiment-summary", out / "experiment.json")]
    _finish(out, cfg, f"report --pairs {args.pairs} --epochs {args.epochs}", artifacts)
    print(f"probe before: {result.probe_before:.3f}")
    for name, label, acc in result.ablation_rows():
        print(f"{name}: probe after = {acc:.3f}  ({label})")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tda",
        description="Temporal domain adaptation training framework for day-to-night tracking",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render paired day/night synthetic sequences")
    p.add_argument("--n", type=int, default=8, help="number of sequence pairs")
    _add_common(p, "synth")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("mine", help="prompt-driven object mining over a frame directory")
    p.add_argument("--video", required=True, help="frame directory or .npz stack")
    p.add_argument("--prompt", required=True, help="text prompt naming the object category")
    _add_common(p, "mine")
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("train", help="adversarial training on a synth data root")
    p.add_argument("--data", default=None, help="synth data root (defaults to [data].root)")
    _add_common(p, "train")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="one-pass evaluation of prediction files")
    p.add_argument("--gt", required=True, help="ground-truth root with anno/ and att/")
    p.add_argument("--results", required=True, help="prediction directory (per-tracker)")
    p.add_argument("--attribute", default=None, help="restrict to sequences with this attribute")
    _add_common(p, "eval")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="run the alignment + ablation experiment")
    p.add_argument("--pairs", type=int, default=400, help="training day/night pairs")
    p.add_argument("--holdout", type=int, default=64, help="held-out day sequences")
    p.add_argument("--epochs", type=int, default=10, help="training epochs per variant")
    _add_common(p, "report")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except TdaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
