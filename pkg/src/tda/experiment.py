"""Desk-scale alignment experiment and ablation harness.

Trains the framework on synthetic day/night pairs and quantifies domain
alignment with a fresh linear probe on pooled context vectors before and
after training, alongside the supervised tracking loss on held-out day
sequences. The ablation grid varies what is aligned (image features alone
or with temporal contexts) and which discriminator provides the pressure
(plain per-item vs. temporal-consistent).
"""

from __future__ import annotations

import csv
import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import DiscriminatorConfig, GeneratorConfig, SceneConfig, TrainingConfig
from .generator import TemporalFeatureGenerator, frames_to_tensor, supervised_loss
from .probe import pooled_context_vectors, probe_accuracy
from .synthetic import SyntheticSequence, generate_pair
from .training import AdversarialTrainer, batches_from_pairs

ABLATION_VARIANTS = ("if_pd", "if_tc_pd", "if_tc_tcd")
ABLATION_LABELS = {
    "if_pd": "feature alignment only, plain discriminator",
    "if_tc_pd": "feature + context alignment, plain discriminator",
    "if_tc_tcd": "feature + context alignment, temporal-consistent discriminator",
}


@dataclass
class AlignmentExperimentConfig:
    n_pairs: int = 400
    holdout_pairs: int = 64
    length: int = 8
    epochs: int = 10
    seed: int = 7
    batch_pairs: int = 8
    probe_seed: int = 0
    scene: SceneConfig = field(default_factory=SceneConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    variants: tuple[str, ...] = ("baseline",) + ABLATION_VARIANTS


@dataclass
class VariantResult:
    name: str
    probe_after: float
    heldout_l_gt: float
    final_l_gt: float
    first_epoch_l_gt: float
    seconds: float


@dataclass
class AlignmentResult:
    probe_before: float
    variants: dict[str, VariantResult]
    config: AlignmentExperimentConfig

    def ablation_rows(self) -> list[tuple[str, str, float]]:
        rows = []
        for name in ABLATION_VARIANTS:
            if name in self.variants:
                rows.append((name, ABLATION_LABELS[name], self.variants[name].probe_after))
        return rows


def variant_configs(
    name: str, base_train: TrainingConfig, base_disc: DiscriminatorConfig
) -> tuple[TrainingConfig, DiscriminatorConfig]:
    train = dataclasses.replace(base_train)
    disc = dataclasses.replace(base_disc)
    if name == "baseline":
        train.w_feat = 0.0
        train.w_ctx = 0.0
        disc.kind = "pd"
    elif name == "if_pd":
        train.align_temporal_contexts = False
        disc.kind = "pd"
    elif name == "if_tc_pd":
        disc.kind = "pd"
    elif name == "if_tc_tcd":
        disc.kind = "tcd"
    else:
        raise ValueError(f"unknown variant {name!r}")
    return train, disc


def generate_dataset(
    cfg: AlignmentExperimentConfig,
) -> tuple[list[tuple[SyntheticSequence, SyntheticSequence]], list[SyntheticSequence]]:
    pairs = [
        generate_pair(cfg.scene, cfg.length, seed=1000 + i, name=f"pair{i:04d}")
        for i in range(cfg.n_pairs)
    ]
    holdout_days = [
        generate_pair(cfg.scene, cfg.length, seed=500_000 + i, name=f"holdout{i:04d}")[0]
        for i in range(cfg.holdout_pairs)
    ]
    return pairs, holdout_days


def heldout_supervised_loss(
    generator: TemporalFeatureGenerator, head, day_sequences: list[SyntheticSequence], chunk: int = 32
) -> float:
    losses = []
    with torch.no_grad():
        for start in range(0, len(day_sequences), chunk):
            group = day_sequences[start : start + chunk]
            frames = torch.stack([frames_to_tensor(s.frames, generator.dtype) for s in group])
            boxes = torch.stack(
                [torch.as_tensor(s.primary_boxes, dtype=generator.dtype) for s in group]
            )
            feats, _ = generator.forward_sequence(frames)
            b, t = feats.shape[:2]
            cls_map, reg_map = head(feats.reshape(b * t, *feats.shape[2:]))
            loss = supervised_loss(
                cls_map, reg_map, boxes.reshape(b * t, 4), generator.cfg.frame_size
            )
            losses.append(float(loss))
    return float(np.mean(losses))


def _domain_probe(generator, pairs, probe_seed) -> float:
    day_vecs = pooled_context_vectors(generator, [day.frames for day, _ in pairs])
    night_vecs = pooled_context_vectors(generator, [night.frames for _, night in pairs])
    return probe_accuracy(day_vecs, night_vecs, seed=probe_seed)


def run_alignment_experiment(
    cfg: AlignmentExperimentConfig | None = None,
    out_dir: str | Path | None = None,
    log=print,
) -> AlignmentResult:
    cfg = cfg or AlignmentExperimentConfig()
    log(f"generating {cfg.n_pairs} day/night pairs plus {cfg.holdout_pairs} held-out day sequences")
    pairs, holdout_days = generate_dataset(cfg)
    batches = batches_from_pairs(pairs, cfg.batch_pairs)

    base_train = dataclasses.replace(cfg.training, epochs=cfg.epochs, batch_pairs=cfg.batch_pairs, seed=cfg.seed)

    torch.manual_seed(cfg.seed)
    initial_generator = TemporalFeatureGenerator(cfg.generator)
    probe_before = _domain_probe(initial_generator, pairs, cfg.probe_seed)
    log(f"probe accuracy before training: {probe_before:.3f}")

    variants: dict[str, VariantResult] = {}
    for name in cfg.variants:
        train_cfg, disc_cfg = variant_configs(name, base_train, cfg.discriminator)
        start = time.perf_counter()
        trainer = AdversarialTrainer(cfg.generator, disc_cfg, train_cfg)
        result = trainer.train(batches)
        seconds = time.perf_counter() - start
        probe_after = _domain_probe(trainer.generator, pairs, cfg.probe_seed)
        heldout = heldout_supervised_loss(trainer.generator, trainer.head, holdout_days)
        variants[name] = VariantResult(
            name=name,
            probe_after=probe_after,
            heldout_l_gt=heldout,
            final_l_gt=result.epoch_means[-1].l_gt,
            first_epoch_l_gt=result.epoch_means[0].l_gt,
            seconds=seconds,
        )
        log(
            f"variant {name}: probe after = {probe_after:.3f}, "
            f"held-out supervised loss = {heldout:.4f} ({seconds:.0f}s)"
        )

    outcome = AlignmentResult(probe_before=probe_before, variants=variants, config=cfg)
    if out_dir is not None:
        write_experiment_report(outcome, Path(out_dir))
    return outcome


def write_experiment_report(result: AlignmentResult, out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    ablation_path = out_dir / "ablation.csv"
    with open(ablation_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "description", "probe_accuracy_after"])
        for name, label, acc in result.ablation_rows():
            writer.writerow([name, label, repr(acc)])
    summary_path = out_dir / "experiment.json"
    payload = {
        "probe_before": result.probe_before,
        "variants": {name: dataclasses.asdict(v) for name, v in result.variants.items()},
        "n_pairs": result.config.n_pairs,
        "epochs": result.config.epochs,
        "seed": result.config.seed,
    }
    summary_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return [ablation_path, summary_path]
