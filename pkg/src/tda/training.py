"""Alternating adversarial training of the temporal generator against the
domain discriminator.

Each step first updates the discriminator on detached generator outputs
(true domain labels), then updates the generator and tracker head against
the refreshed discriminator (flipped labels plus the supervised tracking
loss on daytime samples). The discriminator's Adam learning rate follows
the polynomial decay schedule; the generator's stays constant. The
convolutional backbone receives no updates during the configured freeze
window. When both adversarial weights are zero the discriminator sub-step
is skipped and training degenerates to pure supervised training.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .config import DiscriminatorConfig, GeneratorConfig, TrainingConfig
from .core import DomainLabel
from .discriminator import DomainLogitSeries, build_discriminator
from .errors import ContractError, TrainingDivergedError
from .generator import TemporalFeatureGenerator, TrackerHead, frames_to_tensor, supervised_loss
from .losses import discriminator_loss, generator_loss, poly_lr

HISTORY_COLUMNS = ("epoch", "step", "e_d", "e_g", "l_gt", "l_g_feat", "l_g_ctx", "lr_d")


@dataclass
class DomainBatch:
    """One training step's worth of sequences from both domains.

    ``source_sequences`` holds (frames, boxes) pairs with frames of shape
    (T, 3, H, W) and per-frame supervision boxes (T, 4); the unannotated
    ``target_sequences`` hold frames only. All sequences must share T >= 3.
    """

    source_sequences: list[tuple[np.ndarray, np.ndarray]]
    target_sequences: list[np.ndarray]

    def validate(self):
        if not self.source_sequences or not self.target_sequences:
            raise ContractError("both domains must contribute sequences to a batch")
        lengths = {frames.shape[0] for frames, _ in self.source_sequences}
        lengths |= {frames.shape[0] for frames in self.target_sequences}
        if len(lengths) != 1:
            raise ContractError(f"sequences in a batch must share one length, got {lengths}")
        if min(lengths) < 3:
            raise ContractError("sequence length must be >= 3")


@dataclass
class LossReport:
    e_d: float
    e_g: float
    l_gt: float
    l_g_feat: float
    l_g_ctx: float
    step: int
    epoch: int = 0
    lr_d: float = 0.0

    def validate(self):
        vals = (self.e_d, self.e_g, self.l_gt, self.l_g_feat, self.l_g_ctx)
        if not all(np.isfinite(v) for v in vals):
            raise TrainingDivergedError(f"non-finite loss at step {self.step}: {vals}")


@dataclass
class TrainingResult:
    history: list[LossReport] = field(default_factory=list)
    epoch_means: list[LossReport] = field(default_factory=list)
    checkpoint_paths: list[Path] = field(default_factory=list)


def parameter_checksum(module: nn.Module) -> str:
    """Order-stable digest of every parameter tensor's exact bytes."""
    digest = hashlib.sha256()
    for name, param in sorted(module.named_parameters()):
        digest.update(name.encode())
        digest.update(param.detach().cpu().numpy().tobytes())
    return digest.hexdigest()


def history_to_csv(history: list[LossReport]) -> str:
    lines = [",".join(HISTORY_COLUMNS)]
    for r in history:
        lines.append(
            f"{r.epoch},{r.step},{r.e_d!r},{r.e_g!r},{r.l_gt!r},"
            f"{r.l_g_feat!r},{r.l_g_ctx!r},{r.lr_d!r}"
        )
    return "\n".join(lines) + "\n"


class AdversarialTrainer:
    def __init__(
        self,
        gen_cfg: GeneratorConfig | None = None,
        disc_cfg: DiscriminatorConfig | None = None,
        train_cfg: TrainingConfig | None = None,
    ):
        self.gen_cfg = gen_cfg or GeneratorConfig()
        self.disc_cfg = disc_cfg or DiscriminatorConfig()
        self.cfg = train_cfg or TrainingConfig()
        torch.manual_seed(self.cfg.seed)
        self.generator = TemporalFeatureGenerator(self.gen_cfg)
        self.head = TrackerHead(self.gen_cfg.feature_channels)
        self.discriminator = build_discriminator(
            self.disc_cfg, self.gen_cfg.context_width, self.gen_cfg.feature_channels
        )
        gen_params = list(self.generator.parameters()) + list(self.head.parameters())
        self.gen_opt = torch.optim.Adam(gen_params, lr=self.cfg.gen_base_lr)
        self.disc_opt = torch.optim.Adam(self.discriminator.parameters(), lr=self.cfg.disc_base_lr)
        self.global_step = 0
        self.total_steps: int | None = None

    # -- helpers --

    @property
    def adversarial_active(self) -> bool:
        w_feat = self.cfg.w_feat if self.cfg.align_image_features else 0.0
        w_ctx = self.cfg.w_ctx if self.cfg.align_temporal_contexts else 0.0
        return w_feat > 0.0 or w_ctx > 0.0

    def set_backbone_frozen(self, frozen: bool):
        for param in self.generator.backbone_parameters():
            param.requires_grad_(not frozen)

    def _stack(self, sequences: list[np.ndarray]) -> torch.Tensor:
        return torch.stack([frames_to_tensor(frames, self.generator.dtype) for frames in sequences])

    def _series(self, logits: torch.Tensor) -> list[DomainLogitSeries]:
        return [DomainLogitSeries(row) for row in logits]

    def _supervised(self, features: torch.Tensor, boxes: torch.Tensor) -> torch.Tensor:
        b, t = features.shape[:2]
        flat = features.reshape(b * t, *features.shape[2:])
        cls_map, reg_map = self.head(flat)
        return supervised_loss(cls_map, reg_map, boxes.reshape(b * t, 4), self.gen_cfg.frame_size)

    def _current_lr_d(self) -> float:
        if self.total_steps is None:
            return self.cfg.disc_base_lr
        return poly_lr(
            min(self.global_step, self.total_steps),
            self.total_steps,
            self.cfg.disc_base_lr,
            self.cfg.lr_power,
        )

    # -- core step --

    def train_step(self, batch: DomainBatch) -> LossReport:
        batch.validate()
        cfg = self.cfg
        src_frames = self._stack([frames for frames, _ in batch.source_sequences])
        src_boxes = torch.stack(
            [torch.as_tensor(b, dtype=self.generator.dtype) for _, b in batch.source_sequences]
        )
        tgt_frames = self._stack(batch.target_sequences)
        t = src_frames.shape[1]

        lr_d = self._current_lr_d()
        for group in self.disc_opt.param_groups:
            group["lr"] = lr_d

        feats_s, ctx_s = self.generator.forward_sequence(src_frames)
        feats_t, ctx_t = self.generator.forward_sequence(tgt_frames)
        l_gt = self._supervised(feats_s, src_boxes)

        use_feat = cfg.align_image_features
        use_ctx = cfg.align_temporal_contexts
        e_d_value = 0.0
        l_g_feat_value = 0.0
        l_g_ctx_value = 0.0

        if self.adversarial_active:
            src_inputs = (ctx_s[:, : t - 1].detach(), feats_s[:, t - 1].detach())
            tgt_inputs = (ctx_t[:, : t - 1].detach(), feats_t[:, t - 1].detach())
            labels = [DomainLabel.SOURCE_DAY] * len(batch.source_sequences) + [
                DomainLabel.TARGET_NIGHT
            ] * len(batch.target_sequences)
            for _ in range(cfg.d_steps_per_g_step):
                d_logits = torch.cat(
                    [
                        self.discriminator.sequence_logits(*src_inputs),
                        self.discriminator.sequence_logits(*tgt_inputs),
                    ]
                )
                e_d = discriminator_loss(
                    self._series(d_logits), labels, kind=cfg.adv_loss,
                    use_features=use_feat, use_contexts=use_ctx,
                )
                self.disc_opt.zero_grad()
                e_d.backward()
                self.disc_opt.step()
                e_d_value = float(e_d.detach())

            if cfg.adv_on == "both":
                g_logits = torch.cat(
                    [
                        self.discriminator.sequence_logits(ctx_s[:, : t - 1], feats_s[:, t - 1]),
                        self.discriminator.sequence_logits(ctx_t[:, : t - 1], feats_t[:, t - 1]),
                    ]
                )
                g_labels = labels
            else:
                g_logits = self.discriminator.sequence_logits(ctx_t[:, : t - 1], feats_t[:, t - 1])
                g_labels = [DomainLabel.TARGET_NIGHT] * len(batch.target_sequences)
            e_g, feat_term, ctx_term = generator_loss(
                self._series(g_logits), g_labels, l_gt,
                w_gt=cfg.w_gt, w_feat=cfg.w_feat if use_feat else 0.0,
                w_ctx=cfg.w_ctx if use_ctx else 0.0,
                kind=cfg.adv_loss, use_features=use_feat, use_contexts=use_ctx,
            )
            l_g_feat_value = float(feat_term.detach())
            l_g_ctx_value = float(ctx_term.detach())
        else:
            e_g = cfg.w_gt * l_gt

        self.gen_opt.zero_grad()
        e_g.backward()
        self.gen_opt.step()
        self.disc_opt.zero_grad()

        report = LossReport(
            e_d=e_d_value,
            e_g=float(e_g.detach()),
            l_gt=float(l_gt.detach()),
            l_g_feat=l_g_feat_value,
            l_g_ctx=l_g_ctx_value,
            step=self.global_step,
            lr_d=lr_d,
        )
        report.validate()
        self.global_step += 1
        return report

    # -- loop --

    def train(self, batches: list[DomainBatch], out_dir: str | Path | None = None) -> TrainingResult:
        """Run ``epochs`` passes over ``batches`` with poly-decayed
        discriminator steps; write history CSV and per-epoch checkpoints
        when ``out_dir`` is given."""
        result = TrainingResult()
        self.total_steps = self.cfg.epochs * len(batches)
        self.global_step = 0
        out_path = Path(out_dir) if out_dir is not None else None
        if out_path is not None:
            out_path.mkdir(parents=True, exist_ok=True)
            (out_path / "checkpoints").mkdir(exist_ok=True)
        if not batches:
            if out_path is not None:
                (out_path / "history.csv").write_text(history_to_csv([]))
            return result
        for epoch in range(self.cfg.epochs):
            self.set_backbone_frozen(epoch < self.cfg.freeze_backbone_epochs)
            epoch_reports = []
            for batch in batches:
                report = self.train_step(batch)
                report.epoch = epoch
                epoch_reports.append(report)
                result.history.append(report)
            mean = LossReport(
                e_d=float(np.mean([r.e_d for r in epoch_reports])),
                e_g=float(np.mean([r.e_g for r in epoch_reports])),
                l_gt=float(np.mean([r.l_gt for r in epoch_reports])),
                l_g_feat=float(np.mean([r.l_g_feat for r in epoch_reports])),
                l_g_ctx=float(np.mean([r.l_g_ctx for r in epoch_reports])),
                step=epoch_reports[-1].step,
                epoch=epoch,
                lr_d=epoch_reports[-1].lr_d,
            )
            result.epoch_means.append(mean)
            if out_path is not None:
                ckpt = out_path / "checkpoints" / f"epoch_{epoch + 1:03d}.pt"
                self.save_checkpoint(ckpt, epoch=epoch)
                result.checkpoint_paths.append(ckpt)
        if out_path is not None:
            final = out_path / "checkpoints" / "final.pt"
            self.save_checkpoint(final, epoch=self.cfg.epochs - 1)
            result.checkpoint_paths.append(final)
            (out_path / "history.csv").write_text(history_to_csv(result.history))
            (out_path / "epochs.csv").write_text(history_to_csv(result.epoch_means))
        return result

    def save_checkpoint(self, path: str | Path, epoch: int):
        torch.save(
            {
                "generator": self.generator.state_dict(),
                "head": self.head.state_dict(),
                "discriminator": self.discriminator.state_dict(),
                "epoch": epoch,
                "seed": self.cfg.seed,
                "global_step": self.global_step,
            },
            path,
        )

    def load_checkpoint(self, path: str | Path):
        payload = torch.load(path, weights_only=True)
        self.generator.load_state_dict(payload["generator"])
        self.head.load_state_dict(payload["head"])
        self.discriminator.load_state_dict(payload["discriminator"])
        self.global_step = payload.get("global_step", 0)


def batches_from_pairs(
    pairs: list[tuple["object", "object"]],
    batch_pairs: int,
) -> list[DomainBatch]:
    """Group (day, night) synthetic sequence pairs into DomainBatches."""
    if batch_pairs <= 0:
        raise ContractError("batch_pairs must be positive")
    batches = []
    for start in range(0, len(pairs), batch_pairs):
        chunk = pairs[start : start + batch_pairs]
        source = [(day.frames, day.primary_boxes) for day, _ in chunk]
        target = [night.frames for _, night in chunk]
        batch = DomainBatch(source, target)
        batch.validate()
        batches.append(batch)
    return batches
