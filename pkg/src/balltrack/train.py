"""Training loop with mid-training hard-sample mining.

Every stride-1 window of every training clip is one example: N stacked frames
in, N ground-truth maps out. Targets start binary; at the configured epoch the
current model is run through the full tracking pipeline over the training
clips, frames it localizes badly (or misses) are collected, and those frames'
targets switch to the real-valued profile for the remaining epochs.

Runs are deterministic for a fixed seed on a given platform; bit-exactness is
not guaranteed across BLAS builds or torch versions.
"""

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .data import ClipRecord, decode_frames, prepare_clip, window_inputs, window_targets
from .inference import InferenceConfig, track_clip
from .loss import LossConfig, quality_focal_loss
from .model import BallNet, NetworkConfig, save_checkpoint
from .targets import GtMapConfig, scale_position

CHECKPOINT_NAME = "checkpoint.pt"
LOG_NAME = "train_log.jsonl"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 8
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    hlsm_epoch: int | None = 20
    hlsm_threshold: float = 4.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be adam or sgd, got {self.optimizer!r}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.hlsm_epoch is not None:
            if self.hlsm_epoch < 1:
                raise ValueError(f"hlsm_epoch must be positive, got {self.hlsm_epoch}")
            if self.hlsm_epoch >= self.epochs:
                raise ValueError(
                    f"hlsm_epoch {self.hlsm_epoch} must be < epochs {self.epochs}"
                )
        if self.hlsm_threshold <= 0:
            raise ValueError(f"hlsm_threshold must be > 0, got {self.hlsm_threshold}")


@dataclass(frozen=True)
class DatasetView:
    """Training clips plus the set of frames whose targets are real-valued."""

    clips: tuple
    hard: frozenset  # (clip_id, frame_index)

    def frame_modes(self, clip_id: str) -> dict:
        return {f: "real" for cid, f in self.hard if cid == clip_id}


def apply_hlsm(clips, hard_set) -> DatasetView:
    clips = tuple(clips)
    hard = frozenset(hard_set)
    by_id = {c.clip_id: c for c in clips}
    for cid, frame in hard:
        clip = by_id.get(cid)
        if clip is None:
            raise ValueError(f"hard sample references unknown clip {cid!r}")
        if not 0 <= frame < len(clip):
            raise ValueError(f"hard sample {cid!r}:{frame} out of range")
        if not clip.labels[frame].visible:
            raise ValueError(f"hard sample {cid!r}:{frame} is not a visible-ball frame")
    return DatasetView(clips, hard)


def mine_hard_samples(
    model,
    clips,
    threshold: float,
    infer_config: InferenceConfig | None = None,
    workers: int = 0,
) -> frozenset:
    """Frames the current model localizes badly, via the full tracking pipeline.

    A visible-ball frame is hard when the pipeline predicts nothing for it or
    the prediction lands more than `threshold` pixels away at model resolution.
    """
    if infer_config is None:
        infer_config = InferenceConfig()
    net_h, net_w = model.config.input_size
    model_size = (net_w, net_h)
    hard = set()
    for clip in clips:
        frames = list(decode_frames(clip))
        trajectory = track_clip(model, frames, infer_config, workers=workers)
        for label, point in zip(clip.labels, trajectory):
            if not label.visible:
                continue
            if not point.visible:
                hard.add((clip.clip_id, label.frame_index))
                continue
            gt = scale_position(label.position, clip.original_size, model_size)
            pred = scale_position(point.position, clip.original_size, model_size)
            if math.hypot(pred[0] - gt[0], pred[1] - gt[1]) > threshold:
                hard.add((clip.clip_id, label.frame_index))
    return frozenset(hard)


def _build_optimizer(model, config: TrainConfig):
    if config.optimizer == "adam":
        return torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    return torch.optim.SGD(model.parameters(), lr=config.learning_rate, momentum=0.9)


def train(
    dataset,
    net_config: NetworkConfig,
    train_config: TrainConfig,
    out_dir,
    gt_config: GtMapConfig | None = None,
    loss_config: LossConfig | None = None,
    infer_config: InferenceConfig | None = None,
    workers: int = 0,
    progress=None,
) -> BallNet:
    """Train a fresh network and leave checkpoint + loss log under out_dir."""
    if gt_config is None:
        gt_config = GtMapConfig()
    if loss_config is None:
        loss_config = LossConfig()

    n = net_config.n_frames
    clips = [c for c in dataset if len(c) >= n]
    if not clips:
        raise ValueError(f"no training clip has at least {n} frames")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    torch.manual_seed(train_config.seed)
    rng = np.random.default_rng(train_config.seed)
    model = BallNet(net_config)
    optimizer = _build_optimizer(model, train_config)

    net_h, net_w = net_config.input_size
    model_size = (net_w, net_h)
    prepared = {c.clip_id: prepare_clip(c, model_size) for c in clips}
    windows = [(c.clip_id, start) for c in clips for start in range(len(c) - n + 1)]
    view = apply_hlsm(clips, frozenset())

    ckpt_path = out_dir / CHECKPOINT_NAME
    with open(out_dir / LOG_NAME, "w") as log:

        def emit(record):
            log.write(json.dumps(record) + "\n")

        for epoch in range(1, train_config.epochs + 1):
            if train_config.hlsm_epoch is not None and epoch == train_config.hlsm_epoch:
                model.eval()
                hard = mine_hard_samples(
                    model, clips, train_config.hlsm_threshold, infer_config, workers
                )
                view = apply_hlsm(clips, hard)
                emit({"event": "hlsm", "epoch": epoch, "hard_count": len(hard)})

            model.train()
            order = rng.permutation(len(windows))
            epoch_total = 0.0
            for iteration, batch_start in enumerate(
                range(0, len(order), train_config.batch_size), start=1
            ):
                chosen = order[batch_start : batch_start + train_config.batch_size]
                inputs = np.stack(
                    [window_inputs(prepared[windows[i][0]], windows[i][1], n) for i in chosen]
                )
                targets = np.stack(
                    [
                        window_targets(
                            prepared[windows[i][0]],
                            windows[i][1],
                            n,
                            gt_config,
                            view.frame_modes(windows[i][0]),
                        )
                        for i in chosen
                    ]
                )
                optimizer.zero_grad()
                logits = model(torch.from_numpy(inputs))
                loss = quality_focal_loss(logits, torch.from_numpy(targets), loss_config)
                value = loss.item()
                if not math.isfinite(value):
                    raise RuntimeError(
                        f"non-finite loss {value} at epoch {epoch} iteration {iteration}; "
                        "lower the learning rate or inspect the data"
                    )
                loss.backward()
                optimizer.step()
                epoch_total += value * len(chosen)
                emit({"epoch": epoch, "iteration": iteration, "loss": value})

            mean_loss = epoch_total / len(windows)
            emit({"event": "epoch_summary", "epoch": epoch, "mean_loss": mean_loss})
            log.flush()
            save_checkpoint(model, ckpt_path)
            if progress is not None:
                progress(epoch, mean_loss)

    return model
