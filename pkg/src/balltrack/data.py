"""Dataset layout, ingestion, and a deterministic synthetic clip generator.

On-disk layout:

    root/<split>/<match>/<clip>/img_%06d.png
    root/<split>/<match>/<clip>/label.csv     header: frame,visible,x,y

Label rows are one per frame, frame indices contiguous from 0. Invisible
frames leave x and y empty. The synthesizer writes this exact layout, so
generated data round-trips through load_dataset bit-exactly.
"""

import json
import math
import os
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np
from PIL import Image

from .errors import DataValidationError
from .targets import BallLabel, GtMapConfig, empty_map, make_map, scale_position

LABEL_HEADER = "frame,visible,x,y"

_MOTIONS = ("linear", "quadratic", "bounce")
_CLIPS_PER_MATCH = 4


@dataclass(frozen=True)
class ClipRecord:
    clip_id: str
    frame_paths: list
    labels: list
    original_size: tuple  # (width, height)

    def __post_init__(self):
        if len(self.frame_paths) < 1:
            raise ValueError(f"clip {self.clip_id} has no frames")
        if len(self.labels) != len(self.frame_paths):
            raise ValueError(
                f"clip {self.clip_id}: {len(self.labels)} labels for {len(self.frame_paths)} frames"
            )

    def __len__(self):
        return len(self.frame_paths)


@dataclass(frozen=True)
class SynthConfig:
    n_clips: int
    frames_per_clip: int
    size: tuple = (512, 288)  # (width, height)
    ball_radius: float = 3.0
    n_distractors: int = 2
    motion: str = "linear"
    occlusion_rate: float = 0.0
    camera_jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_clips < 1 or self.frames_per_clip < 1:
            raise ValueError("n_clips and frames_per_clip must be positive")
        if self.motion not in _MOTIONS:
            raise ValueError(f"motion must be one of {_MOTIONS}, got {self.motion!r}")
        if not 0 <= self.occlusion_rate <= 1:
            raise ValueError(f"occlusion_rate must lie in [0, 1], got {self.occlusion_rate}")
        if self.camera_jitter < 0 or self.ball_radius <= 0:
            raise ValueError("camera_jitter must be >= 0 and ball_radius > 0")
        w, h = self.size
        margin = self.ball_radius + self.camera_jitter + 2
        if 2 * margin >= min(w, h):
            raise ValueError(f"size {self.size} too small for radius/jitter margins")


# --------------------------------------------------------------- ingestion


def load_dataset(root_path, split: str) -> list:
    """All clips of a split, ordered lexicographically by match then clip."""
    split_dir = Path(root_path) / split
    if not split_dir.is_dir():
        raise DataValidationError(f"split directory not found: {split_dir}")
    records = []
    for match_dir in sorted(p for p in split_dir.iterdir() if p.is_dir()):
        for clip_dir in sorted(p for p in match_dir.iterdir() if p.is_dir()):
            records.append(_load_clip(clip_dir, f"{match_dir.name}/{clip_dir.name}"))
    return records


def _load_clip(clip_dir: Path, clip_id: str) -> ClipRecord:
    label_path = clip_dir / "label.csv"
    if not label_path.is_file():
        raise DataValidationError(f"missing label file: {label_path}")
    lines = label_path.read_text().splitlines()
    if not lines or lines[0] != LABEL_HEADER:
        raise DataValidationError(f"{label_path}:1: expected header {LABEL_HEADER!r}")

    labels = []
    for lineno, line in enumerate(lines[1:], start=2):
        where = f"{label_path}:{lineno}"
        parts = line.split(",")
        if len(parts) != 4:
            raise DataValidationError(f"{where}: expected 4 fields, got {len(parts)}")
        raw_frame, raw_visible, raw_x, raw_y = parts
        try:
            frame = int(raw_frame)
            visible = int(raw_visible)
        except ValueError as exc:
            raise DataValidationError(f"{where}: {exc}") from exc
        if frame != lineno - 2:
            raise DataValidationError(f"{where}: frame index {frame}, expected {lineno - 2}")
        if visible not in (0, 1):
            raise DataValidationError(f"{where}: visible must be 0 or 1, got {raw_visible}")
        if visible:
            try:
                position = (float(raw_x), float(raw_y))
            except ValueError as exc:
                raise DataValidationError(f"{where}: {exc}") from exc
        else:
            if raw_x or raw_y:
                raise DataValidationError(f"{where}: invisible frame must leave x,y empty")
            position = None
        labels.append(BallLabel(frame_index=frame, visible=bool(visible), position=position))

    if not labels:
        raise DataValidationError(f"{label_path}: no label rows")
    frame_paths = []
    for i in range(len(labels)):
        path = clip_dir / f"img_{i:06d}.png"
        if not path.is_file():
            raise DataValidationError(f"missing frame file: {path}")
        frame_paths.append(path)
    extra = sorted(clip_dir.glob("img_*.png"))
    if len(extra) != len(frame_paths):
        raise DataValidationError(
            f"{label_path}: {len(labels)} label rows but {len(extra)} frame files"
        )

    sizes = set()
    for path in frame_paths:
        with Image.open(path) as img:
            sizes.add(img.size)
    if len(sizes) != 1:
        raise DataValidationError(f"clip {clip_id}: frames differ in size: {sorted(sizes)}")
    return ClipRecord(clip_id, frame_paths, labels, sizes.pop())


def decode_frames(clip: ClipRecord, model_size=None) -> np.ndarray:
    """Frames as (T, h, w, 3) uint8, optionally resized to model_size (w, h)."""
    frames = []
    for path in clip.frame_paths:
        try:
            with Image.open(path) as img:
                img = img.convert("RGB")
                if model_size is not None and img.size != tuple(model_size):
                    img = img.resize(tuple(model_size), Image.BILINEAR)
                frames.append(np.asarray(img, dtype=np.uint8))
        except (OSError, SyntaxError) as exc:
            raise DataValidationError(f"cannot decode image {path}: {exc}") from exc
    return np.stack(frames)


# --------------------------------------------------------------- windowing


class TrainWindow(NamedTuple):
    start: int
    inputs: np.ndarray  # (3N, h, w) float32 in [0, 1]
    targets: np.ndarray  # (N, h, w) float32


class PreparedClip(NamedTuple):
    """Decoded clip held compactly for repeated window assembly."""

    clip_id: str
    frames: np.ndarray  # (T, h, w, 3) uint8, model resolution
    labels: list  # BallLabel at model resolution
    model_size: tuple

    def __len__(self):
        return len(self.labels)


def prepare_clip(clip: ClipRecord, model_size) -> PreparedClip:
    frames = decode_frames(clip, model_size)
    labels = []
    for label in clip.labels:
        if label.visible:
            scaled = scale_position(label.position, clip.original_size, model_size)
            labels.append(BallLabel(label.frame_index, True, scaled))
        else:
            labels.append(label)
    return PreparedClip(clip.clip_id, frames, labels, tuple(model_size))


def window_inputs(prepared: PreparedClip, start: int, n_frames: int) -> np.ndarray:
    chunk = prepared.frames[start : start + n_frames]  # (N, h, w, 3)
    stacked = chunk.transpose(0, 3, 1, 2).reshape(-1, *chunk.shape[1:3])
    return np.ascontiguousarray(stacked, dtype=np.float32) / 255.0


def window_targets(
    prepared: PreparedClip,
    start: int,
    n_frames: int,
    gt_config: GtMapConfig,
    frame_modes: dict | None = None,
) -> np.ndarray:
    maps = []
    for label in prepared.labels[start : start + n_frames]:
        if not label.visible:
            maps.append(empty_map(prepared.model_size))
            continue
        mode = None if frame_modes is None else frame_modes.get(label.frame_index)
        maps.append(make_map(label, prepared.model_size, gt_config, mode=mode))
    return np.stack(maps).astype(np.float32)


def make_windows(
    clip: ClipRecord,
    n_frames: int,
    model_size,
    gt_config: GtMapConfig,
    frame_modes: dict | None = None,
) -> Iterator[TrainWindow]:
    """Stride-1 training windows with per-frame ground-truth maps.

    frame_modes optionally overrides the map mode per frame index (hard-sample
    retargeting); other frames follow gt_config.mode.
    """
    total = len(clip)
    if total < n_frames:
        raise ValueError(f"clip {clip.clip_id} shorter than window size {n_frames}")
    prepared = prepare_clip(clip, model_size)
    for start in range(total - n_frames + 1):
        yield TrainWindow(
            start,
            window_inputs(prepared, start, n_frames),
            window_targets(prepared, start, n_frames, gt_config, frame_modes),
        )


# --------------------------------------------------------------- synthesis


def _clip_rng_streams(config: SynthConfig, split: str):
    # split name folded into the seed so train/test differ at the same seed
    root = np.random.SeedSequence([config.seed, zlib.crc32(split.encode())])
    return root.spawn(config.n_clips)


def _make_background(rng, size) -> np.ndarray:
    w, h = size
    coarse = rng.uniform(25, 115, size=(h // 16 + 2, w // 16 + 2, 3))
    img = Image.fromarray(coarse.astype(np.uint8)).resize((w, h), Image.BILINEAR)
    bg = np.asarray(img, dtype=np.float32)
    bg += rng.normal(0, 4, size=bg.shape).astype(np.float32)
    return np.clip(bg, 0, 255)


def _draw_disc(img: np.ndarray, center, radius: float, color) -> None:
    h, w = img.shape[:2]
    cx, cy = center
    x0, x1 = max(0, int(math.floor(cx - radius - 1))), min(w, int(math.ceil(cx + radius + 2)))
    y0, y1 = max(0, int(math.floor(cy - radius - 1))), min(h, int(math.ceil(cy + radius + 2)))
    if x0 >= x1 or y0 >= y1:
        return
    ys = np.arange(y0, y1, dtype=np.float64)[:, None] - cy
    xs = np.arange(x0, x1, dtype=np.float64)[None, :] - cx
    dist = np.sqrt(ys * ys + xs * xs)
    alpha = np.clip(radius + 0.5 - dist, 0.0, 1.0)[..., None].astype(np.float32)
    region = img[y0:y1, x0:x1]
    img[y0:y1, x0:x1] = alpha * np.asarray(color, dtype=np.float32) + (1 - alpha) * region


def _linear_track(rng, size, margin, total) -> np.ndarray:
    w, h = size
    lo = np.array([margin, margin])
    hi = np.array([w - 1 - margin, h - 1 - margin])
    speed = rng.uniform(1.0, 3.5)
    angle = rng.uniform(0, 2 * math.pi)
    vel = np.array([speed * math.cos(angle), speed * math.sin(angle)])
    span = hi - lo
    if total > 1:
        limit = span / (total - 1) * 0.999  # margin against fp overshoot
        vel = np.clip(vel, -limit, limit)
    travel = vel * (total - 1)
    start = np.array(
        [
            rng.uniform(lo[0] - min(0, travel[0]), hi[0] - max(0, travel[0])),
            rng.uniform(lo[1] - min(0, travel[1]), hi[1] - max(0, travel[1])),
        ]
    )
    t = np.arange(total)[:, None]
    return start[None, :] + vel[None, :] * t


def _quadratic_track(rng, size, margin, total) -> np.ndarray:
    w, h = size
    lo = np.array([margin, margin])
    hi = np.array([w - 1 - margin, h - 1 - margin])
    speed = rng.uniform(1.0, 3.0)
    angle = rng.uniform(0, 2 * math.pi)
    vel = np.array([speed * math.cos(angle), speed * math.sin(angle)])
    acc = np.array([rng.uniform(-0.04, 0.04), rng.uniform(0.02, 0.09)])
    t = np.arange(total, dtype=np.float64)[:, None]
    for _ in range(200):
        offset = vel[None, :] * t + 0.5 * acc[None, :] * t * t
        need_lo = lo - offset.min(axis=0)
        need_hi = hi - offset.max(axis=0)
        if np.all(need_lo <= need_hi):
            start = np.array([rng.uniform(need_lo[0], need_hi[0]), rng.uniform(need_lo[1], need_hi[1])])
            return start[None, :] + offset
        vel *= 0.8
        acc *= 0.8
    raise RuntimeError("could not fit quadratic trajectory inside the frame")


def _bounce_track(rng, size, margin, total) -> np.ndarray:
    w, h = size
    lo = np.array([margin, margin])
    hi = np.array([w - 1 - margin, h - 1 - margin])
    pos = np.array([rng.uniform(lo[0], hi[0]), rng.uniform(lo[1], hi[1])])
    speed = rng.uniform(1.5, 3.5)
    angle = rng.uniform(0, 2 * math.pi)
    vel = np.array([speed * math.cos(angle), speed * math.sin(angle)])
    out = np.empty((total, 2))
    for i in range(total):
        out[i] = pos
        pos = pos + vel
        for ax in range(2):
            if pos[ax] < lo[ax]:
                pos[ax] = 2 * lo[ax] - pos[ax]
                vel[ax] = -vel[ax]
            elif pos[ax] > hi[ax]:
                pos[ax] = 2 * hi[ax] - pos[ax]
                vel[ax] = -vel[ax]
    return out


_TRACKS = {"linear": _linear_track, "quadratic": _quadratic_track, "bounce": _bounce_track}


def _occlusion_mask(rng, total, rate) -> np.ndarray:
    occluded = np.zeros(total, dtype=bool)
    target = int(round(rate * total))
    tries = 0
    while occluded.sum() < target and tries < 200:
        length = int(rng.integers(2, 5))
        start = int(rng.integers(0, max(1, total - length + 1)))
        occluded[start : start + length] = True
        tries += 1
    return occluded


def _format_label_rows(labels) -> str:
    rows = [LABEL_HEADER]
    for lab in labels:
        if lab.visible:
            rows.append(f"{lab.frame_index},1,{lab.position[0]!r},{lab.position[1]!r}")
        else:
            rows.append(f"{lab.frame_index},0,,")
    return "\n".join(rows) + "\n"


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def synthesize_dataset(config: SynthConfig, out_path, split: str = "train") -> list:
    """Render config.n_clips clips under out_path/split and return their records."""
    w, h = config.size
    margin = config.ball_radius + config.camera_jitter + 2
    distractor_palette = [(90, 200, 250), (250, 120, 210), (150, 250, 120), (240, 240, 240)]
    records = []

    for index, stream in enumerate(_clip_rng_streams(config, split)):
        rng = np.random.default_rng(stream)
        match = index // _CLIPS_PER_MATCH
        clip_dir = Path(out_path) / split / f"match_{match:03d}" / f"clip_{index:03d}"
        clip_dir.mkdir(parents=True, exist_ok=True)

        background = _make_background(rng, config.size)
        ball_color = np.clip(
            np.array([250, 225, 70]) + rng.integers(-10, 11, size=3), 0, 255
        )
        track = _TRACKS[config.motion](rng, config.size, margin, config.frames_per_clip)
        occluded = _occlusion_mask(rng, config.frames_per_clip, config.occlusion_rate)

        distractors = []
        for k in range(config.n_distractors):
            color = np.array(distractor_palette[k % len(distractor_palette)], dtype=np.float64)
            color = np.clip(color + rng.integers(-15, 16, size=3), 0, 255)
            radius = config.ball_radius * rng.uniform(0.7, 1.3)
            path = _bounce_track(rng, config.size, margin, config.frames_per_clip)
            distractors.append((path, radius, color))

        jitter = (
            rng.uniform(-config.camera_jitter, config.camera_jitter, size=(config.frames_per_clip, 2))
            if config.camera_jitter > 0
            else np.zeros((config.frames_per_clip, 2))
        )

        labels = []
        frame_paths = []
        for t in range(config.frames_per_clip):
            canvas = background.copy()
            for path, radius, color in distractors:
                _draw_disc(canvas, path[t] + jitter[t], radius, color)
            pos = track[t] + jitter[t]
            if occluded[t]:
                labels.append(BallLabel(t, False, None))
            else:
                _draw_disc(canvas, pos, config.ball_radius, ball_color)
                labels.append(BallLabel(t, True, (float(pos[0]), float(pos[1]))))
            frame_path = clip_dir / f"img_{t:06d}.png"
            Image.fromarray(np.clip(canvas, 0, 255).astype(np.uint8)).save(frame_path)
            frame_paths.append(frame_path)

        _atomic_write_text(clip_dir / "label.csv", _format_label_rows(labels))
        records.append(
            ClipRecord(f"match_{match:03d}/clip_{index:03d}", frame_paths, labels, (w, h))
        )

    write_manifest(out_path)
    return records


def write_manifest(root_path) -> None:
    """Scan the tree and record per-split clip and frame counts."""
    root = Path(root_path)
    splits = {}
    for split_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        clips = 0
        frames = 0
        for match_dir in sorted(p for p in split_dir.iterdir() if p.is_dir()):
            for clip_dir in sorted(p for p in match_dir.iterdir() if p.is_dir()):
                clips += 1
                frames += len(list(clip_dir.glob("img_*.png")))
        splits[split_dir.name] = {"clips": clips, "frames": frames}
    _atomic_write_text(root / "manifest.json", json.dumps({"splits": splits}, indent=2) + "\n")
