"""Heatmaps to per-frame ball positions.

Pipeline: sample overlapping frame windows, run the network with a sigmoid,
binarize each heatmap at 0.5 into blobs, turn blobs into position/confidence
candidates, then walk the clip with a short-memory motion model that gates
out temporally inconsistent candidates.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import torch
from PIL import Image
from scipy import ndimage

from .targets import scale_position

Position = tuple[float, float]

HEATMAP_THRESHOLD = 0.5
HISTORY_LIMIT = 3


@dataclass(frozen=True)
class InferenceConfig:
    step: int = 3                  # window stride; 1 oversamples every frame
    localization: str = "coh"      # "coh" or "geometric"
    use_tracker: bool = True
    gate_radius: float = 50.0      # max distance to the motion-model prediction
    connectivity: int = 8
    miss_reset: int = 2            # consecutive misses before history clears
    batch_size: int = 8

    def __post_init__(self):
        if self.step < 1:
            raise ValueError(f"step must be >= 1, got {self.step}")
        if self.localization not in ("coh", "geometric"):
            raise ValueError(f"unknown localization {self.localization!r}")
        if self.gate_radius <= 0:
            raise ValueError(f"gate_radius must be > 0, got {self.gate_radius}")
        if self.connectivity not in (4, 8):
            raise ValueError(f"connectivity must be 4 or 8, got {self.connectivity}")
        if self.miss_reset < 1:
            raise ValueError(f"miss_reset must be >= 1, got {self.miss_reset}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class Candidate:
    frame_index: int
    position: Position  # model-resolution pixels
    confidence: float


@dataclass
class TrackerState:
    """Up to the 3 most recent confirmed detections, oldest first."""

    history: list[tuple[int, Position]] = field(default_factory=list)
    consecutive_misses: int = 0

    def confirm(self, frame_index: int, position: Position):
        self.history.append((frame_index, position))
        if len(self.history) > HISTORY_LIMIT:
            self.history.pop(0)
        self.consecutive_misses = 0

    def miss(self, miss_reset: int):
        self.consecutive_misses += 1
        if self.consecutive_misses >= miss_reset:
            self.history.clear()
            self.consecutive_misses = 0


@dataclass(frozen=True)
class TrajectoryPoint:
    frame_index: int
    visible: bool
    position: Position | None  # original-resolution pixels
    confidence: float | None


@dataclass(frozen=True)
class Trajectory:
    points: list[TrajectoryPoint]

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)


def sample_windows(total_frames: int, n_frames: int, step: int) -> list[int]:
    """Window start indices covering every frame, one tail window if needed."""
    if total_frames < n_frames:
        raise ValueError(
            f"clip of {total_frames} frames is shorter than window size {n_frames}"
        )
    if step < 1:
        raise ValueError(f"step must be >= 1, got {step}")
    starts = list(range(0, total_frames - n_frames + 1, step))
    tail = total_frames - n_frames
    if starts[-1] != tail:
        starts.append(tail)
    return starts


def extract_candidates(
    heatmap: np.ndarray,
    frame_index: int = 0,
    localization: str = "coh",
    connectivity: int = 8,
    threshold: float = HEATMAP_THRESHOLD,
) -> list[Candidate]:
    """Blob candidates from one heatmap.

    Blobs are connected components of cells >= threshold. In 'geometric' mode
    the position is the unweighted cell centroid and the confidence the cell
    count; in 'coh' mode the position is the heatmap-value-weighted centroid
    and the confidence the sum of blob values.
    """
    if not np.all(np.isfinite(heatmap)):
        raise ValueError("heatmap contains non-finite values")
    mask = heatmap >= threshold
    if not mask.any():
        return []
    structure = np.ones((3, 3), dtype=int) if connectivity == 8 else None
    labels, n_blobs = ndimage.label(mask, structure=structure)
    candidates = []
    for blob_id in range(1, n_blobs + 1):
        ys, xs = np.nonzero(labels == blob_id)
        if localization == "geometric":
            pos = (float(xs.mean()), float(ys.mean()))
            conf = float(len(xs))
        else:
            values = heatmap[ys, xs].astype(np.float64)
            total = float(values.sum())
            pos = (float((xs * values).sum() / total), float((ys * values).sum() / total))
            conf = total
        candidates.append(Candidate(frame_index=frame_index, position=pos, confidence=conf))
    return candidates


def predict_next(state: TrackerState) -> Position | None:
    """Motion-model extrapolation from the tracked history.

    With three points p_t, p_{t-1}, p_{t-2}: a = p_t - 2 p_{t-1} + p_{t-2},
    v = p_t - p_{t-1} + a, prediction = p_t + v + a/2. Two points fall back
    to linear extrapolation, one point to itself, none to no prediction.
    """
    pts = [p for _, p in state.history]
    if not pts:
        return None
    if len(pts) == 1:
        return pts[0]
    if len(pts) == 2:
        (x1, y1), (x2, y2) = pts
        return (2 * x2 - x1, 2 * y2 - y1)
    (x0, y0), (x1, y1), (x2, y2) = pts  # oldest, middle, latest
    ax, ay = x2 - 2 * x1 + x0, y2 - 2 * y1 + y0
    vx, vy = x2 - x1 + ax, y2 - y1 + ay
    return (x2 + vx + ax / 2, y2 + vy + ay / 2)


def select_detection(
    candidates: list[Candidate],
    predicted: Position | None,
    gate_radius: float,
) -> Candidate | None:
    """Highest-confidence candidate, after gating on the predicted position.

    Confidence ties break toward the candidate closer to the prediction, or
    toward smaller (y, x) when there is no prediction.
    """
    if gate_radius <= 0:
        raise ValueError(f"gate_radius must be > 0, got {gate_radius}")
    if predicted is not None:
        px, py = predicted

        def dist(c: Candidate) -> float:
            return math.hypot(c.position[0] - px, c.position[1] - py)

        survivors = [c for c in candidates if dist(c) <= gate_radius]
        if not survivors:
            return None
        return min(survivors, key=lambda c: (-c.confidence, dist(c)))
    if not candidates:
        return None
    return min(candidates, key=lambda c: (-c.confidence, c.position[1], c.position[0]))


def _resize_frame(frame: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Resize an RGB uint8 frame to (width, height); identity sizes skip work."""
    h, w = frame.shape[:2]
    if (w, h) == size:
        return frame
    return np.asarray(Image.fromarray(frame).resize(size, Image.BILINEAR))


def predict_heatmaps(model, windows: np.ndarray, batch_size: int = 8) -> np.ndarray:
    """Sigmoid heatmaps for a stack of input windows, evaluated in batches.

    ``windows`` is (n_windows, 3N, h, w) float32; the result is
    (n_windows, N, h, w) in (0, 1).
    """
    model.eval()
    out = []
    with torch.no_grad():
        for i in range(0, len(windows), batch_size):
            batch = torch.from_numpy(windows[i : i + batch_size])
            logits = model(batch)
            out.append(torch.sigmoid(logits).numpy())
    return np.concatenate(out, axis=0)


def collect_candidates(
    model,
    frames: list[np.ndarray],
    config: InferenceConfig,
    workers: int = 0,
) -> dict[int, list[Candidate]]:
    """Per-frame candidate pools across every window that covers each frame."""
    net_cfg = model.config
    n = net_cfg.n_frames
    if len(frames) < n:
        raise ValueError(f"need at least {n} frames, got {len(frames)}")
    orig_h, orig_w = frames[0].shape[:2]
    for f in frames:
        if f.shape[:2] != (orig_h, orig_w):
            raise ValueError("frames differ in size")
    model_h, model_w = net_cfg.input_size
    model_size = (model_w, model_h)

    if workers > 0:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            resized = list(pool.map(lambda f: _resize_frame(f, model_size), frames))
    else:
        resized = [_resize_frame(f, model_size) for f in frames]
    scaled = [f.astype(np.float32) / 255.0 for f in resized]

    starts = sample_windows(len(frames), n, config.step)
    stack = np.stack(
        [np.concatenate([scaled[s + k].transpose(2, 0, 1) for k in range(n)]) for s in starts]
    )
    heatmaps = predict_heatmaps(model, stack, config.batch_size)

    pools: dict[int, list[Candidate]] = {t: [] for t in range(len(frames))}
    for w_idx, s in enumerate(starts):
        for k in range(n):
            cands = extract_candidates(
                heatmaps[w_idx, k],
                frame_index=s + k,
                localization=config.localization,
                connectivity=config.connectivity,
            )
            pools[s + k].extend(cands)
    return pools


def track_clip(
    model,
    frames: list[np.ndarray],
    config: InferenceConfig,
    workers: int = 0,
) -> Trajectory:
    """Run the full detection-and-tracking pipeline over one clip.

    ``model`` must expose ``config`` (the network configuration) and map a
    (B, 3N, h, w) tensor to (B, N, h, w) logits. Frames are RGB uint8 arrays
    at a consistent original resolution; output positions are reported at
    that resolution.
    """
    net_cfg = model.config
    pools = collect_candidates(model, frames, config, workers=workers)
    orig_h, orig_w = frames[0].shape[:2]
    model_h, model_w = net_cfg.input_size
    model_size = (model_w, model_h)

    state = TrackerState()
    points = []
    for t in range(len(frames)):
        predicted = predict_next(state) if config.use_tracker else None
        chosen = select_detection(pools[t], predicted, config.gate_radius)
        if chosen is None:
            state.miss(config.miss_reset)
            points.append(
                TrajectoryPoint(frame_index=t, visible=False, position=None, confidence=None)
            )
        else:
            state.confirm(t, chosen.position)
            orig_pos = scale_position(chosen.position, model_size, (orig_w, orig_h))
            points.append(
                TrajectoryPoint(
                    frame_index=t,
                    visible=True,
                    position=orig_pos,
                    confidence=chosen.confidence,
                )
            )
    return Trajectory(points=points)


def write_trajectory_csv(trajectory: Trajectory, path):
    """Emit `frame,visible,x,y,confidence`; x/y blank on invisible frames."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "visible", "x", "y", "confidence"])
        for p in trajectory:
            if p.visible:
                writer.writerow(
                    [p.frame_index, 1, f"{p.position[0]:.2f}", f"{p.position[1]:.2f}", f"{p.confidence:.4f}"]
                )
            else:
                writer.writerow([p.frame_index, 0, "", "", ""])
    os.replace(tmp, path)


def read_trajectory_csv(path) -> Trajectory:
    points = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            visible = row["visible"] == "1"
            points.append(
                TrajectoryPoint(
                    frame_index=int(row["frame"]),
                    visible=visible,
                    position=(float(row["x"]), float(row["y"])) if visible else None,
                    confidence=float(row["confidence"]) if visible else None,
                )
            )
    return Trajectory(points=points)
