"""Shared test doubles for pipeline-level tests."""

from types import SimpleNamespace

import numpy as np
import torch

from balltrack.targets import real_map


class StubModel:
    """Test double: maps frame identity (encoded as pixel value) to heatmaps.

    Frames are constant-valued images whose uint8 value is the frame index,
    so the stub can look up a preset heatmap per frame and emit the matching
    logits. Exercises the real windowing/pooling/tracking code paths.
    """

    def __init__(self, heatmaps, n_frames=3):
        self.heatmaps = heatmaps  # frame_index -> (h, w) array in [0, 1]
        h, w = next(iter(heatmaps.values())).shape
        self.config = SimpleNamespace(n_frames=n_frames, input_size=(h, w))

    def eval(self):
        return self

    def __call__(self, batch):
        b, c, h, w = batch.shape
        n = self.config.n_frames
        out = torch.empty((b, n, h, w))
        for i in range(b):
            for k in range(n):
                value = float(batch[i, 3 * k].mean()) * 255.0
                frame_index = int(round(value))
                p = np.clip(self.heatmaps[frame_index], 1e-6, 1 - 1e-6)
                out[i, k] = torch.from_numpy(np.log(p / (1 - p)))
        return out


def constant_frames(n, size=(64, 64)):
    w, h = size
    return [np.full((h, w, 3), t, dtype=np.uint8) for t in range(n)]


def oracle_heatmaps(positions, size=(64, 64), d=2.5):
    """Ideal per-frame heatmaps: a clamped-Gaussian disc at each position."""
    maps = {}
    for t, pos in enumerate(positions):
        maps[t] = real_map(pos, size, d=d, c_min=0.7) if pos is not None else np.zeros((size[1], size[0]))
    return maps
