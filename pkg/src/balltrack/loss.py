"""Quality focal loss for soft heatmap targets.

Per cell the loss is -|y - sigma|^beta * ((1 - y) * log(1 - sigma) + y * log(sigma)),
where sigma is the sigmoid of the predicted logit and y is the target value in
[0, 1]. With binary targets this is exactly the focal loss; with beta = 0 it is
plain cross-entropy against soft targets.
"""

from dataclasses import dataclass

import torch
from torch import Tensor

_REDUCTIONS = ("sum_pixels_mean_maps", "sum")

# floor for probabilities inside the logarithms; the modulating factor
# |y - sigma|^beta is computed on unclamped values
_EPS = 1e-12


@dataclass(frozen=True)
class LossConfig:
    beta: float = 2.0
    reduction: str = "sum_pixels_mean_maps"

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.reduction not in _REDUCTIONS:
            raise ValueError(
                f"reduction must be one of {_REDUCTIONS}, got {self.reduction!r}"
            )


def quality_focal_loss(logits: Tensor, targets: Tensor, config: LossConfig | None = None) -> Tensor:
    """Loss over one or more heatmaps.

    The trailing two axes are the map; any leading axes index maps. The loss is
    summed over each map's cells, then reduced across maps per the config:
    "sum_pixels_mean_maps" averages the per-map sums (gradient scale stays
    independent of batch size), "sum" adds them up.
    """
    if config is None:
        config = LossConfig()
    if logits.shape != targets.shape:
        raise ValueError(f"shape mismatch: logits {tuple(logits.shape)} vs targets {tuple(targets.shape)}")
    if logits.ndim < 2:
        raise ValueError(f"expected at least 2 dims (H, W), got shape {tuple(logits.shape)}")
    if not torch.isfinite(targets).all():
        raise ValueError("targets contain non-finite values")
    if targets.min() < 0 or targets.max() > 1:
        raise ValueError("targets must lie in [0, 1]")

    sigma = torch.sigmoid(logits)
    y = targets.to(sigma.dtype)

    weight = (y - sigma).abs() ** config.beta
    ce = -(
        (1.0 - y) * torch.log((1.0 - sigma).clamp_min(_EPS))
        + y * torch.log(sigma.clamp_min(_EPS))
    )
    per_map = (weight * ce).sum(dim=(-2, -1))
    if config.reduction == "sum":
        return per_map.sum()
    return per_map.mean()
