"""High-resolution heatmap network.

Consumes N stacked RGB frames (3N input channels) and emits N heatmap logits
at the input resolution. Four stages of parallel multi-resolution branches
exchange information through fusion layers at every stage boundary; a stem
with configurable strides trades resolution for speed without changing the
parameter count.
"""

import dataclasses
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import Tensor, nn

CHECKPOINT_FORMAT_VERSION = 1

# stride pairs for the two stem convolutions
_STEM_STRIDES = {"a": (2, 2), "b": (2, 1), "c": (1, 1)}

_NUM_STAGES = 4


@dataclass(frozen=True)
class NetworkConfig:
    n_frames: int = 3
    stem_variant: str = "c"
    branch_widths: tuple = (16, 32, 64, 128)
    blocks_per_branch: int = 2
    input_size: tuple = (288, 512)  # (H, W)

    def __post_init__(self):
        object.__setattr__(self, "branch_widths", tuple(int(w) for w in self.branch_widths))
        object.__setattr__(self, "input_size", tuple(int(v) for v in self.input_size))
        if self.n_frames < 1:
            raise ValueError(f"n_frames must be >= 1, got {self.n_frames}")
        if self.stem_variant not in _STEM_STRIDES:
            raise ValueError(f"stem_variant must be one of a/b/c, got {self.stem_variant!r}")
        if len(self.branch_widths) != _NUM_STAGES:
            raise ValueError(f"expected {_NUM_STAGES} branch widths, got {len(self.branch_widths)}")
        if any(w < 1 for w in self.branch_widths):
            raise ValueError(f"branch widths must be positive, got {self.branch_widths}")
        if self.blocks_per_branch < 1:
            raise ValueError(f"blocks_per_branch must be >= 1, got {self.blocks_per_branch}")
        if len(self.input_size) != 2:
            raise ValueError(f"input_size must be (H, W), got {self.input_size}")
        h, w = self.input_size
        s1, s2 = _STEM_STRIDES[self.stem_variant]
        need = 8 * s1 * s2  # deepest branch sits at 1/8 of the post-stem resolution
        if h % need != 0 or w % need != 0:
            raise ValueError(
                f"input H and W must be divisible by {need} for stem variant "
                f"{self.stem_variant!r}, got {h}x{w}"
            )


def _conv3x3(in_ch, out_ch, stride=1):
    return nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1, bias=False)


class ResidualBlock(nn.Module):
    """Standard two-convolution residual block, constant width."""

    def __init__(self, width: int):
        super().__init__()
        self.conv1 = _conv3x3(width, width)
        self.bn1 = nn.BatchNorm2d(width)
        self.conv2 = _conv3x3(width, width)
        self.bn2 = nn.BatchNorm2d(width)
        self.relu = nn.ReLU(inplace=True)

    def forward(self, x):
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + x)


class Stem(nn.Module):
    """Two 3x3 convolutions; variant controls their strides only."""

    def __init__(self, in_channels: int, out_width: int, variant: str):
        super().__init__()
        s1, s2 = _STEM_STRIDES[variant]
        self.conv1 = _conv3x3(in_channels, 64, stride=s1)
        self.bn1 = nn.BatchNorm2d(64)
        self.conv2 = _conv3x3(64, out_width, stride=s2)
        self.bn2 = nn.BatchNorm2d(out_width)
        self.relu = nn.ReLU(inplace=True)
        self.reduction = s1 * s2

    def forward(self, x):
        x = self.relu(self.bn1(self.conv1(x)))
        return self.relu(self.bn2(self.conv2(x)))


def _downsample_path(in_width, out_width, steps):
    # chain of stride-2 convs; only the last changes the channel count
    layers = []
    w = in_width
    for i in range(steps):
        last = i == steps - 1
        out = out_width if last else w
        layers.append(_conv3x3(w, out, stride=2))
        layers.append(nn.BatchNorm2d(out))
        if not last:
            layers.append(nn.ReLU(inplace=True))
        w = out
    return nn.Sequential(*layers)


def _upsample_path(in_width, out_width, steps):
    return nn.Sequential(
        nn.Upsample(scale_factor=2 ** steps, mode="nearest"),
        nn.Conv2d(in_width, out_width, 1, bias=False),
        nn.BatchNorm2d(out_width),
    )


class Fusion(nn.Module):
    """Full pairwise exchange between branches of adjacent resolutions.

    Every output branch is the rectified sum of all input branches, each
    resampled to the target resolution and width. Growing out_widths beyond
    in_widths spawns a new lowest-resolution branch.
    """

    def __init__(self, in_widths, out_widths):
        super().__init__()
        if len(out_widths) < len(in_widths):
            raise ValueError("fusion cannot drop branches")
        self.in_widths = tuple(in_widths)
        self.out_widths = tuple(out_widths)
        paths = nn.ModuleList()
        for t, out_w in enumerate(out_widths):
            row = nn.ModuleList()
            for s, in_w in enumerate(in_widths):
                if s == t:
                    row.append(nn.Identity())
                elif s < t:
                    row.append(_downsample_path(in_w, out_w, t - s))
                else:
                    row.append(_upsample_path(in_w, out_w, s - t))
            paths.append(row)
        self.paths = paths
        # not inplace: a single-source identity row aliases its input tensor
        self.relu = nn.ReLU(inplace=False)

    def forward(self, inputs):
        if len(inputs) != len(self.in_widths):
            raise ValueError(f"expected {len(self.in_widths)} inputs, got {len(inputs)}")
        outputs = []
        for row in self.paths:
            total = row[0](inputs[0])
            for s in range(1, len(inputs)):
                total = total + row[s](inputs[s])
            outputs.append(self.relu(total))
        return outputs


class BallNet(nn.Module):
    def __init__(self, config: NetworkConfig):
        super().__init__()
        self.config = config
        widths = config.branch_widths
        self.stem = Stem(3 * config.n_frames, widths[0], config.stem_variant)

        stages = nn.ModuleList()
        fusions = nn.ModuleList()
        for k in range(1, _NUM_STAGES + 1):
            branches = nn.ModuleList(
                nn.Sequential(*[ResidualBlock(widths[i]) for _ in range(config.blocks_per_branch)])
                for i in range(k)
            )
            stages.append(branches)
            fusions.append(Fusion(widths[:k], widths[: min(k + 1, _NUM_STAGES)]))
        self.stages = stages
        self.fusions = fusions
        self.head = nn.Conv2d(sum(widths), config.n_frames, 1, bias=True)

    def forward(self, x: Tensor) -> Tensor:
        h, w = self.config.input_size
        want = (3 * self.config.n_frames, h, w)
        if x.ndim != 4 or tuple(x.shape[1:]) != want:
            raise ValueError(f"expected input (B, {want[0]}, {h}, {w}), got {tuple(x.shape)}")

        features = [self.stem(x)]
        for branches, fusion in zip(self.stages, self.fusions):
            features = [branch(f) for branch, f in zip(branches, features)]
            features = fusion(features)

        top = [features[0]]
        for i, f in enumerate(features[1:], start=1):
            top.append(F.interpolate(f, scale_factor=2 ** i, mode="nearest"))
        logits = self.head(torch.cat(top, dim=1))
        if self.stem.reduction > 1:
            logits = F.interpolate(logits, size=(h, w), mode="nearest")
        return logits


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters() if p.requires_grad)


def save_checkpoint(model: BallNet, path) -> None:
    import os

    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "net_config": dataclasses.asdict(model.config),
        "state_dict": model.state_dict(),
    }
    tmp = str(path) + ".tmp"
    torch.save(payload, tmp)
    os.replace(tmp, path)


def load_checkpoint(path) -> BallNet:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version {version!r}")
    config = NetworkConfig(**payload["net_config"])
    model = BallNet(config)
    model.load_state_dict(payload["state_dict"])
    return model
