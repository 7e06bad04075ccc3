import math

import numpy as np
import pytest
import torch

from balltrack.loss import LossConfig, quality_focal_loss


def logit(p):
    return torch.log(p / (1 - p))


def reference_focal_loss(logits, binary_targets, beta):
    """Independent focal loss: -(1 - p_t)^beta * log(p_t), p_t = p if y else 1-p."""
    p = torch.sigmoid(logits)
    p_t = torch.where(binary_targets > 0.5, p, 1 - p)
    per_cell = -((1 - p_t) ** beta) * torch.log(p_t)
    return per_cell.sum(dim=(-2, -1)).mean()


def reference_soft_ce(logits, targets):
    p = torch.sigmoid(logits)
    per_cell = -(targets * torch.log(p) + (1 - targets) * torch.log(1 - p))
    return per_cell.sum(dim=(-2, -1)).mean()


def test_zero_loss_when_prediction_matches_target():
    rng = np.random.default_rng(30)
    y = torch.from_numpy(rng.uniform(0.05, 0.95, size=(4, 6, 6)))
    loss = quality_focal_loss(logit(y), y)
    assert loss.item() == pytest.approx(0.0, abs=1e-9)


def test_single_cell_binary_example():
    logits = torch.zeros((1, 1), dtype=torch.float64)  # sigma = 0.5
    targets = torch.ones((1, 1), dtype=torch.float64)
    loss = quality_focal_loss(logits, targets)
    assert loss.item() == pytest.approx(0.25 * math.log(2), abs=1e-12)


def test_single_cell_soft_example():
    logits = torch.zeros((1, 1), dtype=torch.float64)
    targets = torch.full((1, 1), 0.7, dtype=torch.float64)
    loss = quality_focal_loss(logits, targets)
    assert loss.item() == pytest.approx(0.04 * math.log(2), abs=1e-12)


def test_matches_focal_loss_on_binary_targets():
    rng = np.random.default_rng(31)
    for beta in (0.5, 1.0, 2.0, 4.0):
        logits = torch.from_numpy(rng.normal(0, 3, size=(5, 8, 8)))
        y = torch.from_numpy(rng.integers(0, 2, size=(5, 8, 8)).astype(np.float64))
        ours = quality_focal_loss(logits, y, LossConfig(beta=beta))
        ref = reference_focal_loss(logits, y, beta)
        assert ours.item() == pytest.approx(ref.item(), abs=1e-9)


def test_beta_zero_is_soft_cross_entropy():
    rng = np.random.default_rng(32)
    logits = torch.from_numpy(rng.normal(0, 2, size=(3, 8, 8)))
    y = torch.from_numpy(rng.uniform(0, 1, size=(3, 8, 8)))
    ours = quality_focal_loss(logits, y, LossConfig(beta=0.0))
    assert ours.item() == pytest.approx(reference_soft_ce(logits, y).item(), abs=1e-9)


def test_loss_nonnegative_and_positive_off_target():
    rng = np.random.default_rng(33)
    for _ in range(20):
        logits = torch.from_numpy(rng.normal(0, 2, size=(2, 6, 6)))
        y = torch.from_numpy(rng.uniform(0, 1, size=(2, 6, 6)))
        assert quality_focal_loss(logits, y).item() >= 0.0
    y = torch.full((4, 4), 0.3, dtype=torch.float64)
    perturbed = logit(y.clone())
    perturbed[2, 2] += 0.5
    assert quality_focal_loss(perturbed, y).item() > 1e-6


def test_gradient_matches_central_differences():
    rng = np.random.default_rng(34)
    logits = torch.from_numpy(rng.normal(0, 2, size=(8, 8))).requires_grad_(True)
    y = torch.from_numpy(rng.uniform(0, 1, size=(8, 8)))
    quality_focal_loss(logits, y).backward()
    analytic = logits.grad.detach().numpy()

    h = 1e-6
    base = logits.detach().clone()
    for idx in np.ndindex(8, 8):
        plus, minus = base.clone(), base.clone()
        plus[idx] += h
        minus[idx] -= h
        numeric = (
            quality_focal_loss(plus, y).item() - quality_focal_loss(minus, y).item()
        ) / (2 * h)
        denom = max(abs(numeric), 1e-8)
        assert abs(analytic[idx] - numeric) / denom < 1e-4


def test_saturated_logits_stay_finite():
    for dtype in (torch.float32, torch.float64):
        logits = torch.tensor([[1000.0, -1000.0]], dtype=dtype)
        y = torch.tensor([[0.0, 1.0]], dtype=dtype)
        loss = quality_focal_loss(logits, y)
        assert torch.isfinite(loss)
        assert loss.item() > 0


def test_sum_reduction_is_mean_times_map_count():
    rng = np.random.default_rng(35)
    logits = torch.from_numpy(rng.normal(0, 2, size=(4, 3, 6, 6)))
    y = torch.from_numpy(rng.uniform(0, 1, size=(4, 3, 6, 6)))
    total = quality_focal_loss(logits, y, LossConfig(reduction="sum"))
    mean = quality_focal_loss(logits, y, LossConfig(reduction="sum_pixels_mean_maps"))
    assert total.item() == pytest.approx(mean.item() * 12, rel=1e-12)


def test_batched_equals_per_map_loop():
    rng = np.random.default_rng(36)
    logits = torch.from_numpy(rng.normal(0, 2, size=(5, 7, 7)))
    y = torch.from_numpy(rng.uniform(0, 1, size=(5, 7, 7)))
    batched = quality_focal_loss(logits, y)
    singles = [quality_focal_loss(logits[i], y[i]).item() for i in range(5)]
    assert batched.item() == pytest.approx(sum(singles) / 5, rel=1e-12)


def test_validation_errors():
    good = torch.zeros((4, 4))
    with pytest.raises(ValueError):
        LossConfig(beta=-1.0)
    with pytest.raises(ValueError):
        LossConfig(reduction="mean")
    with pytest.raises(ValueError):
        quality_focal_loss(good, torch.zeros((4, 5)))
    with pytest.raises(ValueError):
        quality_focal_loss(torch.zeros(4), torch.zeros(4))
    with pytest.raises(ValueError):
        quality_focal_loss(good, torch.full((4, 4), 1.5))
    with pytest.raises(ValueError):
        quality_focal_loss(good, torch.full((4, 4), -0.1))
    with pytest.raises(ValueError):
        quality_focal_loss(good, torch.full((4, 4), float("nan")))
