import numpy as np
import pytest
import torch
from torch import nn

from balltrack.model import (
    BallNet,
    Fusion,
    NetworkConfig,
    count_parameters,
    load_checkpoint,
    save_checkpoint,
)

TINY = dict(branch_widths=(4, 8, 16, 32), blocks_per_branch=1, input_size=(32, 32))


def tiny_net(**overrides):
    torch.manual_seed(0)
    return BallNet(NetworkConfig(**{**TINY, **overrides}))


def test_config_validation():
    NetworkConfig()  # defaults are valid
    with pytest.raises(ValueError):
        NetworkConfig(n_frames=0)
    with pytest.raises(ValueError):
        NetworkConfig(stem_variant="d")
    with pytest.raises(ValueError):
        NetworkConfig(branch_widths=(16, 32, 64))
    with pytest.raises(ValueError):
        NetworkConfig(branch_widths=(16, 32, 0, 128))
    with pytest.raises(ValueError):
        NetworkConfig(blocks_per_branch=0)
    with pytest.raises(ValueError):
        NetworkConfig(input_size=(290, 512))
    with pytest.raises(ValueError):
        NetworkConfig(input_size=(288, 514))
    # reducing stems need finer divisibility so the deepest branch still exists
    NetworkConfig(stem_variant="b", input_size=(16, 16))
    with pytest.raises(ValueError):
        NetworkConfig(stem_variant="a", input_size=(16, 16))
    with pytest.raises(ValueError):
        NetworkConfig(stem_variant="b", input_size=(8, 16))


@pytest.mark.parametrize("variant", ["a", "b", "c"])
def test_output_shape_matches_input_for_all_stems(variant):
    net = tiny_net(stem_variant=variant, input_size=(32, 64)).eval()
    x = torch.randn(2, 9, 32, 64)
    with torch.no_grad():
        out = net(x)
    assert out.shape == (2, 3, 32, 64)
    assert torch.isfinite(out).all()


def test_stem_variant_base_resolutions():
    for variant, factor in (("a", 4), ("b", 2), ("c", 1)):
        net = tiny_net(stem_variant=variant)
        x = torch.randn(1, 9, 32, 32)
        feat = net.stem(x)
        assert feat.shape[-2:] == (32 // factor, 32 // factor)


def test_stem_variants_have_identical_parameter_counts():
    counts = {v: count_parameters(tiny_net(stem_variant=v)) for v in "abc"}
    assert counts["a"] == counts["b"] == counts["c"]


def test_default_parameter_count_in_published_band():
    n = count_parameters(BallNet(NetworkConfig()))
    assert 1_200_000 <= n <= 1_800_000


def test_count_parameters_on_known_layer():
    assert count_parameters(nn.Conv2d(3, 1, 1, bias=True)) == 4


def test_doubling_widths_scales_count_subquadratically():
    base = count_parameters(BallNet(NetworkConfig()))
    doubled = count_parameters(BallNet(NetworkConfig(branch_widths=(32, 64, 128, 256))))
    ratio = doubled / base
    assert 2.0 < ratio < 4.5


def test_parameter_count_against_layer_by_layer_sum():
    # independent tally: every conv is k*k*in*out (+out if bias), every BN 2*width
    net = tiny_net()
    total = 0
    for m in net.modules():
        if isinstance(m, nn.Conv2d):
            k = m.kernel_size[0] * m.kernel_size[1]
            total += k * m.in_channels * m.out_channels
            if m.bias is not None:
                total += m.out_channels
        elif isinstance(m, nn.BatchNorm2d):
            total += 2 * m.num_features
    assert count_parameters(net) == total


def test_zeroed_head_emits_zero_logits():
    net = tiny_net().eval()
    nn.init.zeros_(net.head.weight)
    nn.init.zeros_(net.head.bias)
    with torch.no_grad():
        out = net(torch.randn(1, 9, 32, 32))
    assert torch.all(out == 0)
    assert torch.sigmoid(out).unique().item() == 0.5


def test_batched_forward_is_per_element_deterministic():
    net = tiny_net().eval()
    x = torch.randn(1, 9, 32, 32)
    batch = torch.cat([x, x], dim=0)
    with torch.no_grad():
        single = net(x)
        double = net(batch)
    assert torch.equal(double[0], double[1])
    assert torch.allclose(double[0], single[0], atol=1e-6)


def test_input_shape_mismatch_raises():
    net = tiny_net()
    with pytest.raises(ValueError):
        net(torch.randn(1, 9, 32, 40))
    with pytest.raises(ValueError):
        net(torch.randn(1, 6, 32, 32))
    with pytest.raises(ValueError):
        net(torch.randn(9, 32, 32))


def test_fusion_full_pairwise_gradient_flow():
    torch.manual_seed(1)
    fusion = Fusion((4, 8, 16), (4, 8, 16, 32)).eval()
    sizes = [(2, 4, 16, 16), (2, 8, 8, 8), (2, 16, 4, 4)]
    for t in range(4):
        inputs = [torch.randn(s, requires_grad=True) for s in sizes]
        outs = fusion(inputs)
        outs[t].abs().sum().backward()
        for s, inp in enumerate(inputs):
            assert inp.grad is not None and inp.grad.abs().sum() > 0, (
                f"no gradient from output branch {t} to input branch {s}"
            )


def test_network_input_gradient_matches_central_differences():
    net = tiny_net().double().eval()
    rng = np.random.default_rng(40)
    x = torch.from_numpy(rng.uniform(-1, 1, size=(1, 9, 32, 32)))
    probe = torch.from_numpy(rng.normal(0, 1, size=(1, 3, 32, 32)))

    def f(inp):
        return (net(inp) * probe).sum()

    xg = x.clone().requires_grad_(True)
    f(xg).backward()
    analytic = xg.grad

    h = 1e-5
    coords = [(0, int(rng.integers(0, 9)), int(rng.integers(0, 32)), int(rng.integers(0, 32))) for _ in range(8)]
    with torch.no_grad():
        for idx in coords:
            plus, minus = x.clone(), x.clone()
            plus[idx] += h
            minus[idx] -= h
            numeric = (f(plus).item() - f(minus).item()) / (2 * h)
            denom = max(abs(numeric), 1e-6)
            assert abs(analytic[idx].item() - numeric) / denom < 1e-3


def test_checkpoint_round_trip(tmp_path):
    net = tiny_net(stem_variant="b", n_frames=2).eval()
    path = tmp_path / "ckpt.pt"
    save_checkpoint(net, path)
    loaded = load_checkpoint(path).eval()
    assert loaded.config == net.config
    x = torch.randn(1, 6, 32, 32)
    with torch.no_grad():
        assert torch.equal(net(x), loaded(x))


def test_checkpoint_rejects_unknown_format(tmp_path):
    path = tmp_path / "bad.pt"
    torch.save({"format_version": 99, "net_config": {}, "state_dict": {}}, path)
    with pytest.raises(ValueError):
        load_checkpoint(path)


def test_checkpoint_loads_with_weights_only():
    # guard against accidentally pickling arbitrary objects into the archive
    import io

    net = tiny_net()
    buf = io.BytesIO()
    import dataclasses as dc

    torch.save(
        {
            "format_version": 1,
            "net_config": dc.asdict(net.config),
            "state_dict": net.state_dict(),
        },
        buf,
    )
    buf.seek(0)
    payload = torch.load(buf, weights_only=True)
    assert payload["net_config"]["branch_widths"] == (4, 8, 16, 32)
