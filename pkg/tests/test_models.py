import numpy as np
import pytest

from radar_openspace import models, nn


def test_round_channels():
    assert models.round_channels(32, 1.0) == 32
    assert models.round_channels(32, 0.25) == 8
    assert models.round_channels(16, 0.25) == 8      # floor of 8
    assert models.round_channels(24, 0.25) == 8
    assert models.round_channels(96, 0.25) == 24


def test_model_spec_invariants():
    with pytest.raises(ValueError):
        models.ModelSpec("fcn_tiny", 1.0, 1, decoder_depth=8)
    with pytest.raises(ValueError):
        models.ModelSpec("fcn_tiny", 0.25, 1, decoder_depth=64)
    with pytest.raises(ValueError):
        models.ModelSpec("deeplabv3p", 1.0, 1, aspp_rates=(1, 2, 3))
    with pytest.raises(ValueError):
        models.make_spec("resnet", 1)


# ---------------------------------------------------------------------------
# encoder


def test_encoder_stride32_output_shape():
    enc = models.MobileNetV2Encoder(width_multiplier=0.25, in_channels=1)
    taps = enc.forward(np.zeros((1, 128, 48, 1), dtype=np.float32))
    assert taps["s32"].shape[1:3] == (4, 2)
    assert taps["s16"].shape[1:3] == (8, 3)
    assert taps["s8"].shape[1:3] == (16, 6)
    assert taps["s4"].shape[1:3] == (32, 12)


def test_encoder_width_quarter_stem_channels():
    enc = models.MobileNetV2Encoder(width_multiplier=0.25, in_channels=1)
    taps = enc.forward(np.zeros((1, 32, 32, 1), dtype=np.float32))
    assert taps["s2"].shape[-1] == 8  # max(8, round8(32 * 0.25))


def test_encoder_output_stride_8_dilation():
    enc = models.MobileNetV2Encoder(width_multiplier=1.0, in_channels=1, output_stride=8)
    taps = enc.forward(np.zeros((1, 128, 48, 1), dtype=np.float32))
    assert taps["s8"].shape[1:3] == (16, 6)
    dilations = {b.dilation for b in enc.blocks}
    assert {1, 2, 4} <= dilations


def test_residual_connections_only_when_shapes_match():
    enc = models.MobileNetV2Encoder(width_multiplier=1.0, in_channels=1)
    for b in enc.blocks:
        if b.use_res:
            assert b.stride == 1 and b.in_ch == b.out_ch


# ---------------------------------------------------------------------------
# output shapes across the experiment matrix


@pytest.mark.parametrize("arch", ["fcn_tiny", "fcn", "deeplabv3p"])
@pytest.mark.parametrize("in_hw,in_ch,label_hw", [
    ((128, 48), 64, (128, 48)),     # RAD -> polar
    ((128, 48), 64, (128, 128)),    # RAD -> Cartesian
    ((128, 48), 1, (128, 48)),      # RA -> polar
    ((128, 48), 1, (128, 128)),     # RA -> Cartesian (cross-domain)
    ((128, 128), 1, (128, 128)),    # DoA -> Cartesian
])
def test_output_matches_label_grid(arch, in_hw, in_ch, label_hw):
    model = models.build_model(arch, in_ch, label_hw, seed=0)
    x = np.random.default_rng(0).standard_normal((2, *in_hw, in_ch)).astype(np.float32)
    out = model.forward(x, train=False)
    assert out.shape == (2, *label_hw, 2)


@pytest.mark.parametrize("arch", ["fcn_tiny", "fcn", "deeplabv3p"])
def test_forward_backward_runs(arch):
    model = models.build_model(arch, 1, (64, 48), seed=0)
    x = np.random.default_rng(1).standard_normal((2, 64, 48, 1)).astype(np.float32)
    out = model.forward(x, train=True)
    dx = model.backward(np.ones_like(out))
    assert dx.shape == x.shape
    assert np.isfinite(dx).all()


def test_fcn_logits_are_input_over_8():
    model = models.build_model("fcn", 1, (128, 48), seed=0)
    model.forward(np.zeros((1, 128, 48, 1), dtype=np.float32))
    assert model.pre_resize_shape == (16, 6)
    tiny = models.build_model("fcn_tiny", 1, (128, 48), seed=0)
    tiny.forward(np.zeros((1, 128, 48, 1), dtype=np.float32))
    assert tiny.pre_resize_shape == (16, 6)


def test_deeplab_encoder_os8_feature_size():
    model = models.build_model("deeplabv3p", 1, (128, 48), seed=0)
    taps = model.encoder.forward(np.zeros((1, 128, 48, 1), dtype=np.float32))
    assert taps["s8"].shape[1:3] == (16, 6)


def test_aspp_has_five_branches_with_rates_246():
    model = models.build_model("deeplabv3p", 1, (128, 48), seed=0)
    assert model.aspp_branch_count == 5
    assert [m.conv.dilation for m in model.aspp_atrous] == [2, 4, 6]


def test_fcn_tiny_decoder_depth_is_8():
    tiny = models.build_model("fcn_tiny", 1, (128, 48), seed=0)
    assert tiny.head.conv.w.value.shape[-1] == 8
    assert tiny.up1.w.value.shape[2] == 8
    assert tiny.up2.w.value.shape[2] == 8


# ---------------------------------------------------------------------------
# parameter counts


def test_param_count_single_conv():
    conv = nn.Conv2d(1, 8, kernel=3)
    class Wrap:
        def params(self):
            return {"w": conv.w, "b": conv.b}
    assert models.param_count(Wrap()) == 3 * 3 * 1 * 8 + 8


def test_fcn_tiny_size_budget():
    tiny = models.param_count(models.build_model("fcn_tiny", 64, (128, 48), seed=0))
    full = models.param_count(models.build_model("fcn", 64, (128, 48), seed=0))
    assert tiny <= 300_000
    assert tiny / full < 0.10


def test_param_count_invariant_to_input_size():
    a = models.build_model("fcn_tiny", 1, (128, 48), seed=0)
    b = models.build_model("fcn_tiny", 1, (128, 128), seed=0)
    assert models.param_count(a) == models.param_count(b)


def test_param_count_excludes_running_stats():
    model = models.build_model("fcn_tiny", 1, (128, 48), seed=0)
    names = set(model.params())
    assert not any("running" in n for n in names)
    assert any("running_mean" in n for n in model.buffers())


# ---------------------------------------------------------------------------
# determinism


def test_inference_deterministic():
    model = models.build_model("fcn_tiny", 1, (128, 48), seed=3)
    x = np.random.default_rng(2).standard_normal((1, 128, 48, 1)).astype(np.float32)
    a = model.forward(x, train=False)
    b = model.forward(x, train=False)
    assert np.array_equal(a, b)


def test_same_seed_same_init():
    a = models.build_model("fcn", 1, (128, 48), seed=5)
    b = models.build_model("fcn", 1, (128, 48), seed=5)
    for (na, pa), (nb, pb) in zip(sorted(a.params().items()), sorted(b.params().items())):
        assert na == nb
        assert np.array_equal(pa.value, pb.value)


def test_different_seed_different_init():
    a = models.build_model("fcn_tiny", 1, (128, 48), seed=0)
    b = models.build_model("fcn_tiny", 1, (128, 48), seed=1)
    diffs = sum(
        not np.array_equal(a.params()[n].value, b.params()[n].value)
        for n in a.params()
    )
    assert diffs > 0


# ---------------------------------------------------------------------------
# end-to-end gradient (float64, capped subset)


def test_fcn_tiny_end_to_end_gradcheck():
    model = models.build_model("fcn_tiny", 1, (16, 12), seed=0, dtype=np.float64)
    x = np.random.default_rng(0).standard_normal((2, 16, 12, 1))
    # Warm up batchnorm running statistics first: with fresh (0, 1) stats the
    # inference normalization is the identity, so exact zeros produced by
    # ReLU6 clamping propagate through the depthwise convs and land exactly
    # on the next ReLU6 kink, where the finite difference is one-sided.
    model.forward(np.random.default_rng(9).standard_normal((4, 16, 12, 1)),
                  train=True)
    report = nn.grad_check(model, x, tolerance=1e-3, train=False,
                           max_elements=3, seed=0)
    assert report.passed, report.worst
