"""Segmentation architectures on a width-scalable MobileNetV2 encoder.

Three fixed topologies: an FCN-style encoder-decoder with two transposed
convolution upsampling steps and skip concatenations (full-width and a
0.25-width "tiny" variant with 8-channel decoder maps), and a
DeepLabV3+-style net with an output-stride-8 dilated encoder, a 5-branch
ASPP at rates 2/4/6 and a small decoder. Logits are produced at the
input's native grid and bilinearly resized to the requested label grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn.layers import (
    BatchNorm2d,
    BilinearResize,
    Conv2d,
    ConvTranspose2d,
    DepthwiseConv2d,
    GlobalAvgPool,
    Layer,
    ReLU6,
    concat,
    split_like,
)
from .nn.params import Param

# MobileNetV2 stage table: (expansion, channels, repeats, first stride)
_MOBILENET_STAGES = [
    (1, 16, 1, 1),
    (6, 24, 2, 2),
    (6, 32, 3, 2),
    (6, 64, 4, 2),
    (6, 96, 3, 1),
    (6, 160, 3, 2),
    (6, 320, 1, 1),
]
_STEM_CHANNELS = 32


def round_channels(ch: float, multiplier: float) -> int:
    """Width-multiplier rounding: multiples of 8 with a floor of 8."""
    return max(8, int(round(ch * multiplier / 8)) * 8)


def _collect_params(modules: dict[str, object]) -> dict[str, Param]:
    out: dict[str, Param] = {}
    for prefix, mod in modules.items():
        for name, p in mod.params().items():
            out[f"{prefix}.{name}"] = p
    return out


def _collect_buffers(modules: dict[str, object]) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    for prefix, mod in modules.items():
        if hasattr(mod, "buffers"):
            for name, b in mod.buffers().items():
                out[f"{prefix}.{name}"] = b
    return out


class ConvBNAct(Layer):
    def __init__(self, in_ch, out_ch, kernel=3, stride=1, dilation=1, act=True,
                 rng=None, dtype=np.float32):
        self.conv = Conv2d(in_ch, out_ch, kernel, stride, dilation, "same",
                           bias=False, rng=rng, dtype=dtype)
        self.bn = BatchNorm2d(out_ch, dtype=dtype)
        self.act = ReLU6() if act else None

    def params(self):
        return _collect_params({"conv": self.conv, "bn": self.bn})

    def buffers(self):
        return _collect_buffers({"bn": self.bn})

    def forward(self, x, train=False):
        y = self.bn.forward(self.conv.forward(x, train), train)
        return self.act.forward(y, train) if self.act else y

    def backward(self, dy):
        if self.act:
            dy = self.act.backward(dy)
        return self.conv.backward(self.bn.backward(dy))


class InvertedResidual(Layer):
    """MobileNetV2 block: 1x1 expand, 3x3 depthwise, 1x1 linear project."""

    def __init__(self, in_ch, out_ch, stride, expansion, dilation=1, rng=None,
                 dtype=np.float32):
        hidden = in_ch * expansion
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.stride = stride
        self.dilation = dilation
        self.expand = (
            ConvBNAct(in_ch, hidden, kernel=1, rng=rng, dtype=dtype)
            if expansion != 1 else None
        )
        self.dw = DepthwiseConv2d(hidden, 3, stride, dilation, rng=rng, dtype=dtype)
        self.dw_bn = BatchNorm2d(hidden, dtype=dtype)
        self.dw_act = ReLU6()
        self.project = ConvBNAct(hidden, out_ch, kernel=1, act=False, rng=rng, dtype=dtype)
        self.use_res = stride == 1 and in_ch == out_ch

    def _modules(self):
        mods = {"dw": self.dw, "dw_bn": self.dw_bn, "project": self.project}
        if self.expand:
            mods["expand"] = self.expand
        return mods

    def params(self):
        return _collect_params(self._modules())

    def buffers(self):
        return _collect_buffers(self._modules())

    def forward(self, x, train=False):
        y = self.expand.forward(x, train) if self.expand else x
        y = self.dw_act.forward(self.dw_bn.forward(self.dw.forward(y, train), train), train)
        y = self.project.forward(y, train)
        return y + x if self.use_res else y

    def backward(self, dy):
        d = self.project.backward(dy)
        d = self.dw.backward(self.dw_bn.backward(self.dw_act.backward(d)))
        if self.expand:
            d = self.expand.backward(d)
        return d + dy if self.use_res else d


class MobileNetV2Encoder(Layer):
    """Inverted-residual feature extractor with taps at strides 4/8/16/32.

    With output_stride=8 the stages past stride 8 keep stride 1 and use
    dilations 2 then 4; taps then stop at s8 (the final feature map).
    """

    def __init__(self, width_multiplier=1.0, in_channels=1, output_stride=32,
                 rng=None, dtype=np.float32):
        if output_stride not in (8, 32):
            raise ValueError("output_stride must be 8 or 32")
        self.width_multiplier = width_multiplier
        self.output_stride = output_stride
        stem_ch = round_channels(_STEM_CHANNELS, width_multiplier)
        self.stem = ConvBNAct(in_channels, stem_ch, kernel=3, stride=2, rng=rng, dtype=dtype)
        self.blocks: list[InvertedResidual] = []
        # tap name recorded after the block at each index
        self._tap_after: dict[int, str] = {}
        self.tap_channels: dict[str, int] = {}
        in_ch = stem_ch
        stride_now = 2
        dilation = 1
        stage_strides = []
        for t, c, n, s in _MOBILENET_STAGES:
            out_ch = round_channels(c, width_multiplier)
            block_stride = s
            if s == 2 and stride_now * 2 > output_stride:
                block_stride = 1
                dilation *= 2
            for i in range(n):
                st = block_stride if i == 0 else 1
                self.blocks.append(
                    InvertedResidual(in_ch, out_ch, st, t, dilation, rng=rng, dtype=dtype)
                )
                if i == 0 and st == 2:
                    stride_now *= 2
                in_ch = out_ch
            stage_strides.append((len(self.blocks) - 1, stride_now, out_ch))
        # the last stage ending at each stride level owns that tap
        last_for_name: dict[str, tuple[int, int]] = {}
        for idx, stride, ch in stage_strides:
            last_for_name[f"s{stride}"] = (idx, ch)
        for name, (idx, ch) in last_for_name.items():
            self._tap_after[idx] = name
            self.tap_channels[name] = ch
        self.final_tap = f"s{output_stride}"
        self.out_channels = in_ch

    def _modules(self):
        mods = {"stem": self.stem}
        mods.update({f"block{i}": b for i, b in enumerate(self.blocks)})
        return mods

    def params(self):
        return _collect_params(self._modules())

    def buffers(self):
        return _collect_buffers(self._modules())

    def forward(self, x, train=False) -> dict[str, np.ndarray]:
        y = self.stem.forward(x, train)
        taps: dict[str, np.ndarray] = {"s2": y}
        self.tap_channels.setdefault("s2", y.shape[-1])
        for i, b in enumerate(self.blocks):
            y = b.forward(y, train)
            if i in self._tap_after:
                taps[self._tap_after[i]] = y
        return taps

    def backward(self, d_taps: dict[str, np.ndarray]) -> np.ndarray:
        g: np.ndarray | None = None
        for i in reversed(range(len(self.blocks))):
            if i in self._tap_after:
                name = self._tap_after[i]
                if name in d_taps and d_taps[name] is not None:
                    g = d_taps[name] if g is None else g + d_taps[name]
            if g is None:
                raise ValueError("no gradient flowing into encoder tail")
            g = self.blocks[i].backward(g)
        if "s2" in d_taps and d_taps["s2"] is not None:
            g = g + d_taps["s2"]
        return self.stem.backward(g)


def _crop(x: np.ndarray, hw: tuple[int, int]) -> np.ndarray:
    return x[:, : hw[0], : hw[1], :]


def _uncrop(dy: np.ndarray, hw: tuple[int, int]) -> np.ndarray:
    pad_h = hw[0] - dy.shape[1]
    pad_w = hw[1] - dy.shape[2]
    if pad_h == 0 and pad_w == 0:
        return dy
    return np.pad(dy, ((0, 0), (0, pad_h), (0, pad_w), (0, 0)))


@dataclass(frozen=True)
class ModelSpec:
    arch: str                       # fcn | fcn_tiny | deeplabv3p
    width_multiplier: float
    in_channels: int
    n_classes: int = 2
    decoder_depth: int = 64
    aspp_rates: tuple[int, ...] = (2, 4, 6)

    def __post_init__(self):
        if self.arch not in ("fcn", "fcn_tiny", "deeplabv3p"):
            raise ValueError(f"unknown arch {self.arch!r}")
        if self.arch == "fcn_tiny" and (self.width_multiplier != 0.25 or self.decoder_depth != 8):
            raise ValueError("fcn_tiny requires width 0.25 and decoder depth 8")
        if self.arch == "deeplabv3p" and tuple(self.aspp_rates) != (2, 4, 6):
            raise ValueError("deeplabv3p uses ASPP rates (2, 4, 6)")


def make_spec(arch: str, in_channels: int) -> ModelSpec:
    if arch == "fcn":
        return ModelSpec(arch, 1.0, in_channels, decoder_depth=64)
    if arch == "fcn_tiny":
        return ModelSpec(arch, 0.25, in_channels, decoder_depth=8)
    if arch == "deeplabv3p":
        return ModelSpec(arch, 1.0, in_channels, decoder_depth=64)
    raise ValueError(f"unknown arch {arch!r}")


class FCN(Layer):
    """Encoder-decoder: two x2 transposed-conv upsamplings with skip
    concatenations, classifying at 1/8 of the input grid."""

    def __init__(self, spec: ModelSpec, label_hw: tuple[int, int], seed: int = 0,
                 dtype=np.float32):
        rng = np.random.default_rng(seed)
        self.spec = spec
        self.label_hw = label_hw
        d = spec.decoder_depth
        self.encoder = MobileNetV2Encoder(spec.width_multiplier, spec.in_channels,
                                          output_stride=32, rng=rng, dtype=dtype)
        c32 = self.encoder.tap_channels["s32"]
        c16 = self.encoder.tap_channels["s16"]
        c8 = self.encoder.tap_channels["s8"]
        self.head = ConvBNAct(c32, d, kernel=1, rng=rng, dtype=dtype)
        self.up1 = ConvTranspose2d(d, d, rng=rng, dtype=dtype)
        self.up1_bn = BatchNorm2d(d, dtype=dtype)
        self.up1_act = ReLU6()
        self.up2 = ConvTranspose2d(d + c16, d, rng=rng, dtype=dtype)
        self.up2_bn = BatchNorm2d(d, dtype=dtype)
        self.up2_act = ReLU6()
        self.classifier = Conv2d(d + c8, spec.n_classes, kernel=1, rng=rng, dtype=dtype)
        self.resize = BilinearResize(*label_hw)
        self._c16, self._c8, self._d = c16, c8, d
        self.pre_resize_shape: tuple[int, int] | None = None

    def _modules(self):
        return {
            "encoder": self.encoder, "head": self.head,
            "up1": self.up1, "up1_bn": self.up1_bn,
            "up2": self.up2, "up2_bn": self.up2_bn,
            "classifier": self.classifier,
        }

    def params(self):
        return _collect_params(self._modules())

    def buffers(self):
        return _collect_buffers(self._modules())

    def forward(self, x, train=False):
        taps = self.encoder.forward(x, train)
        h = self.head.forward(taps["s32"], train)
        u1_full = self.up1_act.forward(self.up1_bn.forward(self.up1.forward(h, train), train), train)
        s16_hw = taps["s16"].shape[1:3]
        self._u1_hw = u1_full.shape[1:3]
        u1 = _crop(u1_full, s16_hw)
        cat1 = concat([u1, taps["s16"]])
        u2_full = self.up2_act.forward(self.up2_bn.forward(self.up2.forward(cat1, train), train), train)
        s8_hw = taps["s8"].shape[1:3]
        self._u2_hw = u2_full.shape[1:3]
        u2 = _crop(u2_full, s8_hw)
        cat2 = concat([u2, taps["s8"]])
        logits_small = self.classifier.forward(cat2, train)
        self.pre_resize_shape = logits_small.shape[1:3]
        return self.resize.forward(logits_small, train)

    def backward(self, dy):
        d = self.resize.backward(dy)
        d = self.classifier.backward(d)
        d_u2, d_s8 = split_like(d, [self._d, self._c8])
        d = _uncrop(d_u2, self._u2_hw)
        d = self.up2.backward(self.up2_bn.backward(self.up2_act.backward(d)))
        d_u1, d_s16 = split_like(d, [self._d, self._c16])
        d = _uncrop(d_u1, self._u1_hw)
        d = self.up1.backward(self.up1_bn.backward(self.up1_act.backward(d)))
        d_s32 = self.head.backward(d)
        return self.encoder.backward({"s32": d_s32, "s16": d_s16, "s8": d_s8})


class DeepLabV3Plus(Layer):
    """OS-8 dilated encoder, 5-branch ASPP (1x1, rates 2/4/6, image pool)
    and a small decoder over the stride-4 skip."""

    ASPP_CH = 128
    DEC_CH = 64

    def __init__(self, spec: ModelSpec, label_hw: tuple[int, int], seed: int = 0,
                 dtype=np.float32):
        rng = np.random.default_rng(seed)
        self.spec = spec
        self.label_hw = label_hw
        self.encoder = MobileNetV2Encoder(spec.width_multiplier, spec.in_channels,
                                          output_stride=8, rng=rng, dtype=dtype)
        c_out = self.encoder.out_channels
        c4 = self.encoder.tap_channels["s4"]
        p = self.ASPP_CH
        self.aspp1x1 = ConvBNAct(c_out, p, kernel=1, rng=rng, dtype=dtype)
        self.aspp_atrous = [
            ConvBNAct(c_out, p, kernel=3, dilation=r, rng=rng, dtype=dtype)
            for r in spec.aspp_rates
        ]
        self.gap = GlobalAvgPool()
        self.gap_conv = Conv2d(c_out, p, kernel=1, rng=rng, dtype=dtype)
        self.gap_act = ReLU6()
        self.proj = ConvBNAct(p * 5, p, kernel=1, rng=rng, dtype=dtype)
        self.dec1 = ConvBNAct(p + c4, self.DEC_CH, kernel=3, rng=rng, dtype=dtype)
        self.dec2 = ConvBNAct(self.DEC_CH, self.DEC_CH, kernel=3, rng=rng, dtype=dtype)
        self.classifier = Conv2d(self.DEC_CH, spec.n_classes, kernel=1, rng=rng, dtype=dtype)
        self.resize = BilinearResize(*label_hw)
        self._c4 = c4
        self.aspp_branch_count = 2 + len(spec.aspp_rates)

    def _modules(self):
        mods = {
            "encoder": self.encoder, "aspp1x1": self.aspp1x1,
            "gap_conv": self.gap_conv, "proj": self.proj,
            "dec1": self.dec1, "dec2": self.dec2, "classifier": self.classifier,
        }
        for i, m in enumerate(self.aspp_atrous):
            mods[f"aspp_r{self.spec.aspp_rates[i]}"] = m
        return mods

    def params(self):
        return _collect_params(self._modules())

    def buffers(self):
        return _collect_buffers(self._modules())

    def forward(self, x, train=False):
        taps = self.encoder.forward(x, train)
        feat = taps["s8"]
        fh, fw = feat.shape[1:3]
        branches = [self.aspp1x1.forward(feat, train)]
        branches += [m.forward(feat, train) for m in self.aspp_atrous]
        g = self.gap_act.forward(self.gap_conv.forward(self.gap.forward(feat, train), train), train)
        self._gap_resize = BilinearResize(fh, fw)
        branches.append(self._gap_resize.forward(g, train))
        fused = self.proj.forward(concat(branches), train)
        s4_hw = taps["s4"].shape[1:3]
        self._up = BilinearResize(*s4_hw)
        up = self._up.forward(fused, train)
        cat = concat([up, taps["s4"]])
        y = self.dec2.forward(self.dec1.forward(cat, train), train)
        logits_small = self.classifier.forward(y, train)
        self.pre_resize_shape = logits_small.shape[1:3]
        return self.resize.forward(logits_small, train)

    def backward(self, dy):
        p = self.ASPP_CH
        d = self.resize.backward(dy)
        d = self.classifier.backward(d)
        d = self.dec1.backward(self.dec2.backward(d))
        d_up, d_s4 = split_like(d, [p, self._c4])
        d_fused = self._up.backward(d_up)
        d_branches = split_like(self.proj.backward(d_fused), [p] * self.aspp_branch_count)
        d_feat = self.aspp1x1.backward(d_branches[0])
        for m, db in zip(self.aspp_atrous, d_branches[1 : 1 + len(self.aspp_atrous)]):
            d_feat = d_feat + m.backward(db)
        dg = self._gap_resize.backward(d_branches[-1])
        d_feat = d_feat + self.gap.backward(
            self.gap_conv.backward(self.gap_act.backward(dg))
        )
        return self.encoder.backward({"s8": d_feat, "s4": d_s4})


def build_model(arch: str, in_channels: int, label_hw: tuple[int, int],
                seed: int = 0, dtype=np.float32):
    spec = make_spec(arch, in_channels)
    if arch in ("fcn", "fcn_tiny"):
        return FCN(spec, label_hw, seed=seed, dtype=dtype)
    return DeepLabV3Plus(spec, label_hw, seed=seed, dtype=dtype)


def param_count(model) -> int:
    """Total trainable elements (batchnorm scale/shift included, running
    statistics excluded)."""
    return int(sum(p.value.size for p in model.params().values()))
