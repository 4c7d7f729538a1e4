"""Encoder-decoder restoration network.

Layout, in order: a 3x3 stem, two stride-2 3x3 downsampling convolutions,
three densely connected depthwise-separable blocks each followed by a
channel-then-pixel attention gate, two nearest-neighbour x2 upsamplings each
followed by a channel-halving 3x3 convolution, and a final 3x3 projection
back to the input channel count.  With the global residual enabled the
output is clamp(input + prediction, 0, 1), so an all-zero prediction leaves
the image untouched.  ReLU follows every convolution except the gate outputs
(logistic) and the final projection.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from . import autodiff as ad
from .autodiff import Tensor
from .weights import ModelWeights


@dataclass(frozen=True)
class NetConfig:
    in_channels: int = 3
    base_width: int = 16
    ddsc_modules: int = 3
    ddsc_layers: int = 4
    growth: int = 16
    downsamples: int = 2
    use_global_residual: bool = True

    def __post_init__(self):
        for name in ("in_channels", "base_width", "ddsc_modules", "ddsc_layers", "growth"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.downsamples != 2:
            raise ValidationError(
                f"downsamples must be 2 (two stride-2 stages), got {self.downsamples}"
            )

    @property
    def bottleneck_width(self) -> int:
        return 4 * self.base_width

    @property
    def attention_width(self) -> int:
        return max(1, self.bottleneck_width // 8)


def param_shapes(cfg: NetConfig) -> "OrderedDict[str, tuple]":
    """Name -> shape table; the single source of truth for the layer layout."""
    cin, b = cfg.in_channels, cfg.base_width
    f, r = cfg.bottleneck_width, cfg.attention_width
    shapes: "OrderedDict[str, tuple]" = OrderedDict()

    def conv(name, out_c, in_c, k):
        shapes[f"{name}.w"] = (out_c, in_c, k, k)
        shapes[f"{name}.b"] = (out_c,)

    conv("stem", b, cin, 3)
    conv("down1", 2 * b, b, 3)
    conv("down2", f, 2 * b, 3)
    for m in range(cfg.ddsc_modules):
        for l in range(cfg.ddsc_layers):
            c_in = f + l * cfg.growth
            shapes[f"ddsc{m}.l{l}.dw.w"] = (c_in, 3, 3)
            shapes[f"ddsc{m}.l{l}.dw.b"] = (c_in,)
            conv(f"ddsc{m}.l{l}.pw", cfg.growth, c_in, 1)
        conv(f"ddsc{m}.fuse", f, f + cfg.ddsc_layers * cfg.growth, 1)
        conv(f"ddsc{m}.ca1", r, f, 1)
        conv(f"ddsc{m}.ca2", f, r, 1)
        conv(f"ddsc{m}.pa1", r, f, 1)
        conv(f"ddsc{m}.pa2", 1, r, 1)
    conv("up1", 2 * b, f, 3)
    conv("up2", b, 2 * b, 3)
    conv("head", cin, b, 3)
    return shapes


def init_weights(
    cfg: NetConfig, seed: int, head_zero: bool = True, dtype=np.float32
) -> ModelWeights:
    """He-normal weights, zero biases; optionally a zeroed final projection so
    the residual network starts as the identity while gradients still flow."""
    rng = np.random.Generator(np.random.PCG64(seed))
    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".b"):
            tensors[name] = np.zeros(shape, dtype=dtype)
            continue
        fan_in = int(np.prod(shape[1:]))
        std = np.sqrt(2.0 / fan_in)
        arr = rng.normal(0.0, std, size=shape)
        if head_zero and name == "head.w":
            arr = np.zeros(shape)
        tensors[name] = arr.astype(dtype)
    return ModelWeights(tensors)


def build_params(weights: ModelWeights, cfg: NetConfig, dtype=None) -> dict[str, Tensor]:
    """Wrap weight arrays as trainable tensors, validating names and shapes."""
    expected = param_shapes(cfg)
    missing = [n for n in expected if n not in weights.tensors]
    extra = [n for n in weights.tensors if n not in expected]
    if missing or extra:
        raise ValidationError(
            f"weights do not match config: missing {missing[:3]}, unexpected {extra[:3]}"
        )
    params = {}
    for name, shape in expected.items():
        arr = weights.tensors[name]
        if tuple(arr.shape) != shape:
            raise ValidationError(
                f"weight {name} has shape {tuple(arr.shape)}, config expects {shape}"
            )
        data = arr if dtype is None else arr.astype(dtype)
        params[name] = Tensor(np.array(data), requires_grad=True)
    return params


def graph_forward(
    params: dict[str, Tensor], cfg: NetConfig, x: Tensor, internals: dict | None = None
) -> Tensor:
    """Differentiable forward pass; ``internals`` collects gate tensors for tests."""
    if x.data.ndim != 4 or x.data.shape[1] != cfg.in_channels:
        raise ValidationError(
            f"input must be (B, {cfg.in_channels}, H, W), got {x.data.shape}"
        )
    if x.data.shape[2] % 4 or x.data.shape[3] % 4:
        raise ValidationError(
            f"spatial dims must be divisible by 4, got {x.data.shape[2]}x{x.data.shape[3]}"
        )

    def conv(name, t, stride=1, pad=0, act="relu"):
        out = ad.conv2d(t, params[f"{name}.w"], params[f"{name}.b"], stride=stride, pad=pad)
        if internals is not None:
            internals[f"pre.{name}"] = out
        return ad.relu(out) if act == "relu" else out

    h = conv("stem", x, pad=1)
    h = conv("down1", h, stride=2, pad=1)
    h = conv("down2", h, stride=2, pad=1)

    for m in range(cfg.ddsc_modules):
        feats = [h]
        for l in range(cfg.ddsc_layers):
            inp = feats[0] if l == 0 else ad.concat(feats, axis=1)
            pre = ad.dwconv2d(inp, params[f"ddsc{m}.l{l}.dw.w"], params[f"ddsc{m}.l{l}.dw.b"], pad=1)
            if internals is not None:
                internals[f"pre.ddsc{m}.l{l}.dw"] = pre
            t = conv(f"ddsc{m}.l{l}.pw", ad.relu(pre))
            feats.append(t)
        fused = conv(f"ddsc{m}.fuse", ad.concat(feats, axis=1))
        # channel gate, then pixel gate
        s = conv(f"ddsc{m}.ca1", ad.spatial_mean(fused))
        s = ad.sigmoid(ad.conv2d(s, params[f"ddsc{m}.ca2.w"], params[f"ddsc{m}.ca2.b"]))
        gated = ad.mul(fused, s)
        p = conv(f"ddsc{m}.pa1", gated)
        p = ad.sigmoid(ad.conv2d(p, params[f"ddsc{m}.pa2.w"], params[f"ddsc{m}.pa2.b"]))
        h = ad.mul(gated, p)
        if internals is not None:
            internals[f"ddsc{m}.channel_gate"] = s
            internals[f"ddsc{m}.pixel_gate"] = p

    h = conv("up1", ad.upsample2x(h), pad=1)
    h = conv("up2", ad.upsample2x(h), pad=1)
    pred = conv("head", h, pad=1, act=None)
    if internals is not None:
        internals["prediction"] = pred
    if cfg.use_global_residual:
        return ad.clamp01(ad.add(x, pred))
    return ad.clamp01(pred)


def forward(weights: ModelWeights, cfg: NetConfig, x: np.ndarray) -> np.ndarray:
    """Inference entry point: numpy (B, C, H, W) in, numpy out, no graph."""
    params = build_params(weights, cfg, dtype=np.float64)
    with ad.no_grad():
        out = graph_forward(params, cfg, Tensor(np.asarray(x, dtype=np.float64)))
    return out.data


def infer_config(weights: ModelWeights, use_global_residual: bool = True) -> NetConfig:
    """Reconstruct the architecture from weight names and shapes.

    The residual flag is not stored in the file; it defaults to the shipped
    architecture.
    """
    try:
        stem = weights["stem.w"]
        base = stem.shape[0]
        cin = stem.shape[1]
        modules = len({n.split(".")[0] for n in weights.names() if n.startswith("ddsc")})
        layers = len(
            {n.split(".")[1] for n in weights.names() if n.startswith("ddsc0.l")}
        )
        growth = weights["ddsc0.l0.pw.w"].shape[0]
    except KeyError as exc:
        raise ValidationError(f"weights are missing expected tensor {exc}") from exc
    cfg = NetConfig(
        in_channels=cin,
        base_width=base,
        ddsc_modules=modules,
        ddsc_layers=layers,
        growth=growth,
        use_global_residual=use_global_residual,
    )
    build_params(weights, cfg)  # validates the full table
    return cfg
