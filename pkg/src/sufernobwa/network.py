"""U-Net dehazing network with Swin-style residual dense blocks.

Layout: stem conv -> four stride-2 encoder stages, each followed by
SwinRRDB blocks -> bottleneck stack (depthwise conv + MLP) -> three decoder
stages with attention-weighted skip fusion -> Conv-SwinRRDB-Conv-TConv-Tanh
head. Modules take NCHW tensors; the Swin layers work internally in NHWC.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, fields

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigError, NumericalError, ShapeMismatch
from .imaging import ImageBuffer

FORMAT_VERSION = 1
INIT_GAIN = math.sqrt(3.0)


@dataclass(frozen=True)
class NetworkConfig:
    base_channels: int = 8
    levels: int = 4
    rrdb_per_stage: int = 1
    swin_layers_per_rrdb: int = 3
    window: int = 4
    heads: int | None = None  # None: channels // 8 per stage, at least 1
    alpha_block: float = 0.2
    alpha_bottleneck: float = 0.1
    mlp_ratio: int = 4
    input_size: int = 64
    bottleneck_blocks: int = 2
    use_swinrrdb: bool = True
    ca_reduction: int = 4
    pad_mode: str = "zeros"  # padding of every 3x3 conv: "zeros" or "reflect"
    head_kernel: int = 4  # output transpose conv; 4 gives every pixel the same tap count

    @classmethod
    def full_preset(cls) -> "NetworkConfig":
        return cls(base_channels=64, window=8, input_size=256)

    def channels(self, level: int) -> int:
        """Feature width at encoder level ``level`` (0 = stem)."""
        return self.base_channels * 2**level

    def heads_for(self, channels: int) -> int:
        return self.heads if self.heads is not None else max(1, channels // 8)

    def validate(self) -> None:
        if self.levels != 4:
            raise ConfigError("levels is fixed at 4")
        if self.swin_layers_per_rrdb != 3:
            raise ConfigError("swin_layers_per_rrdb is fixed at 3")
        if min(self.base_channels, self.rrdb_per_stage, self.window, self.mlp_ratio) < 1:
            raise ConfigError(f"non-positive size in {self}")
        if self.pad_mode not in ("zeros", "reflect"):
            raise ConfigError(f"pad_mode must be 'zeros' or 'reflect', got {self.pad_mode!r}")
        if self.head_kernel not in (3, 4):
            raise ConfigError(f"head_kernel must be 3 or 4, got {self.head_kernel}")
        if self.bottleneck_blocks < 1:
            raise ConfigError("need at least one bottleneck block")
        for level in range(1, self.levels + 1):
            size = self.input_size / 2**level
            if size != int(size):
                raise ConfigError(f"input_size {self.input_size} not divisible by 2^{level}")
            if self.use_swinrrdb and int(size) % self.window:
                raise ConfigError(f"window {self.window} does not divide {int(size)} at level {level}")
            c = self.channels(level)
            if self.use_swinrrdb and c % self.heads_for(c):
                raise ConfigError(f"{self.heads_for(c)} heads do not divide {c} channels")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown network config keys: {sorted(unknown)}")
        return cls(**d)


# --------------------------------------------------------------------------
# window helpers (NHWC)


def window_partition(x: torch.Tensor, window: int) -> torch.Tensor:
    """``(B, H, W, C) -> (B * nW, window*window, C)``."""
    b, h, w, c = x.shape
    if h % window or w % window:
        raise ShapeMismatch(f"window {window} does not divide {h}x{w}")
    x = x.view(b, h // window, window, w // window, window, c)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(-1, window * window, c)


def window_merge(windows: torch.Tensor, window: int, h: int, w: int) -> torch.Tensor:
    c = windows.shape[-1]
    b = windows.shape[0] // ((h // window) * (w // window))
    x = windows.view(b, h // window, w // window, window, window, c)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(b, h, w, c)


def cyclic_shift(x: torch.Tensor, shift: int) -> torch.Tensor:
    return torch.roll(x, shifts=(-shift, -shift), dims=(1, 2)) if shift else x


def reverse_shift(x: torch.Tensor, shift: int) -> torch.Tensor:
    return torch.roll(x, shifts=(shift, shift), dims=(1, 2)) if shift else x


def shift_mask(h: int, w: int, window: int, shift: int) -> torch.Tensor | None:
    """Additive mask ``(nW, N, N)`` blocking pairs that wrapped around the border."""
    if not shift:
        return None
    region = torch.zeros(1, h, w, 1)
    cuts = (slice(0, -window), slice(-window, -shift), slice(-shift, None))
    count = 0
    for hs in cuts:
        for ws in cuts:
            region[:, hs, ws, :] = count
            count += 1
    ids = window_partition(region, window).squeeze(-1)
    same = ids[:, None, :] == ids[:, :, None]
    return torch.zeros(same.shape).masked_fill(~same, float("-inf"))


# --------------------------------------------------------------------------
# building blocks


class WindowAttention(nn.Module):
    """Multi-head self-attention inside (optionally shifted) square windows."""

    def __init__(self, dim: int, heads: int, window: int, shift: int = 0):
        super().__init__()
        if dim % heads:
            raise ShapeMismatch(f"{heads} heads do not divide {dim} channels")
        if shift not in (0, window // 2):
            raise ShapeMismatch(f"shift must be 0 or {window // 2}, got {shift}")
        self.dim, self.heads, self.window, self.shift = dim, heads, window, shift
        self.w_q = nn.Linear(dim, dim)
        self.w_k = nn.Linear(dim, dim)
        self.w_v = nn.Linear(dim, dim)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor, return_attention: bool = False):
        b, h, w, c = x.shape
        if c != self.dim:
            raise ShapeMismatch(f"expected {self.dim} channels, got {c}")
        shift = self.shift if min(h, w) > self.window else 0
        win = window_partition(cyclic_shift(x, shift), self.window)
        n = win.shape[1]
        d_k = c // self.heads

        def split(t):
            return t.view(-1, n, self.heads, d_k).transpose(1, 2)

        q, k, v = split(self.w_q(win)), split(self.w_k(win)), split(self.w_v(win))
        scores = q @ k.transpose(-2, -1) / math.sqrt(d_k)
        mask = shift_mask(h, w, self.window, shift)
        if mask is not None:
            nw = mask.shape[0]
            scores = scores.view(-1, nw, self.heads, n, n) + mask[None, :, None].to(scores)
            scores = scores.view(-1, self.heads, n, n)
        attn = scores.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(-1, n, c)
        out = reverse_shift(window_merge(out, self.window, h, w), shift)
        out = self.proj(out)
        return (out, attn) if return_attention else out


class ChannelAttention(nn.Module):
    """``x * sigmoid(W2 relu(W1 avgpool(x)))`` with 1x1 convolutions."""

    def __init__(self, dim: int, reduction: int = 4):
        super().__init__()
        hidden = max(1, dim // reduction)
        self.w1 = nn.Conv2d(dim, hidden, 1)
        self.w2 = nn.Conv2d(hidden, dim, 1)

    def scale(self, x: torch.Tensor) -> torch.Tensor:
        pooled = F.adaptive_avg_pool2d(x, 1)
        return torch.sigmoid(self.w2(F.relu(self.w1(pooled))))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != self.w1.in_channels:
            raise ShapeMismatch(f"expected {self.w1.in_channels} channels, got {x.shape[1]}")
        return x * self.scale(x)


class Mlp(nn.Module):
    """Position-wise ``W2 GELU(W1 x)`` with exact (erf) GELU; acts on the last axis."""

    def __init__(self, dim: int, ratio: int = 4):
        super().__init__()
        self.fc1 = nn.Linear(dim, dim * ratio)
        self.fc2 = nn.Linear(dim * ratio, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.fc1.in_features:
            raise ShapeMismatch(f"expected {self.fc1.in_features} channels, got {x.shape[-1]}")
        return self.fc2(F.gelu(self.fc1(x), approximate="none"))


def conv3x3(c_in: int, c_out: int, stride: int = 1, groups: int = 1,
            pad_mode: str = "zeros") -> nn.Conv2d:
    return nn.Conv2d(c_in, c_out, 3, stride=stride, padding=1, groups=groups, padding_mode=pad_mode)


def depthwise3x3(dim: int, pad_mode: str = "zeros") -> nn.Conv2d:
    return conv3x3(dim, dim, groups=dim, pad_mode=pad_mode)


def _nchw(x):
    return x.permute(0, 3, 1, 2)


def _nhwc(x):
    return x.permute(0, 2, 3, 1)


class SwinLayer(nn.Module):
    """attention -> depthwise conv -> channel attention -> MLP, with residuals."""

    def __init__(self, dim: int, heads: int, window: int, shift: int = 0,
                 mlp_ratio: int = 4, ca_reduction: int = 4, pad_mode: str = "zeros"):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = WindowAttention(dim, heads, window, shift)
        self.dwconv = depthwise3x3(dim, pad_mode)
        self.ca = ChannelAttention(dim, ca_reduction)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, mlp_ratio)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        t = _nhwc(x)
        t = t + self.attn(self.norm1(t))
        y = _nchw(t)
        y = y + self.dwconv(y)
        y = self.ca(y)
        t = _nhwc(y)
        t = t + self.mlp(self.norm2(t))
        return _nchw(t)


class ResidualDenseBase(nn.Module):
    """``x + alpha * branch(x)`` where the branch densely chains three layers.

    Layer ``i`` sees a 1x1 reduction of ``[x, out_1, ..., out_{i-1}]``; a 3x3
    conv projects ``[x, out_1, out_2, out_3]`` back to ``dim`` channels.
    """

    def __init__(self, dim: int, inner: list[nn.Module], alpha: float, pad_mode: str = "zeros"):
        super().__init__()
        self.alpha = alpha
        self.reduce = nn.ModuleList(nn.Conv2d(dim * (i + 1), dim, 1) for i in range(len(inner)))
        self.layers = nn.ModuleList(inner)
        self.fuse = conv3x3(dim * (len(inner) + 1), dim, pad_mode=pad_mode)

    def branch(self, x: torch.Tensor) -> torch.Tensor:
        feats = [x]
        for reduce, layer in zip(self.reduce, self.layers):
            feats.append(layer(reduce(torch.cat(feats, dim=1))))
        return self.fuse(torch.cat(feats, dim=1))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.alpha * self.branch(x)


class SwinRRDB(ResidualDenseBase):
    def __init__(self, dim: int, heads: int, window: int, alpha: float = 0.2,
                 mlp_ratio: int = 4, ca_reduction: int = 4, pad_mode: str = "zeros"):
        shifts = (0, window // 2, 0)
        inner = [SwinLayer(dim, heads, window, s, mlp_ratio, ca_reduction, pad_mode) for s in shifts]
        super().__init__(dim, inner, alpha, pad_mode)


class PlainRDB(ResidualDenseBase):
    """Attention-free stand-in of equal depth: 3x3 conv + GELU per layer."""

    def __init__(self, dim: int, alpha: float = 0.2, pad_mode: str = "zeros"):
        inner = [nn.Sequential(conv3x3(dim, dim, pad_mode=pad_mode), nn.GELU()) for _ in range(3)]
        super().__init__(dim, inner, alpha, pad_mode)


class BottleneckBlock(nn.Module):
    def __init__(self, dim: int, alpha: float = 0.1, mlp_ratio: int = 4, pad_mode: str = "zeros"):
        super().__init__()
        self.alpha = alpha
        self.dwconv = depthwise3x3(dim, pad_mode)
        self.mlp = Mlp(dim, mlp_ratio)

    def branch(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != self.dwconv.in_channels:
            raise ShapeMismatch(f"expected {self.dwconv.in_channels} channels, got {x.shape[1]}")
        return _nchw(self.mlp(_nhwc(self.dwconv(x))))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.alpha * self.branch(x)


class ChannelFusion(nn.Module):
    """``d * A + e * (1 - A)`` with ``A = sigmoid(conv1x1(conv1x1([d, e])))``."""

    def __init__(self, dim: int):
        super().__init__()
        self.mix = nn.Conv2d(2 * dim, dim, 1)
        self.gate = nn.Conv2d(dim, dim, 1)

    def weights(self, d: torch.Tensor, e: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.gate(self.mix(torch.cat([d, e], dim=1))))

    def forward(self, d: torch.Tensor, e: torch.Tensor) -> torch.Tensor:
        if d.shape != e.shape:
            raise ShapeMismatch(f"{tuple(d.shape)} vs {tuple(e.shape)}")
        a = self.weights(d, e)
        return d * a + e * (1 - a)


# --------------------------------------------------------------------------
# network


def _blocks(cfg: NetworkConfig, dim: int, count: int) -> nn.Sequential:
    if cfg.use_swinrrdb:
        make = lambda: SwinRRDB(dim, cfg.heads_for(dim), cfg.window, cfg.alpha_block,  # noqa: E731
                                cfg.mlp_ratio, cfg.ca_reduction, cfg.pad_mode)
    else:
        make = lambda: PlainRDB(dim, cfg.alpha_block, cfg.pad_mode)  # noqa: E731
    return nn.Sequential(*[make() for _ in range(count)])


class EncoderStage(nn.Module):
    def __init__(self, cfg: NetworkConfig, level: int):
        super().__init__()
        self.down = conv3x3(cfg.channels(level - 1), cfg.channels(level), 2, pad_mode=cfg.pad_mode)
        self.blocks = _blocks(cfg, cfg.channels(level), cfg.rrdb_per_stage)

    def forward(self, x):
        return self.blocks(self.down(x))


class DecoderStage(nn.Module):
    """Upsample level ``level`` to ``level - 1`` and fuse with that encoder output."""

    def __init__(self, cfg: NetworkConfig, level: int):
        super().__init__()
        c_in, c = cfg.channels(level), cfg.channels(level - 1)
        self.up = nn.ConvTranspose2d(c_in, c, 3, stride=2, padding=1, output_padding=1)
        self.skip = nn.Conv2d(c, c, 1)
        self.merge = conv3x3(2 * c, c, pad_mode=cfg.pad_mode)
        self.blocks = _blocks(cfg, c, cfg.rrdb_per_stage)
        self.fusion = ChannelFusion(c)

    def forward(self, x, enc):
        up = self.up(x)
        skip = self.skip(enc)
        if skip.shape[-2:] != up.shape[-2:]:
            skip = F.interpolate(skip, size=up.shape[-2:], mode="bilinear", align_corners=False)
        d = self.blocks(self.merge(torch.cat([up, skip], dim=1)))
        if enc.shape[-2:] != d.shape[-2:]:
            enc = F.interpolate(enc, size=d.shape[-2:], mode="bilinear", align_corners=False)
        return self.fusion(d, enc)


class Sufernobwa(nn.Module):
    """The full dehazing network. Input and output are signed-range NCHW RGB."""

    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        c1 = cfg.channels(1)
        self.stem = conv3x3(3, cfg.channels(0), pad_mode=cfg.pad_mode)
        self.encoder = nn.ModuleList(EncoderStage(cfg, l) for l in range(1, cfg.levels + 1))
        self.bottleneck = nn.Sequential(*[
            BottleneckBlock(cfg.channels(cfg.levels), cfg.alpha_bottleneck, cfg.mlp_ratio, cfg.pad_mode)
            for _ in range(cfg.bottleneck_blocks)
        ])
        self.decoder = nn.ModuleList(DecoderStage(cfg, l) for l in range(cfg.levels, 1, -1))
        self.head_in = conv3x3(c1, c1, pad_mode=cfg.pad_mode)
        self.head_blocks = _blocks(cfg, c1, 1)
        self.head_out = conv3x3(c1, c1, pad_mode=cfg.pad_mode)
        k = cfg.head_kernel
        self.head_up = nn.ConvTranspose2d(c1, 3, k, stride=2, padding=1, output_padding=4 - k)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        n = 2**self.cfg.levels
        if x.shape[-1] % n or x.shape[-2] % n:
            raise ConfigError(f"spatial size {tuple(x.shape[-2:])} not divisible by {n}")
        feats = []
        h = self.stem(x)
        for stage in self.encoder:
            h = stage(h)
            feats.append(h)
        h = self.bottleneck(h)
        for stage, enc in zip(self.decoder, reversed(feats[:-1])):
            h = stage(h, enc)
        h = self.head_out(self.head_blocks(self.head_in(h)))
        out = torch.tanh(self.head_up(h))
        if not torch.isfinite(out).all():
            raise NumericalError("non-finite activation in forward pass")
        return out


def _zero_init_targets(model: nn.Module) -> set[str]:
    """Parameter names of the last projection in every residual branch."""
    names = set()
    for name, mod in model.named_modules():
        prefix = f"{name}." if name else ""
        if isinstance(mod, ResidualDenseBase):
            names |= {f"{prefix}fuse.weight", f"{prefix}fuse.bias"}
        elif isinstance(mod, BottleneckBlock):
            names |= {f"{prefix}mlp.fc2.weight", f"{prefix}mlp.fc2.bias"}
    return names


def init_params(cfg: NetworkConfig, seed: int = 0) -> Sufernobwa:
    """Build the network with deterministic fan-in uniform weights.

    Weights are drawn from ``U(-g/sqrt(fan_in), g/sqrt(fan_in))`` with
    ``g = INIT_GAIN`` (unit output variance) in parameter order; biases
    start at zero and LayerNorms at (1, 0). The last projection of every
    residual branch is zeroed so each block starts as the identity.
    """
    model = Sufernobwa(cfg)
    gen = torch.Generator().manual_seed(int(seed))
    zero = _zero_init_targets(model)
    norms = set()
    with torch.no_grad():
        for name, mod in model.named_modules():
            if isinstance(mod, nn.LayerNorm):
                mod.weight.fill_(1.0)
                mod.bias.zero_()
                norms |= {f"{name}.weight", f"{name}.bias"}
        for name, p in model.named_parameters():
            if name in norms:
                continue
            if name in zero or name.endswith("bias"):
                p.zero_()
                continue
            fan_in = p[0].numel() if not _is_transpose(model, name) else p.shape[0] * p[0, 0].numel()
            bound = INIT_GAIN / math.sqrt(fan_in)
            p.copy_(torch.rand(p.shape, generator=gen) * 2 * bound - bound)
    return model


def _is_transpose(model: nn.Module, param_name: str) -> bool:
    mod = model.get_submodule(param_name.rsplit(".", 1)[0])
    return isinstance(mod, nn.ConvTranspose2d)


# --------------------------------------------------------------------------
# image-level forward and checkpoints


def image_to_tensor(img: ImageBuffer) -> torch.Tensor:
    """Signed-range ``1 x 3 x H x W`` float32 tensor."""
    data = img.to_signed().data
    if data.shape[2] == 1:
        data = np.repeat(data, 3, axis=2)
    return torch.from_numpy(np.ascontiguousarray(data.transpose(2, 0, 1))).float()[None]


def tensor_to_image(t: torch.Tensor) -> ImageBuffer:
    arr = t.detach().cpu().double().numpy()[0].transpose(1, 2, 0)
    return ImageBuffer(arr, "signed")


def forward(img: ImageBuffer, params: Sufernobwa, cfg: NetworkConfig | None = None) -> ImageBuffer:
    """Dehaze one image; returns a signed-range buffer of the same size."""
    cfg = cfg or params.cfg
    if (img.height, img.width) != (cfg.input_size, cfg.input_size):
        raise ConfigError(
            f"input {img.height}x{img.width} does not match input_size {cfg.input_size}"
        )
    params.eval()
    with torch.no_grad():
        return tensor_to_image(params(image_to_tensor(img)))


def parameter_manifest(model: nn.Module) -> dict[str, list[int]]:
    return {name: list(t.shape) for name, t in model.state_dict().items()}


def save_checkpoint(model: Sufernobwa, path, seed: int | None = None, extra: dict | None = None) -> None:
    """Write ``<path>.npz`` weights and a ``<path>.json`` sidecar."""
    path = os.fspath(path)
    base = path[:-4] if path.endswith(".npz") else path
    state = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    np.savez(base + ".npz", **state)
    meta = {
        "format_version": FORMAT_VERSION,
        "config": model.cfg.to_dict(),
        "seed": seed,
        "parameters": parameter_manifest(model),
    }
    if extra:
        meta.update(extra)
    with open(base + ".json", "w") as fh:
        json.dump(meta, fh, indent=2)


def load_checkpoint(path, cfg: NetworkConfig | None = None) -> tuple[Sufernobwa, dict]:
    path = os.fspath(path)
    base = path[:-4] if path.endswith((".npz", ".json")) else path
    with open(base + ".json") as fh:
        meta = json.load(fh)
    if meta.get("format_version") != FORMAT_VERSION:
        raise ConfigError(f"unsupported checkpoint format {meta.get('format_version')}")
    stored = NetworkConfig.from_dict(meta["config"])
    if cfg is not None and cfg != stored:
        raise ConfigError("checkpoint config does not match the requested network config")
    model = Sufernobwa(stored)
    expected = parameter_manifest(model)
    if meta["parameters"] != expected:
        raise ConfigError("checkpoint parameter manifest does not match the network config")
    with np.load(base + ".npz") as data:
        state = {}
        for name, shape in expected.items():
            if name not in data or list(data[name].shape) != shape:
                raise ConfigError(f"parameter {name}: bad or missing array in checkpoint")
            state[name] = torch.from_numpy(data[name])
    model.load_state_dict(state)
    return model, meta
