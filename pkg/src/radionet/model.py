"""The radio-map prediction network and its ablation variants.

Architecture
------------
A convolutional encoder alternates max pooling with 3x3 convolutions,
producing a feature pyramid (stage i: resolution in/2^i, channels
ch * 2^min(i-1, cap)). The decoder upsamples stage by stage through
2x2-stride-2 transposed convolutions, concatenates the matching encoder
feature (lateral skip, present in every variant), fuses with a 3x3
convolution, and then optionally refines through a spread layer: the
feature map is split into an 8x8 grid of patches, each patch is
projected to an embedding, a positional signal is added (deterministic
grid coordinates or a learnable table, or nothing), one transformer
layer mixes the patches, and the embeddings are projected and
reassembled, with an input-output skip connection. A 1x1 convolution
plus sigmoid head emits the normalized power map.

Grid embedding: each patch carries [x_center, y_center,
x_center - tx_x, y_center - tx_y] in the unit square, projected by a
learnable linear map onto the patch embeddings; the coordinates
themselves own no parameters and never change during training. When
grid embedding is on, the encoder input also gains the grid_x/grid_y
coordinate planes (6 input channels instead of 4).

Variants: radionet (spread + grid embedding + skip), radionet_no_skip,
radionet_no_ge (no positional signal), radionet_pe (learnable position
table), unet (no spread layers), transunet (unet plus one transformer
layer over the bottleneck pixels, with a learnable position table).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from .layers import TransformerConfig, TransformerLayerParams, transformer_layer_forward
from .scene import InputFeatureMaps
from .tensor import RngState, Tensor


class ConfigError(ValueError):
    """Model configuration violates a structural constraint."""


VARIANTS = ("radionet", "radionet_no_skip", "radionet_no_ge", "radionet_pe", "unet", "transunet")


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "radionet"
    in_res: int = 128
    out_res: int = 32
    ch: int = 16
    ch_cap: int = 3
    enc_stages: int = 4
    dec_stages: int = 2
    patch_grid: tuple[int, int] = (8, 8)
    transformer: TransformerConfig = field(default_factory=TransformerConfig)
    use_spread: bool = True
    use_ge: bool = True
    use_pe: bool = False
    use_spread_skip: bool = True
    use_bottleneck_transformer: bool = False

    def __post_init__(self):
        if self.use_ge and self.use_pe:
            raise ConfigError("use_ge and use_pe are mutually exclusive")
        if self.enc_stages < 1 or self.dec_stages < 0 or self.dec_stages > self.enc_stages:
            raise ConfigError(f"bad stage counts enc={self.enc_stages} dec={self.dec_stages}")
        if self.in_res % (1 << self.enc_stages):
            raise ConfigError(f"in_res {self.in_res} not divisible by 2^{self.enc_stages}")
        expected_out = self.in_res >> (self.enc_stages - self.dec_stages)
        if self.out_res != expected_out:
            raise ConfigError(
                f"decoder ends at {expected_out}, configured out_res is {self.out_res}"
            )
        gy, gx = self.patch_grid
        if self.use_spread:
            for k in range(1, self.dec_stages + 1):
                res = self.in_res >> (self.enc_stages - k)
                if res % gy or res % gx:
                    raise ConfigError(
                        f"patch grid {self.patch_grid} does not divide spread resolution {res}"
                    )
        if self.use_bottleneck_transformer:
            res = self.in_res >> self.enc_stages
            if res % gy or res % gx:
                raise ConfigError(
                    f"patch grid {self.patch_grid} does not divide bottleneck resolution {res}"
                )

    @property
    def in_channels(self) -> int:
        return 6 if self.use_ge else 4

    def enc_channels(self, stage: int) -> int:
        """Channels after encoder stage (1-based); stage 0 is the stem."""
        if stage == 0:
            return self.ch
        return self.ch * (1 << min(stage - 1, self.ch_cap))


_VARIANT_FLAGS = {
    "radionet": dict(use_spread=True, use_ge=True, use_pe=False, use_spread_skip=True,
                     use_bottleneck_transformer=False),
    "radionet_no_skip": dict(use_spread=True, use_ge=True, use_pe=False, use_spread_skip=False,
                             use_bottleneck_transformer=False),
    "radionet_no_ge": dict(use_spread=True, use_ge=False, use_pe=False, use_spread_skip=True,
                           use_bottleneck_transformer=False),
    "radionet_pe": dict(use_spread=True, use_ge=False, use_pe=True, use_spread_skip=True,
                        use_bottleneck_transformer=False),
    "unet": dict(use_spread=False, use_ge=False, use_pe=False, use_spread_skip=False,
                 use_bottleneck_transformer=False),
    "transunet": dict(use_spread=False, use_ge=False, use_pe=False, use_spread_skip=False,
                      use_bottleneck_transformer=True),
}


def build_variant(name: str, base: ModelConfig | None = None) -> ModelConfig:
    """Config for one of the comparison variants, sharing ``base`` sizes."""
    if name not in _VARIANT_FLAGS:
        raise ConfigError(f"unknown variant {name!r}; valid: {', '.join(VARIANTS)}")
    base = base if base is not None else ModelConfig()
    return replace(base, variant=name, **_VARIANT_FLAGS[name])


# ---------------------------------------------------------------------------
# patch helpers and grid embedding
# ---------------------------------------------------------------------------


def patchify(x: Tensor, grid: tuple[int, int]) -> Tensor:
    """[B, C, H, W] -> [B, gy*gx, C*ph*pw] with ph = H/gy, pw = W/gx."""
    b, c, h, w = x.shape
    gy, gx = grid
    if h % gy or w % gx:
        raise ConfigError(f"patch grid {grid} does not divide feature map {h}x{w}")
    ph, pw = h // gy, w // gx
    x = T.reshape(x, (b, c, gy, ph, gx, pw))
    x = T.transpose(x, (0, 2, 4, 1, 3, 5))  # [B, gy, gx, C, ph, pw]
    return T.reshape(x, (b, gy * gx, c * ph * pw))


def combine(p: Tensor, grid: tuple[int, int], channels: int, h: int, w: int) -> Tensor:
    """Inverse of patchify; bitwise exact round trip."""
    b = p.shape[0]
    gy, gx = grid
    ph, pw = h // gy, w // gx
    x = T.reshape(p, (b, gy, gx, channels, ph, pw))
    x = T.transpose(x, (0, 3, 1, 4, 2, 5))  # [B, C, gy, ph, gx, pw]
    return T.reshape(x, (b, channels, h, w))


def grid_embedding(patch_grid: tuple[int, int], tx_norm) -> np.ndarray:
    """Deterministic per-patch coordinates [P, 4]: patch center in the unit
    square plus the offset from the transmitter. Owns no parameters."""
    gy, gx = patch_grid
    tx_x, tx_y = float(tx_norm[0]), float(tx_norm[1])
    out = np.empty((gy * gx, 4), dtype=np.float32)
    k = 0
    for iy in range(gy):
        yc = np.float32((iy + 0.5) / gy)
        for ix in range(gx):
            xc = np.float32((ix + 0.5) / gx)
            out[k] = (xc, yc, xc - np.float32(tx_x), yc - np.float32(tx_y))
            k += 1
    return out


def tx_norm_from_tx_map(tx_map: np.ndarray) -> tuple[float, float]:
    """Transmitter position in the unit square from the one-hot plane
    (cell-center convention, matching the rasterizer)."""
    idx = np.argwhere(tx_map != 0)
    if idx.shape[0] != 1:
        raise ValueError(f"tx plane must have exactly one nonzero pixel, found {idx.shape[0]}")
    i, j = idx[0]
    h, w = tx_map.shape
    return (j + 0.5) / w, (i + 0.5) / h


# ---------------------------------------------------------------------------
# parameter containers
# ---------------------------------------------------------------------------


def _he_uniform(rng: RngState, fan_in: int, shape) -> Tensor:
    limit = math.sqrt(6.0 / fan_in)
    return rng.tensor_uniform(shape, -limit, limit, requires_grad=True)


def _xavier_uniform(rng: RngState, fan_in: int, fan_out: int, shape) -> Tensor:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.tensor_uniform(shape, -limit, limit, requires_grad=True)


@dataclass
class SpreadLayerParams:
    in_proj_w: Tensor
    in_proj_b: Tensor
    layer: TransformerLayerParams
    out_proj_w: Tensor
    out_proj_b: Tensor
    ge_w: Tensor | None = None
    pe_table: Tensor | None = None

    @classmethod
    def init(cls, cfg: ModelConfig, channels: int, res: int, rng: RngState,
             with_ge: bool, with_pe: bool) -> "SpreadLayerParams":
        gy, gx = cfg.patch_grid
        pp = channels * (res // gy) * (res // gx)
        d = cfg.transformer.d_item
        return cls(
            in_proj_w=_xavier_uniform(rng, pp, d, (pp, d)),
            in_proj_b=Tensor.zeros(d, requires_grad=True),
            layer=TransformerLayerParams.init(cfg.transformer, rng),
            out_proj_w=_xavier_uniform(rng, d, pp, (d, pp)),
            out_proj_b=Tensor.zeros(pp, requires_grad=True),
            ge_w=_xavier_uniform(rng, 4, d, (4, d)) if with_ge else None,
            pe_table=rng.tensor_uniform((gy * gx, d), -0.02, 0.02, requires_grad=True)
            if with_pe
            else None,
        )

    def tensors(self, prefix: str) -> dict[str, Tensor]:
        out = {
            f"{prefix}.in_proj.w": self.in_proj_w,
            f"{prefix}.in_proj.b": self.in_proj_b,
        }
        if self.ge_w is not None:
            out[f"{prefix}.ge.w"] = self.ge_w
        if self.pe_table is not None:
            out[f"{prefix}.pe"] = self.pe_table
        out.update(self.layer.tensors(f"{prefix}.layer."))
        out[f"{prefix}.out_proj.w"] = self.out_proj_w
        out[f"{prefix}.out_proj.b"] = self.out_proj_b
        return out


def spread_layer_forward(
    feat: Tensor,
    tx_norm: np.ndarray,
    params: SpreadLayerParams,
    patch_grid: tuple[int, int],
    use_skip: bool,
) -> Tensor:
    """Patchify -> embed (+ positional signal) -> transformer -> reassemble,
    plus the input as a residual when ``use_skip``."""
    b, c, h, w = feat.shape
    p = patchify(feat, patch_grid)
    e = T.linear(p, params.in_proj_w, params.in_proj_b)  # [B, P, d]
    if params.ge_w is not None:
        ge = np.stack([grid_embedding(patch_grid, tx_norm[i]) for i in range(b)])
        e = T.add(e, T.matmul(Tensor(ge), params.ge_w))
    elif params.pe_table is not None:
        e = T.add(e, params.pe_table)
    z = transformer_layer_forward(e, params.layer)
    o = T.linear(z, params.out_proj_w, params.out_proj_b)
    out = combine(o, patch_grid, c, h, w)
    return T.add(out, feat) if use_skip else out


# ---------------------------------------------------------------------------
# the model
# ---------------------------------------------------------------------------


class RadioNet:
    """Encoder-decoder radio map predictor. Parameters live in an ordered
    name -> Tensor mapping shared by the optimizer and the checkpoint."""

    def __init__(self, cfg: ModelConfig, rng: RngState | None = None):
        self.cfg = cfg
        rng = rng if rng is not None else RngState(0)
        tcfg = cfg.transformer
        self._conv: dict[str, tuple[Tensor, Tensor]] = {}
        self._spread: dict[str, SpreadLayerParams] = {}

        def conv_pair(name, c_out, c_in, k):
            w = _he_uniform(rng, c_in * k * k, (c_out, c_in, k, k))
            b = Tensor.zeros(c_out, requires_grad=True)
            self._conv[name] = (w, b)

        conv_pair("enc.stem", cfg.ch, cfg.in_channels, 3)
        for i in range(1, cfg.enc_stages + 1):
            conv_pair(f"enc.s{i}", cfg.enc_channels(i), cfg.enc_channels(i - 1), 3)

        if cfg.use_bottleneck_transformer:
            c_bott = cfg.enc_channels(cfg.enc_stages)
            res_bott = cfg.in_res >> cfg.enc_stages
            self._spread["bott"] = SpreadLayerParams.init(
                cfg, c_bott, res_bott, rng, with_ge=False, with_pe=True
            )

        for k in range(1, cfg.dec_stages + 1):
            c_in = cfg.enc_channels(cfg.enc_stages - k + 1)
            c_out = cfg.enc_channels(cfg.enc_stages - k)
            # transposed conv kernel layout is [C_in, C_out, kh, kw]
            w = _he_uniform(rng, c_in * 4, (c_in, c_out, 2, 2))
            b = Tensor.zeros(c_out, requires_grad=True)
            self._conv[f"dec.s{k}.up"] = (w, b)
            conv_pair(f"dec.s{k}.fuse", c_out, 2 * c_out, 3)
            if cfg.use_spread:
                res = cfg.in_res >> (cfg.enc_stages - k)
                self._spread[f"dec.s{k}"] = SpreadLayerParams.init(
                    cfg, c_out, res, rng, with_ge=cfg.use_ge, with_pe=cfg.use_pe
                )

        head_in = cfg.enc_channels(cfg.enc_stages - cfg.dec_stages)
        self._conv["head"] = (
            _xavier_uniform(rng, head_in, 1, (1, head_in, 1, 1)),
            Tensor.zeros(1, requires_grad=True),
        )

        self.params: dict[str, Tensor] = {}
        for name, (w, b) in self._conv.items():
            self.params[f"{name}.w"] = w
            self.params[f"{name}.b"] = b
        for name, sp in self._spread.items():
            self.params.update(sp.tensors(name))

    # -- forward -------------------------------------------------------

    def encoder_forward(self, x: Tensor) -> list[Tensor]:
        """Stem plus alternating pool/conv stages; returns the pyramid."""
        if x.ndim != 4 or x.shape[1] != self.cfg.in_channels:
            raise ConfigError(
                f"expected input [B, {self.cfg.in_channels}, {self.cfg.in_res}, "
                f"{self.cfg.in_res}], got {x.shape}"
            )
        w, b = self._conv["enc.stem"]
        z = T.relu(T.conv2d(x, w, b, padding=1))
        pyramid = []
        for i in range(1, self.cfg.enc_stages + 1):
            z = T.maxpool2d(z, 2)
            w, b = self._conv[f"enc.s{i}"]
            z = T.relu(T.conv2d(z, w, b, padding=1))
            pyramid.append(z)
        return pyramid

    def decoder_forward(self, pyramid: list[Tensor], tx_norm: np.ndarray) -> Tensor:
        cfg = self.cfg
        z = pyramid[-1]
        if cfg.use_bottleneck_transformer:
            z = spread_layer_forward(z, tx_norm, self._spread["bott"], cfg.patch_grid, False)
        for k in range(1, cfg.dec_stages + 1):
            w, b = self._conv[f"dec.s{k}.up"]
            z = T.conv_transpose2d(z, w, b, stride=2)
            lateral = pyramid[cfg.enc_stages - k - 1]
            z = T.concat([z, lateral], axis=1)
            w, b = self._conv[f"dec.s{k}.fuse"]
            z = T.relu(T.conv2d(z, w, b, padding=1))
            if cfg.use_spread:
                z = spread_layer_forward(
                    z, tx_norm, self._spread[f"dec.s{k}"], cfg.patch_grid, cfg.use_spread_skip
                )
        w, b = self._conv["head"]
        return T.sigmoid(T.conv2d(z, w, b))

    def forward(self, x, tx_norm: np.ndarray) -> Tensor:
        """x: [B, C_in, H, W] array or Tensor; tx_norm: [B, 2] unit-square
        transmitter positions. Returns [B, 1, out_res, out_res] in [0, 1]."""
        if not isinstance(x, Tensor):
            x = Tensor(x)
        tx_norm = np.atleast_2d(np.asarray(tx_norm, dtype=np.float64))
        if tx_norm.shape != (x.shape[0], 2):
            raise ConfigError(f"tx_norm must be [B, 2], got {tx_norm.shape}")
        return self.decoder_forward(self.encoder_forward(x), tx_norm)

    def __call__(self, x, tx_norm) -> Tensor:
        return self.forward(x, tx_norm)


def features_to_input(maps: InputFeatureMaps, cfg: ModelConfig) -> tuple[np.ndarray, np.ndarray]:
    """Stack rasterized planes into one sample's model input and tx position."""
    planes = maps.stacked(include_grid=cfg.use_ge)
    tx = tx_norm_from_tx_map(maps.tx_map)
    return planes[None], np.array([tx])
