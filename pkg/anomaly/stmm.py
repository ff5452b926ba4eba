"""
Short-term memory: a Video Swin backbone over the NF most recent frames.

Clips arrive channels-last as ``[B, NF, H, W, 3]``. Token grids and feature
maps stay channels-last as ``[B, T, H, W, C]`` from the patch embedding up to
the reducer, which collapses them to ``[B, D]``.
"""
from functools import lru_cache, reduce
from operator import mul
from typing import Optional, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F
from einops import rearrange

from .config import PATCH_SIZE, StmmConfig
from .exceptions import DimensionMismatchError, NonFinitePixelsError

Window = Tuple[int, int, int]

# Added to attention logits between tokens that must not see each other
MASK_FILL = -100.0


def check_clip(clip: torch.Tensor) -> None:
    if clip.dim() != 5 or clip.shape[-1] != 3:
        raise DimensionMismatchError(f"Expected a clip of shape [B, NF, H, W, 3], got {tuple(clip.shape)}")
    _, nf, height, width, _ = clip.shape
    if nf < 1:
        raise DimensionMismatchError("A clip needs at least one frame")
    if height % PATCH_SIZE[1] or width % PATCH_SIZE[2]:
        raise DimensionMismatchError(
            f"Frame size {height}x{width} is not divisible by the {PATCH_SIZE[1]}x{PATCH_SIZE[2]} patch"
        )
    if not torch.isfinite(clip).all():
        raise NonFinitePixelsError("Clip contains NaN or infinite pixel values")


def get_window_size(grid: Window, window: Window, shift: Window) -> Tuple[Window, Window]:
    """Shrink the window (and drop the shift) along axes where the grid is no larger than it"""
    use_window = list(window)
    use_shift = list(shift)
    for axis in range(3):
        if grid[axis] <= window[axis]:
            use_window[axis] = grid[axis]
            use_shift[axis] = 0
    return tuple(use_window), tuple(use_shift)


def window_partition(x: torch.Tensor, window: Window) -> torch.Tensor:
    """[B, T, H, W, C] -> [B * num_windows, Wt * Wh * Ww, C]"""
    return rearrange(
        x, 'b (t wt) (h wh) (w ww) c -> (b t h w) (wt wh ww) c',
        wt=window[0], wh=window[1], ww=window[2],
    )


def window_reverse(windows: torch.Tensor, window: Window, batch: int, grid: Window) -> torch.Tensor:
    return rearrange(
        windows, '(b t h w) (wt wh ww) c -> b (t wt) (h wh) (w ww) c',
        b=batch, t=grid[0] // window[0], h=grid[1] // window[1], w=grid[2] // window[2],
        wt=window[0], wh=window[1], ww=window[2],
    )


def _shift_slices(window: int, shift: int):
    if shift == 0:
        return (slice(None),)
    return slice(0, -window), slice(-window, -shift), slice(-shift, None)


@lru_cache(maxsize=64)
def compute_mask(padded: Window, valid: Window, window: Window, shift: Window) -> torch.Tensor:
    """
    Additive attention mask of shape [num_windows, N, N] for a padded grid.

    Tokens attend to each other only when they come from the same side of
    every cyclic-shift boundary and are both real (not padding). The valid
    region is rolled together with the grid, so the mask lines up with the
    shifted windows.
    """
    region = torch.zeros(padded, dtype=torch.long)
    count = 0
    for t_slice in _shift_slices(window[0], shift[0]):
        for h_slice in _shift_slices(window[1], shift[1]):
            for w_slice in _shift_slices(window[2], shift[2]):
                region[t_slice, h_slice, w_slice] = count
                count += 1

    real = torch.zeros(padded, dtype=torch.long)
    real[:valid[0], :valid[1], :valid[2]] = 1
    if any(shift):
        real = torch.roll(real, shifts=tuple(-s for s in shift), dims=(0, 1, 2))

    ids = window_partition((region * 2 + real)[None, ..., None], window).squeeze(-1)
    different = ids.unsqueeze(1) != ids.unsqueeze(2)
    return torch.zeros(different.shape).masked_fill(different, MASK_FILL)


@lru_cache(maxsize=64)
def relative_position_index(window: Window, table_window: Window) -> torch.Tensor:
    """
    Index into a bias table sized for ``table_window`` for every token pair of
    ``window``. The effective window can be smaller than the table's when the
    grid is small; offsets still land inside the table.
    """
    coords = torch.stack(torch.meshgrid(*[torch.arange(n) for n in window], indexing='ij')).flatten(1)
    relative = (coords[:, :, None] - coords[:, None, :]).permute(1, 2, 0)
    strides = ((2 * table_window[1] - 1) * (2 * table_window[2] - 1), 2 * table_window[2] - 1, 1)
    index = torch.zeros(relative.shape[:2], dtype=torch.long)
    for axis in range(3):
        index += (relative[..., axis] + table_window[axis] - 1) * strides[axis]
    return index


class WindowAttention3D(nn.Module):
    """Multi-head self-attention inside 3D windows, optionally cyclically shifted by half a window"""

    def __init__(self, dim: int, window_size: Window, num_heads: int, relative_position_bias: bool = True):
        super().__init__()
        self.dim = dim
        self.window_size = tuple(window_size)
        self.num_heads = num_heads
        self.scale = (dim // num_heads) ** -0.5

        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)
        if relative_position_bias:
            table_size = reduce(mul, [2 * n - 1 for n in self.window_size])
            self.relative_position_bias_table = nn.Parameter(torch.zeros(table_size, num_heads))
        else:
            self.register_parameter('relative_position_bias_table', None)

    def attend(self, windows: torch.Tensor, window: Window, mask: Optional[torch.Tensor]) -> torch.Tensor:
        n = windows.shape[1]
        qkv = rearrange(self.qkv(windows), 'b n (k h d) -> k b h n d', k=3, h=self.num_heads)
        q, k, v = qkv[0], qkv[1], qkv[2]
        attn = (q * self.scale) @ k.transpose(-2, -1)

        if self.relative_position_bias_table is not None:
            index = relative_position_index(window, self.window_size).to(windows.device)
            bias = self.relative_position_bias_table[index.reshape(-1)].reshape(n, n, -1)
            attn = attn + bias.permute(2, 0, 1).unsqueeze(0)

        if mask is not None:
            num_windows = mask.shape[0]
            attn = attn.view(-1, num_windows, self.num_heads, n, n) + mask.to(attn)[None, :, None]
            attn = attn.view(-1, self.num_heads, n, n)

        attn = attn.softmax(dim=-1)
        return self.proj(rearrange(attn @ v, 'b h n d -> b n (h d)'))

    def forward(self, x: torch.Tensor, shift: bool = False) -> torch.Tensor:
        batch, t, h, w, _ = x.shape
        half = tuple(n // 2 for n in self.window_size) if shift else (0, 0, 0)
        window, shift_size = get_window_size((t, h, w), self.window_size, half)

        pads = [(window[axis] - size % window[axis]) % window[axis] for axis, size in enumerate((t, h, w))]
        x = F.pad(x, (0, 0, 0, pads[2], 0, pads[1], 0, pads[0]))
        padded = tuple(x.shape[1:4])

        if any(shift_size):
            x = torch.roll(x, shifts=tuple(-s for s in shift_size), dims=(1, 2, 3))
        mask = None
        if any(shift_size) or any(pads):
            mask = compute_mask(padded, (t, h, w), window, shift_size)

        windows = self.attend(window_partition(x, window), window, mask)
        x = window_reverse(windows, window, batch, padded)

        if any(shift_size):
            x = torch.roll(x, shifts=shift_size, dims=(1, 2, 3))
        return x[:, :t, :h, :w].contiguous()


class Mlp(nn.Module):
    def __init__(self, dim: int, hidden_dim: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden_dim)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden_dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.act(self.fc1(x)))


class SwinBlock3D(nn.Module):
    def __init__(self, dim: int, num_heads: int, window_size: Window, shift: bool,
                 mlp_ratio: float = 4.0, relative_position_bias: bool = True):
        super().__init__()
        self.shift = shift
        self.norm1 = nn.LayerNorm(dim)
        self.attn = WindowAttention3D(dim, window_size, num_heads, relative_position_bias)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, max(1, int(dim * mlp_ratio)))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x), shift=self.shift)
        return x + self.mlp(self.norm2(x))


class PatchMerging(nn.Module):
    """Halves H and W, doubles C. Time is left untouched."""

    def __init__(self, dim: int):
        super().__init__()
        self.norm = nn.LayerNorm(4 * dim)
        self.reduction = nn.Linear(4 * dim, 2 * dim, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        _, _, h, w, _ = x.shape
        if h % 2 or w % 2:
            x = F.pad(x, (0, 0, 0, w % 2, 0, h % 2))
        x = torch.cat([
            x[:, :, 0::2, 0::2], x[:, :, 1::2, 0::2],
            x[:, :, 0::2, 1::2], x[:, :, 1::2, 1::2],
        ], dim=-1)
        return self.reduction(self.norm(x))


class SwinStage(nn.Module):
    def __init__(self, dim: int, depth: int, num_heads: int, window_size: Window,
                 mlp_ratio: float, relative_position_bias: bool, downsample: bool):
        super().__init__()
        self.blocks = nn.ModuleList([
            SwinBlock3D(dim, num_heads, window_size, shift=bool(i % 2), mlp_ratio=mlp_ratio,
                        relative_position_bias=relative_position_bias)
            for i in range(depth)
        ])
        self.downsample = PatchMerging(dim) if downsample else None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for block in self.blocks:
            x = block(x)
        if self.downsample is not None:
            x = self.downsample(x)
        return x


class PatchEmbed3D(nn.Module):
    """Linear projection of non-overlapping 2x4x4x3 patches"""

    def __init__(self, embed_dim: int, patch_norm: bool = True):
        super().__init__()
        self.embed_dim = embed_dim
        self.proj = nn.Conv3d(3, embed_dim, kernel_size=PATCH_SIZE, stride=PATCH_SIZE)
        self.norm = nn.LayerNorm(embed_dim) if patch_norm else None

    def forward(self, clip: torch.Tensor) -> torch.Tensor:
        check_clip(clip)
        if clip.shape[1] % PATCH_SIZE[0]:
            # Odd NF: replicate the earliest frame so the newest frames stay untouched
            clip = torch.cat([clip[:, :1], clip], dim=1)
        x = self.proj(rearrange(clip, 'b t h w c -> b c t h w'))
        x = rearrange(x, 'b c t h w -> b t h w c')
        if self.norm is not None:
            x = self.norm(x)
        return x


class Reducer(nn.Module):
    """Global average over time and space, [B, T, H, W, D] -> [B, D]"""

    def __init__(self):
        super().__init__()
        self.pool = nn.AdaptiveAvgPool3d(1)

    def forward(self, feature_map: torch.Tensor) -> torch.Tensor:
        pooled = self.pool(rearrange(feature_map, 'b t h w d -> b d t h w'))
        return pooled.flatten(1)


class ShortTermMemory(nn.Module):
    def __init__(self, config: StmmConfig):
        super().__init__()
        self.config = config
        self.patch_embed = PatchEmbed3D(config.embed_dim, config.patch_norm)
        self.stages = nn.ModuleList([
            SwinStage(
                dim=config.stage_dim(stage),
                depth=config.depths[stage],
                num_heads=config.num_heads[stage],
                window_size=tuple(config.window_size),
                mlp_ratio=config.mlp_ratio,
                relative_position_bias=config.relative_position_bias,
                downsample=stage < config.num_stages - 1,
            )
            for stage in range(config.num_stages)
        ])
        self.norm = nn.LayerNorm(config.feature_dim)
        self.reducer = Reducer()

    @property
    def feature_dim(self) -> int:
        return self.config.feature_dim

    def forward_features(self, clip: torch.Tensor) -> torch.Tensor:
        """Feature map [B, T', H'', W'', D] before the reducer"""
        x = self.patch_embed(clip)
        for stage in self.stages:
            x = stage(x)
        return self.norm(x)

    def forward(self, clip: torch.Tensor) -> torch.Tensor:
        return self.reducer(self.forward_features(clip))
