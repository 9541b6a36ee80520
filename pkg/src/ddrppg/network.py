"""Two-branch estimation network: an interference branch (extractor F plus
estimator E shared across fg and bg clips) and an rPPG branch whose initial
features are refined by subtracting the interference features of the same
facial clip.

Each extractor is one vanilla block, four vanilla blocks, and four
descriptive (3D LDC) blocks; each estimator is two descriptive blocks
followed by spatial global averaging and a per-frame channel projection.
Temporal length is preserved end to end (temporal stride 1, padding 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .clips import ClipSet
from .ldc import LDC3d


class NetworkError(ValueError):
    pass


@dataclass
class BranchConfig:
    """Architecture knobs shared by both branches.

    ``pn``, ``pr``, and ``d`` mirror empirically-set hyperparameters whose
    exact semantics are not pinned down; ``d`` doubles as the default
    interference cluster count downstream.
    """

    widths: tuple = (16, 24, 32, 40, 48)
    epsilon: float = 0.7
    descriptive: bool = True
    pn: int = 4
    pr: int = 2
    d: int = 4

    def __post_init__(self):
        if len(self.widths) != 5:
            raise NetworkError("widths must list 5 channel counts")


@dataclass
class ForwardBundle:
    """All per-batch network outputs for one ClipSet.

    Traces are (count, T); feature volumes are (count, C, T, H', W').
    ``r_hat``, ``r``, ``f_n_fg``, ``f_hat_r``, ``f_r`` cover fg clips followed
    by their augmented counterparts (2L entries); ``n_fg``/``n_bg`` cover the
    L fg/bg clips.
    """

    n_fg: torch.Tensor
    n_bg: torch.Tensor
    r_hat: torch.Tensor
    r: torch.Tensor
    f_n_fg: torch.Tensor
    f_hat_r: torch.Tensor
    f_r: torch.Tensor
    fps: float


def _conv_block(in_ch, out_ch, descriptive, epsilon):
    conv = (
        LDC3d(in_ch, out_ch, epsilon=epsilon)
        if descriptive
        else nn.Conv3d(in_ch, out_ch, 3, padding=1)
    )
    return nn.Sequential(conv, nn.InstanceNorm3d(out_ch, affine=True), nn.ReLU())


class FeatureExtractor(nn.Module):
    """One vanilla block, four vanilla blocks, four descriptive blocks."""

    def __init__(self, config: BranchConfig, in_channels: int = 3):
        super().__init__()
        c1, c2, c3, c4, c5 = config.widths
        eps = config.epsilon
        desc = config.descriptive
        self.block1 = _conv_block(in_channels, c1, False, eps)
        self.pool1 = nn.AvgPool3d((1, 2, 2))
        self.block2 = nn.ModuleList(
            [
                _conv_block(c1, c2, False, eps),
                _conv_block(c2, c2, False, eps),
                _conv_block(c2, c3, False, eps),
                _conv_block(c3, c3, False, eps),
            ]
        )
        self.pool2 = nn.AvgPool3d((1, 2, 2))
        self.block3 = nn.ModuleList(
            [
                _conv_block(c3, c4, desc, eps),
                _conv_block(c4, c4, desc, eps),
                _conv_block(c4, c5, desc, eps),
                _conv_block(c5, c5, desc, eps),
            ]
        )

    def forward(self, x):
        if x.ndim != 5:
            raise NetworkError("extractor expects (N, C, T, H, W)")
        x = self.pool1(self.block1(x))
        for i, blk in enumerate(self.block2):
            x = blk(x)
            if i == 1:
                x = self.pool2(x)
        for blk in self.block3:
            x = blk(x)
        return x


class SignalEstimator(nn.Module):
    """Two descriptive blocks, spatial averaging, per-frame projection."""

    def __init__(self, config: BranchConfig):
        super().__init__()
        c5 = config.widths[-1]
        self.blocks = nn.Sequential(
            _conv_block(c5, c5, config.descriptive, config.epsilon),
            _conv_block(c5, c5, config.descriptive, config.epsilon),
        )
        self.project = nn.Conv1d(c5, 1, kernel_size=1)

    def head(self, features):
        """Spatial global average then channel projection -> (N, T)."""
        if features.shape[-1] < 1 or features.shape[-2] < 1:
            raise NetworkError("degenerate spatial dims in estimator input")
        pooled = features.mean(dim=(-2, -1))
        return self.project(pooled).squeeze(1)

    def forward(self, features):
        return self.head(self.blocks(features))


def deinterfere(f_hat_r: torch.Tensor, f_n_fg: torch.Tensor) -> torch.Tensor:
    """Residual interference cancellation on the feature level."""
    if f_hat_r.shape != f_n_fg.shape:
        raise NetworkError("feature shapes must match for de-interference")
    return f_hat_r - f_n_fg


def clips_to_tensor(clip_list, device=None, dtype=torch.float32) -> torch.Tensor:
    """Stack (T, H, W, 3) numpy clips into an (N, 3, T, H, W) tensor."""
    arr = np.stack(clip_list).transpose(0, 4, 1, 2, 3)
    return torch.as_tensor(np.ascontiguousarray(arr), dtype=dtype, device=device)


class DDNet(nn.Module):
    """Interference branch (f_ext/sig_est _n) plus rPPG branch (_r)."""

    def __init__(self, config: BranchConfig = None):
        super().__init__()
        self.config = config or BranchConfig()
        self.extract_n = FeatureExtractor(self.config)
        self.estimate_n = SignalEstimator(self.config)
        self.extract_r = FeatureExtractor(self.config)
        self.estimate_r = SignalEstimator(self.config)

    def extract_features(self, x, branch: str):
        if branch == "interference":
            return self.extract_n(x)
        if branch == "rppg":
            return self.extract_r(x)
        raise NetworkError(f"unknown branch {branch!r}")

    def estimate_signal(self, features, branch: str):
        if branch == "interference":
            return self.estimate_n(features)
        if branch == "rppg":
            return self.estimate_r(features)
        raise NetworkError(f"unknown branch {branch!r}")

    def forward_all(self, clipset: ClipSet) -> ForwardBundle:
        device = next(self.parameters()).device
        dtype = next(self.parameters()).dtype
        fg = clips_to_tensor(clipset.fg_clips, device, dtype)
        bg = clips_to_tensor(clipset.bg_clips, device, dtype)
        aug = clips_to_tensor(clipset.aug_fg_clips, device, dtype)
        fg_all = torch.cat([fg, aug], dim=0)

        f_n_fg = self.extract_n(fg_all)
        n_fg = self.estimate_n(f_n_fg[: fg.shape[0]])
        n_bg = self.estimate_n(self.extract_n(bg))

        f_hat_r = self.extract_r(fg_all)
        r_hat = self.estimate_r(f_hat_r)
        f_r = deinterfere(f_hat_r, f_n_fg)
        r = self.estimate_r(f_r)

        return ForwardBundle(
            n_fg=n_fg,
            n_bg=n_bg,
            r_hat=r_hat,
            r=r,
            f_n_fg=f_n_fg,
            f_hat_r=f_hat_r,
            f_r=f_r,
            fps=clipset.fps,
        )
