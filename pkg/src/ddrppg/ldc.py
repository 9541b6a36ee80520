"""Learnable descriptive convolutions: 2D LDC, temporal difference
convolution (TDC), and 3D LDC, plus the descriptor that reproduces TDC as a
special case of 3D LDC.

Fast paths are expressed as compositions of cuDNN-style convolutions so
autograd supplies exact gradients; :mod:`ddrppg.ldc_reference` holds the
direct-loop oracles the fast paths are tested against.

Tensor layout is (N, C, T, H, W) for 3-D inputs and (N, C, H, W) for 2-D;
all kernels are 3x3(x3), stride 1, zero padding 1 in every dim.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn


class ConvConfigError(ValueError):
    pass


def _check_unit(name, value):
    scalar = float(value.detach()) if isinstance(value, torch.Tensor) else float(value)
    if not (0.0 <= scalar <= 1.0):
        raise ConvConfigError(f"{name} must lie in [0, 1], got {value}")


def conv3d_vanilla(f: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
    """Standard 3-D cross-correlation with padding 1, stride 1."""
    if f.ndim != 5 or w.ndim != 5:
        raise ConvConfigError("conv3d expects (N,C,T,H,W) input and 5-D kernel")
    if f.shape[1] != w.shape[1]:
        raise ConvConfigError(
            f"channel mismatch: input {f.shape[1]} vs kernel {w.shape[1]}"
        )
    return F.conv3d(f, w, padding=1)


def ldc2d_forward(f: torch.Tensor, w: torch.Tensor, m: torch.Tensor, epsilon: float) -> torch.Tensor:
    """(1-eps) * vanilla 2-D conv + eps * conv with the descriptor folded in.

    The descriptive term multiplies each neighborhood sample by m before the
    kernel weight, which is identical to convolving with w*m.
    """
    _check_unit("epsilon", epsilon)
    if f.ndim != 4 or w.ndim != 4:
        raise ConvConfigError("ldc2d expects (N,C,H,W) input and 4-D kernel")
    vanilla = F.conv2d(f, w, padding=1)
    descriptive = F.conv2d(f, w * m, padding=1)
    return (1.0 - epsilon) * vanilla + epsilon * descriptive


def _tdc_center_kernel(w: torch.Tensor) -> torch.Tensor:
    """Kernel with only the center tap set to the summed side-slice weights."""
    side_sum = w[:, :, 0].sum(dim=(-2, -1)) + w[:, :, 2].sum(dim=(-2, -1))
    center = torch.zeros_like(w)
    center[:, :, 1, 1, 1] = side_sum
    return center


def tdc_forward(f: torch.Tensor, w: torch.Tensor, theta: float) -> torch.Tensor:
    """Temporal difference convolution.

    Neighbor temporal slices contribute (f - theta * f(center)) terms; the
    center slice convolves plainly.  Collapsing the theta term gives
    conv(f, w) - theta * conv(f, center-tap kernel of side-slice sums).
    """
    _check_unit("theta", theta)
    out = conv3d_vanilla(f, w)
    if theta == 0.0:
        return out
    return out - theta * F.conv3d(f, _tdc_center_kernel(w), padding=1)


def ldc3d_forward(f: torch.Tensor, w: torch.Tensor, m: torch.Tensor, epsilon: float) -> torch.Tensor:
    """(1-eps) * vanilla 3-D conv + eps * conv with descriptor m folded in.

    m broadcasts against w: shape (out, in, 3, 3, 3) or (out, 1, 3, 3, 3)
    for a per-filter descriptor shared across input channels.
    """
    _check_unit("epsilon", epsilon)
    vanilla = conv3d_vanilla(f, w)
    descriptive = F.conv3d(f, w * m, padding=1)
    return (1.0 - epsilon) * vanilla + epsilon * descriptive


def tdc_descriptor(w: torch.Tensor) -> torch.Tensor:
    """Descriptor m that turns 3D LDC into TDC with theta = epsilon.

    All-ones base plus an offset at the center of the middle slice equal to
    -(sum of both side-slice weights) / center weight; side slices carry a
    zero offset.  Requires a nonzero center weight.
    """
    center = w[:, :, 1, 1, 1]
    if torch.any(center == 0):
        raise ConvConfigError("tdc_descriptor undefined for zero center weight")
    side_sum = w[:, :, 0].sum(dim=(-2, -1)) + w[:, :, 2].sum(dim=(-2, -1))
    w_s = -side_sum / center
    m = torch.ones_like(w)
    m[:, :, 1, 1, 1] = 1.0 + w_s
    return m


class LDC3d(nn.Module):
    """3x3x3 descriptive convolution layer with a per-filter descriptor.

    The descriptor initializes to all-ones, so an untrained layer behaves
    exactly like vanilla 3-D convolution regardless of epsilon.
    """

    def __init__(self, in_channels: int, out_channels: int, epsilon: float = 0.7, bias: bool = True):
        super().__init__()
        _check_unit("epsilon", epsilon)
        self.epsilon = float(epsilon)
        ref = nn.Conv3d(in_channels, out_channels, 3, padding=1, bias=bias)
        self.weight = nn.Parameter(ref.weight.detach().clone())
        self.bias = nn.Parameter(ref.bias.detach().clone()) if bias else None
        self.descriptor = nn.Parameter(torch.ones(out_channels, 1, 3, 3, 3))

    def forward(self, f):
        out = ldc3d_forward(f, self.weight, self.descriptor, self.epsilon)
        if self.bias is not None:
            out = out + self.bias.view(1, -1, 1, 1, 1)
        return out
