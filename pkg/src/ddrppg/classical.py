"""Non-learning pulse extractors (POS and CHROM) used as oracles.

Both operate on the spatially averaged RGB trace of a clip, so their output
is exactly invariant to spatial rotations and flips of the input frames.
Clips are numpy arrays shaped (T, H, W, 3) with values in [0, 1].
"""

from __future__ import annotations

import numpy as np

from .signals import SignalError, SignalTrace


def rgb_mean_trace(clip: np.ndarray) -> np.ndarray:
    """Per-frame spatial mean of each color channel, shape (T, 3)."""
    clip = np.asarray(clip, dtype=np.float64)
    if clip.ndim != 4 or clip.shape[-1] != 3:
        raise SignalError("clip must be (T, H, W, 3) with 3 color channels")
    if clip.shape[0] < 2:
        raise SignalError("clip needs at least 2 frames")
    return clip.mean(axis=(1, 2))


def _pos(rgb: np.ndarray, fps: float) -> np.ndarray:
    # Wang et al. plane-orthogonal-to-skin projection with overlap-add.
    T = rgb.shape[0]
    win = max(2, int(1.6 * fps))
    h = np.zeros(T)
    proj = np.array([[0.0, 1.0, -1.0], [-2.0, 1.0, 1.0]])
    for t in range(0, T - win + 1):
        c = rgb[t : t + win].T
        mean_c = c.mean(axis=1)
        mean_c[mean_c == 0] = 1.0
        cn = c / mean_c[:, None]
        s = proj @ cn
        s0_std = s[0].std()
        s1_std = s[1].std()
        alpha = s0_std / s1_std if s1_std > 0 else 0.0
        p = s[0] + alpha * s[1]
        p_std = p.std()
        if p_std > 0:
            h[t : t + win] += (p - p.mean()) / p_std
    return h


def _chrom(rgb: np.ndarray, fps: float) -> np.ndarray:
    # de Haan & Jeanne chrominance projection on mean-normalized channels.
    mean_c = rgb.mean(axis=0)
    mean_c = np.where(mean_c == 0, 1.0, mean_c)
    rn, gn, bn = (rgb / mean_c).T
    x = 3.0 * rn - 2.0 * gn
    y = 1.5 * rn + gn - 1.5 * bn
    sx, sy = x.std(), y.std()
    alpha = sx / sy if sy > 0 else 0.0
    s = x - alpha * y
    return s - s.mean()


_METHODS = {"pos": _pos, "chrom": _chrom}


def classical_extract(clip: np.ndarray, fps: float, method: str = "pos") -> SignalTrace:
    """Extract a pulse trace from a clip with a classical algorithm."""
    if method not in _METHODS:
        raise SignalError(f"unknown classical method {method!r}")
    rgb = rgb_mean_trace(clip)
    pulse = _METHODS[method](rgb, fps)
    return SignalTrace(samples=pulse, fs=fps, kind="rppg")
