"""Direct-loop reference implementations of the convolution variants.

Literal per-pixel sums over the 3x3(x3) neighborhood with zero padding,
written for clarity, not speed.  These are the oracles the fast paths in
:mod:`ddrppg.ldc` are checked against; keep them free of any vectorized
convolution so the two routes stay independent.
"""

from __future__ import annotations

import numpy as np


def _sample(f, c, t, y, x):
    T, H, W = f.shape[1], f.shape[2], f.shape[3]
    if 0 <= t < T and 0 <= y < H and 0 <= x < W:
        return f[c, t, y, x]
    return 0.0


def conv3d_loop(f: np.ndarray, w: np.ndarray) -> np.ndarray:
    """f: (C_in, T, H, W); w: (C_out, C_in, 3, 3, 3) -> (C_out, T, H, W)."""
    c_out, c_in = w.shape[0], w.shape[1]
    T, H, W = f.shape[1], f.shape[2], f.shape[3]
    out = np.zeros((c_out, T, H, W))
    for o in range(c_out):
        for t in range(T):
            for y in range(H):
                for x in range(W):
                    acc = 0.0
                    for c in range(c_in):
                        for dt in (-1, 0, 1):
                            for dy in (-1, 0, 1):
                                for dx in (-1, 0, 1):
                                    acc += w[o, c, dt + 1, dy + 1, dx + 1] * _sample(
                                        f, c, t + dt, y + dy, x + dx
                                    )
                    out[o, t, y, x] = acc
    return out


def _sample2d(f, c, y, x):
    H, W = f.shape[1], f.shape[2]
    if 0 <= y < H and 0 <= x < W:
        return f[c, y, x]
    return 0.0


def ldc2d_loop(f: np.ndarray, w: np.ndarray, m: np.ndarray, epsilon: float) -> np.ndarray:
    """f: (C_in, H, W); w, m: (C_out, C_in, 3, 3) -> (C_out, H, W)."""
    m = np.broadcast_to(m, w.shape)
    c_out, c_in = w.shape[0], w.shape[1]
    H, W = f.shape[1], f.shape[2]
    out = np.zeros((c_out, H, W))
    for o in range(c_out):
        for y in range(H):
            for x in range(W):
                vanilla = 0.0
                descriptive = 0.0
                for c in range(c_in):
                    for dy in (-1, 0, 1):
                        for dx in (-1, 0, 1):
                            v = _sample2d(f, c, y + dy, x + dx)
                            vanilla += w[o, c, dy + 1, dx + 1] * v
                            descriptive += w[o, c, dy + 1, dx + 1] * (
                                v * m[o, c, dy + 1, dx + 1]
                            )
                out[o, y, x] = (1 - epsilon) * vanilla + epsilon * descriptive
    return out


def tdc_loop(f: np.ndarray, w: np.ndarray, theta: float) -> np.ndarray:
    """Temporal difference convolution, literal neighbor-minus-center form."""
    c_out, c_in = w.shape[0], w.shape[1]
    T, H, W = f.shape[1], f.shape[2], f.shape[3]
    out = np.zeros((c_out, T, H, W))
    for o in range(c_out):
        for t in range(T):
            for y in range(H):
                for x in range(W):
                    acc = 0.0
                    for c in range(c_in):
                        center = f[c, t, y, x]
                        for dt in (-1, 1):
                            for dy in (-1, 0, 1):
                                for dx in (-1, 0, 1):
                                    acc += w[o, c, dt + 1, dy + 1, dx + 1] * (
                                        _sample(f, c, t + dt, y + dy, x + dx)
                                        - theta * center
                                    )
                        for dy in (-1, 0, 1):
                            for dx in (-1, 0, 1):
                                acc += w[o, c, 1, dy + 1, dx + 1] * _sample(
                                    f, c, t, y + dy, x + dx
                                )
                    out[o, t, y, x] = acc
    return out


def ldc3d_loop(f: np.ndarray, w: np.ndarray, m: np.ndarray, epsilon: float) -> np.ndarray:
    """3D LDC, literal two-term sum over the 3x3x3 neighborhood."""
    m = np.broadcast_to(m, w.shape)
    c_out, c_in = w.shape[0], w.shape[1]
    T, H, W = f.shape[1], f.shape[2], f.shape[3]
    out = np.zeros((c_out, T, H, W))
    for o in range(c_out):
        for t in range(T):
            for y in range(H):
                for x in range(W):
                    vanilla = 0.0
                    descriptive = 0.0
                    for c in range(c_in):
                        for dt in (-1, 0, 1):
                            for dy in (-1, 0, 1):
                                for dx in (-1, 0, 1):
                                    v = _sample(f, c, t + dt, y + dy, x + dx)
                                    wk = w[o, c, dt + 1, dy + 1, dx + 1]
                                    vanilla += wk * v
                                    descriptive += wk * v * m[o, c, dt + 1, dy + 1, dx + 1]
                    out[o, t, y, x] = (1 - epsilon) * vanilla + epsilon * descriptive
    return out
