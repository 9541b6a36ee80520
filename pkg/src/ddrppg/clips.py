"""Region layout, clip sampling, and weak augmentation.

Foreground (facial) and background boxes are located per video, then L
fixed-size clips are drawn from random spatial-temporal positions; each
foreground clip gets a weakly augmented counterpart (right-angle rotation
or axis flip) that preserves the pulse content exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .videoio import read_boxes_csv

BG_GAP_PX = 4

AUG_OPS = ("rot90", "rot180", "rot270", "hflip", "vflip")


class LayoutError(ValueError):
    pass


class SamplingError(ValueError):
    pass


@dataclass(frozen=True)
class Box:
    x: int
    y: int
    w: int
    h: int

    def within(self, frame_h: int, frame_w: int) -> bool:
        return (
            self.x >= 0
            and self.y >= 0
            and self.x + self.w <= frame_w
            and self.y + self.h <= frame_h
        )


@dataclass
class RegionLayout:
    fg_box: Box
    bg_boxes: list

    def validate(self, frame_h: int, frame_w: int):
        if not self.fg_box.within(frame_h, frame_w):
            raise LayoutError("fg box outside frame bounds")
        for box in self.bg_boxes:
            if not box.within(frame_h, frame_w):
                raise LayoutError("bg box outside frame bounds")
            if (box.w, box.h) != (self.fg_box.w, self.fg_box.h):
                raise LayoutError("bg box size must equal fg box size")


@dataclass
class ClipSet:
    """Paired fg/bg clips plus augmented fg counterparts from one video."""

    fg_clips: list
    bg_clips: list
    aug_fg_clips: list
    aug_draws: list
    source_id: str
    seed: int
    fps: float

    def __post_init__(self):
        n = len(self.fg_clips)
        if not (len(self.bg_clips) == len(self.aug_fg_clips) == n):
            raise SamplingError("fg/bg/aug clip counts differ")
        shapes = {c.shape for c in self.fg_clips + self.bg_clips + self.aug_fg_clips}
        if len(shapes) > 1:
            raise SamplingError("clips have inconsistent shapes")


def locate_regions(video: np.ndarray, locator="fixed-center", sidecar=None) -> RegionLayout:
    """Build the fg box plus left/right bg boxes of equal size."""
    frame_h, frame_w = video.shape[1], video.shape[2]
    if locator == "sidecar-file":
        if sidecar is None:
            raise LayoutError("sidecar locator needs a box file")
        _, x, y, w, h = read_boxes_csv(sidecar)[0]
        fg = Box(x, y, w, h)
    elif locator == "fixed-center":
        w = (frame_w - 2 * BG_GAP_PX) // 3
        h = frame_h // 2
        fg = Box((frame_w - w) // 2, (frame_h - h) // 2, w, h)
    else:
        raise LayoutError(f"unknown locator {locator!r}")

    left = Box(fg.x - BG_GAP_PX - fg.w, fg.y, fg.w, fg.h)
    right = Box(fg.x + fg.w + BG_GAP_PX, fg.y, fg.w, fg.h)
    if left.x < 0 or right.x + right.w > frame_w:
        raise LayoutError("fg box leaves no room for a bg box of equal size")
    layout = RegionLayout(fg_box=fg, bg_boxes=[left, right])
    layout.validate(frame_h, frame_w)
    return layout


def augment_weak(clip: np.ndarray, seed: int, draw=None) -> np.ndarray:
    """Apply one uniformly drawn right-angle rotation or flip to every frame."""
    if draw is None:
        rng = np.random.default_rng(seed)
        draw = AUG_OPS[rng.integers(0, len(AUG_OPS))]
    if draw not in AUG_OPS:
        raise SamplingError(f"unknown augmentation draw {draw!r}")
    if draw.startswith("rot") and clip.shape[1] != clip.shape[2]:
        raise SamplingError("rotations need square spatial dims")
    if draw == "rot90":
        return np.rot90(clip, 1, axes=(1, 2)).copy()
    if draw == "rot180":
        return np.rot90(clip, 2, axes=(1, 2)).copy()
    if draw == "rot270":
        return np.rot90(clip, 3, axes=(1, 2)).copy()
    if draw == "hflip":
        return clip[:, :, ::-1].copy()
    return clip[:, ::-1, :].copy()


def sample_clips(
    video: np.ndarray,
    layout: RegionLayout,
    L: int = 4,
    dt: int = 150,
    h: int = 64,
    w: int = 64,
    seed: int = 0,
    fps: float = 30.0,
    source_id: str = "",
) -> ClipSet:
    """Draw L fg and L bg sub-clips at random positions, plus augmented fg."""
    T = video.shape[0]
    if dt > T:
        raise SamplingError(f"clip length {dt} exceeds video length {T}")
    fg = layout.fg_box
    if h > fg.h or w > fg.w:
        raise SamplingError("clip spatial size exceeds region box")
    rng = np.random.default_rng(seed)
    fg_clips, bg_clips, aug_clips, draws = [], [], [], []
    for _ in range(L):
        t0 = int(rng.integers(0, T - dt + 1))
        y0 = int(rng.integers(0, fg.h - h + 1))
        x0 = int(rng.integers(0, fg.w - w + 1))
        fg_clip = video[t0 : t0 + dt, fg.y + y0 : fg.y + y0 + h, fg.x + x0 : fg.x + x0 + w]
        # Same time window as the fg clip: interference is shared between
        # regions instant-by-instant, so the pair must be aligned in time.
        bg = layout.bg_boxes[int(rng.integers(0, len(layout.bg_boxes)))]
        yb = int(rng.integers(0, bg.h - h + 1))
        xb = int(rng.integers(0, bg.w - w + 1))
        bg_clip = video[t0 : t0 + dt, bg.y + yb : bg.y + yb + h, bg.x + xb : bg.x + xb + w]
        draw = AUG_OPS[int(rng.integers(0, len(AUG_OPS)))]
        fg_clips.append(np.ascontiguousarray(fg_clip))
        bg_clips.append(np.ascontiguousarray(bg_clip))
        aug_clips.append(augment_weak(fg_clip, seed=0, draw=draw))
        draws.append(draw)
    return ClipSet(
        fg_clips=fg_clips,
        bg_clips=bg_clips,
        aug_fg_clips=aug_clips,
        aug_draws=draws,
        source_id=source_id,
        seed=seed,
        fps=fps,
    )
