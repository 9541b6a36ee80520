"""Synthetic video benchmark with known ground-truth pulse and interference.

Every video follows the additive model: foreground pixels carry
base + interference * profile + pulse * channel mix, background pixels carry
base + interference * profile only.  All components are emitted alongside the
rendered frames, so recovery claims can be checked exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .clips import BG_GAP_PX, Box, RegionLayout
from .signals import HR_RANGE_BPM, SignalTrace
from .videoio import save_raw_video, write_boxes_csv


class SynthError(ValueError):
    pass


INTERFERENCE_KINDS = (
    "periodic_flicker",
    "illumination_drift",
    "blockiness",
    "translation_motion",
    "expression_warp",
)

# Pulse enters the color channels unevenly, strongest in green, to give
# classical extractors realistic chrominance structure.
PULSE_CHANNEL_MIX = np.array([0.35, 1.0, 0.55])


@dataclass
class PulseSpec:
    hr_bpm: float = 72.0
    amplitude: float = 0.01
    harmonic_ratio: float = 0.3
    phase: float = 0.0


@dataclass
class InterferenceSpec:
    kind: str = "periodic_flicker"
    freq_hz: float = 0.9
    amplitude: float = 0.008
    profile: str = "uniform"  # or "gradient"
    applies_to: str = "both"  # fg | bg | both
    channel_mix: tuple = (1.0, 1.0, 1.0)  # per-channel scaling (chromatic light)


@dataclass
class SceneSpec:
    frame_hw: tuple = (64, 64)
    fps: float = 20.0
    duration_s: float = 12.0
    pulse: PulseSpec = field(default_factory=PulseSpec)
    interference: list = field(default_factory=list)
    seed: int = 0

    @property
    def n_frames(self) -> int:
        return int(round(self.duration_s * self.fps))


@dataclass
class RenderResult:
    video: np.ndarray
    fps: float
    layout: RegionLayout
    r: SignalTrace
    n_fg: SignalTrace
    n_bg: SignalTrace
    expected_fg_mean: np.ndarray
    expected_bg_means: list
    clip_fraction: float
    hr_bpm: float


def make_pulse(spec: PulseSpec, n_samples: int, fps: float) -> SignalTrace:
    """Fundamental plus optional second harmonic at the configured HR."""
    if not (HR_RANGE_BPM[0] <= spec.hr_bpm <= HR_RANGE_BPM[1]):
        raise SynthError(f"hr {spec.hr_bpm} bpm outside {HR_RANGE_BPM}")
    f = spec.hr_bpm / 60.0
    t = np.arange(n_samples) / fps
    x = spec.amplitude * (
        np.sin(2 * np.pi * f * t + spec.phase)
        + spec.harmonic_ratio * np.sin(4 * np.pi * f * t + 2 * spec.phase)
    )
    return SignalTrace(samples=x, fs=fps, kind="rppg")


def make_interference(spec: InterferenceSpec, n_samples: int, fps: float, seed: int = 0) -> SignalTrace:
    """Temporal interference signal for one spec; deterministic per seed."""
    if spec.kind not in INTERFERENCE_KINDS:
        raise SynthError(f"unknown interference kind {spec.kind!r}")
    t = np.arange(n_samples) / fps
    rng = np.random.default_rng(seed)
    if spec.kind == "periodic_flicker":
        x = np.sin(2 * np.pi * spec.freq_hz * t + rng.uniform(0, 2 * np.pi))
    elif spec.kind == "blockiness":
        # Square-wave cadence: the additive proxy for tile re-quantization.
        x = np.sign(np.sin(2 * np.pi * spec.freq_hz * t + 1e-9))
    elif spec.kind == "translation_motion":
        x = np.sin(2 * np.pi * spec.freq_hz * t + rng.uniform(0, 2 * np.pi))
    elif spec.kind in ("illumination_drift", "expression_warp"):
        freqs = np.array([0.05, 0.1, 0.15, 0.2, 0.25])
        amps = rng.uniform(0.5, 1.0, freqs.size)
        phases = rng.uniform(0, 2 * np.pi, freqs.size)
        x = sum(a * np.sin(2 * np.pi * f * t + p) for a, f, p in zip(amps, freqs, phases))
        x = x / np.max(np.abs(x))
    sig = spec.amplitude * x
    return SignalTrace(samples=sig, fs=fps, kind="interference")


def _gradient_ramp(H: int, W: int) -> np.ndarray:
    # Asymmetric left-to-right ramp: opposite signs over the flanking
    # background regions, nonzero mean over a centered foreground box.
    return np.broadcast_to(np.linspace(1.0, -0.5, W), (H, W)).copy()


def _spatial_profile(spec: InterferenceSpec, base: np.ndarray, seed: int) -> np.ndarray:
    """Per-pixel scalar weighting of an interference signal."""
    H, W = base.shape[:2]
    lum = base.mean(axis=2)
    if spec.kind == "blockiness":
        # Per-8x8-tile quantization residual of the base luminance.
        tiles = np.zeros((H, W))
        for y0 in range(0, H, 8):
            for x0 in range(0, W, 8):
                mean = lum[y0 : y0 + 8, x0 : x0 + 8].mean()
                tiles[y0 : y0 + 8, x0 : x0 + 8] = np.round(mean * 8) / 8 - mean
        prof = tiles / max(np.max(np.abs(tiles)), 1e-6)
    elif spec.kind == "translation_motion":
        gx = np.gradient(lum, axis=1)
        prof = gx / max(np.max(np.abs(gx)), 1e-6)
    elif spec.kind == "expression_warp":
        yy, xx = np.mgrid[0:H, 0:W]
        prof = np.exp(-(((yy - H / 2) ** 2 + (xx - W / 2) ** 2) / (2 * (H / 4) ** 2)))
    else:
        prof = np.ones((H, W))
    if spec.profile == "gradient":
        prof = prof * _gradient_ramp(H, W)
    elif spec.profile != "uniform":
        raise SynthError(f"unknown spatial profile {spec.profile!r}")
    return prof


def _make_base(H: int, W: int, rng) -> np.ndarray:
    """Smooth random skin-tone-ish base image in [0.3, 0.7]."""
    coarse = rng.uniform(-1.0, 1.0, (H // 8 + 2, W // 8 + 2, 3))
    ys = np.linspace(0, coarse.shape[0] - 1.001, H)
    xs = np.linspace(0, coarse.shape[1] - 1.001, W)
    yi, xi = np.floor(ys).astype(int), np.floor(xs).astype(int)
    fy, fx = (ys - yi)[:, None, None], (xs - xi)[None, :, None]
    smooth = (
        coarse[yi][:, xi] * (1 - fy) * (1 - fx)
        + coarse[yi + 1][:, xi] * fy * (1 - fx)
        + coarse[yi][:, xi + 1] * (1 - fy) * fx
        + coarse[yi + 1][:, xi + 1] * fy * fx
    )
    tone = np.array([0.55, 0.47, 0.42])
    return np.clip(tone[None, None, :] + 0.08 * smooth, 0.3, 0.7)


def scene_layout(scene: SceneSpec) -> RegionLayout:
    H, W = scene.frame_hw
    w = (W - 2 * BG_GAP_PX) // 3
    h = H // 2
    fg = Box((W - w) // 2, (H - h) // 2, w, h)
    left = Box(fg.x - BG_GAP_PX - fg.w, fg.y, fg.w, fg.h)
    right = Box(fg.x + fg.w + BG_GAP_PX, fg.y, fg.w, fg.h)
    return RegionLayout(fg_box=fg, bg_boxes=[left, right])


def _box_mask(box: Box, H: int, W: int) -> np.ndarray:
    mask = np.zeros((H, W), dtype=bool)
    mask[box.y : box.y + box.h, box.x : box.x + box.w] = True
    return mask


def render_video(scene: SceneSpec) -> RenderResult:
    """Render a scene and emit the exact injected components alongside."""
    H, W = scene.frame_hw
    T = scene.n_frames
    rng = np.random.default_rng(scene.seed)
    base = _make_base(H, W, rng)
    layout = scene_layout(scene)
    fg_mask = _box_mask(layout.fg_box, H, W)

    pulse = make_pulse(scene.pulse, T, scene.fps)
    video = np.broadcast_to(base, (T, H, W, 3)).astype(np.float64).copy()
    video[:, fg_mask, :] += pulse.samples[:, None, None] * PULSE_CHANNEL_MIX

    fg_sum = np.zeros(T)
    bg_sum = np.zeros(T)
    bg_sums = [np.zeros(T) for _ in layout.bg_boxes]
    for idx, ispec in enumerate(scene.interference):
        sig = make_interference(ispec, T, scene.fps, seed=scene.seed * 1000 + idx)
        prof = _spatial_profile(ispec, base, seed=scene.seed * 1000 + idx)
        region = np.ones((H, W), dtype=bool)
        if ispec.applies_to == "fg":
            region = fg_mask
        elif ispec.applies_to == "bg":
            region = ~fg_mask
        elif ispec.applies_to != "both":
            raise SynthError(f"unknown applies_to {ispec.applies_to!r}")
        masked_prof = prof * region
        mix = np.asarray(ispec.channel_mix, dtype=float)
        if mix.shape != (3,):
            raise SynthError("channel_mix must have three entries")
        video += (
            sig.samples[:, None, None, None]
            * masked_prof[None, :, :, None]
            * mix[None, None, None, :]
        )
        if ispec.applies_to in ("fg", "both"):
            fg_sum += sig.samples * masked_prof[fg_mask].mean() * mix.mean()
        if ispec.applies_to in ("bg", "both"):
            for b, box in enumerate(layout.bg_boxes):
                bg_sums[b] += sig.samples * masked_prof[_box_mask(box, H, W)].mean() * mix.mean()
            bg_sum += sig.samples * mix.mean()

    clipped = np.clip(video, 0.0, 1.0)
    clip_fraction = float(np.mean(clipped != video))
    if clip_fraction > 0.10:
        raise SynthError(f"clipping fraction {clip_fraction:.1%} exceeds 10%")

    expected_fg = (
        base[fg_mask].mean() + fg_sum + pulse.samples * PULSE_CHANNEL_MIX.mean()
    )
    expected_bg = [
        base[_box_mask(box, H, W)].mean() + bg_sums[b]
        for b, box in enumerate(layout.bg_boxes)
    ]

    def _trace(x, kind):
        return SignalTrace(samples=x, fs=scene.fps, kind=kind)

    return RenderResult(
        video=clipped,
        fps=scene.fps,
        layout=layout,
        r=pulse,
        n_fg=_trace(fg_sum, "interference") if np.any(fg_sum) else _trace(np.zeros(T) + 0.0, "raw"),
        n_bg=_trace(bg_sum, "interference") if np.any(bg_sum) else _trace(np.zeros(T) + 0.0, "raw"),
        expected_fg_mean=expected_fg,
        expected_bg_means=expected_bg,
        clip_fraction=clip_fraction,
        hr_bpm=scene.pulse.hr_bpm,
    )


PROTOCOL_INTERFERENCE = {
    "P1": [InterferenceSpec(kind="translation_motion", freq_hz=0.35, amplitude=0.006)],
    "P2": [InterferenceSpec(kind="expression_warp", amplitude=0.008)],
    "P3": [InterferenceSpec(kind="blockiness", freq_hz=2.0, amplitude=0.006)],
    # Green-tinted lamp flicker: its chroma direction sits close to the
    # pulse's, so chrominance-projection extractors cannot reject it.
    "P4": [
        InterferenceSpec(
            kind="periodic_flicker",
            freq_hz=1.05,
            amplitude=0.1,
            profile="gradient",
            channel_mix=(0.1, 2.6, 0.3),
        )
    ],
    "P5": [InterferenceSpec(kind="periodic_flicker", freq_hz=0.9, amplitude=0.012)],
}


def make_protocol(
    pid: str,
    n_videos: int,
    seed: int,
    out_dir,
    frame_hw=(64, 64),
    fps: float = 20.0,
    duration_s: float = 12.0,
    hr_range=(66.0, 90.0),
    pulse_amplitude: float = 0.01,
) -> Path:
    """Generate an interference-suite dataset directory."""
    if pid not in PROTOCOL_INTERFERENCE:
        raise SynthError(f"unknown protocol {pid!r}")
    out_dir = Path(out_dir)
    for sub in ("videos", "boxes", "truth"):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)
    root_seq = np.random.SeedSequence(seed)
    manifest = {"protocol": pid, "seed": seed, "fps": fps, "version": 1, "videos": []}
    for i in range(n_videos):
        vid_seed = int(root_seq.spawn(1)[0].generate_state(1)[0] % (2**31))
        rng = np.random.default_rng(vid_seed)
        hr = float(rng.uniform(*hr_range))
        scene = SceneSpec(
            frame_hw=tuple(frame_hw),
            fps=fps,
            duration_s=duration_s,
            pulse=PulseSpec(hr_bpm=hr, amplitude=pulse_amplitude),
            interference=[InterferenceSpec(**asdict(s)) for s in PROTOCOL_INTERFERENCE[pid]],
            seed=vid_seed,
        )
        result = render_video(scene)
        name = f"vid{i:03d}"
        save_raw_video(out_dir / "videos" / f"{name}.raw", result.video, fps)
        fg = result.layout.fg_box
        write_boxes_csv(out_dir / "boxes" / f"{name}.boxes.csv", [(0, fg.x, fg.y, fg.w, fg.h)])
        _write_truth(out_dir / "truth" / f"{name}.csv", result)
        manifest["videos"].append(
            {
                "name": name,
                "seed": vid_seed,
                "hr_bpm": hr,
                "scene": {
                    "frame_hw": list(scene.frame_hw),
                    "duration_s": duration_s,
                    "pulse": asdict(scene.pulse),
                    "interference": [asdict(s) for s in scene.interference],
                },
            }
        )
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return out_dir


def _write_truth(path, result: RenderResult):
    T = len(result.r)
    with open(path, "w") as fh:
        fh.write("t,r,n_fg,n_bg,hr_bpm\n")
        for i in range(T):
            fh.write(
                f"{float(i / result.fps)!r},{float(result.r.samples[i])!r},"
                f"{float(result.n_fg.samples[i])!r},{float(result.n_bg.samples[i])!r},"
                f"{float(result.hr_bpm)!r}\n"
            )


def read_truth(path):
    """Load a truth CSV back into arrays: t, r, n_fg, n_bg, hr_bpm."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    return (
        data["t"],
        data["r"],
        data["n_fg"],
        data["n_bg"],
        float(data["hr_bpm"][0]),
    )
