import numpy as np
import pytest

from ddrppg.classical import classical_extract, rgb_mean_trace
from ddrppg.clips import augment_weak
from ddrppg.signals import HR_BAND_HZ, SignalError, estimate_hr, psd


def skin_clip_with_pulse(hr_bpm=72.0, fps=30.0, n=300, hw=32, amp=0.02, seed=0):
    rng = np.random.default_rng(seed)
    base = np.clip(rng.uniform(0.4, 0.6, (hw, hw, 3)), 0, 1)
    t = np.arange(n) / fps
    pulse = amp * np.sin(2 * np.pi * hr_bpm / 60.0 * t)
    mix = np.array([0.35, 1.0, 0.55])
    clip = np.broadcast_to(base, (n, hw, hw, 3)).copy()
    clip += pulse[:, None, None, None] * mix
    return np.clip(clip, 0, 1)


@pytest.mark.parametrize("method", ["pos", "chrom"])
class TestClassicalExtract:
    def test_constant_clip_zero_variance(self, method):
        clip = np.full((60, 8, 8, 3), 0.5)
        trace = classical_extract(clip, fps=30.0, method=method)
        assert np.allclose(trace.samples, trace.samples[0])

    def test_recovers_injected_hr(self, method):
        fps, n = 30.0, 300
        clip = skin_clip_with_pulse(hr_bpm=72.0, fps=fps, n=n)
        trace = classical_extract(clip, fps=fps, method=method)
        hr = estimate_hr(psd(trace, HR_BAND_HZ))
        bin_bpm = 60.0 * fps / n
        assert abs(hr - 72.0) <= bin_bpm

    def test_augmentation_invariance(self, method):
        clip = skin_clip_with_pulse(seed=3)
        hr0 = estimate_hr(psd(classical_extract(clip, 30.0, method)))
        for draw in ("rot90", "rot180", "rot270", "hflip", "vflip"):
            aug = augment_weak(clip, seed=0, draw=draw)
            hr1 = estimate_hr(psd(classical_extract(aug, 30.0, method)))
            assert hr1 == hr0

    def test_deterministic(self, method):
        clip = skin_clip_with_pulse(seed=9)
        t1 = classical_extract(clip, 30.0, method)
        t2 = classical_extract(clip, 30.0, method)
        np.testing.assert_array_equal(t1.samples, t2.samples)


def test_single_channel_rejected():
    with pytest.raises(SignalError):
        classical_extract(np.zeros((10, 8, 8, 1)), fps=30.0)


def test_unknown_method_rejected():
    with pytest.raises(SignalError):
        classical_extract(np.zeros((10, 8, 8, 3)), fps=30.0, method="ica")


def test_rgb_mean_trace_shape():
    clip = np.zeros((20, 4, 6, 3))
    assert rgb_mean_trace(clip).shape == (20, 3)
