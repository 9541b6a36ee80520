import numpy as np
import pytest

from ddrppg.classical import classical_extract
from ddrppg.signals import estimate_hr, psd
from ddrppg.synth import (
    PROTOCOL_INTERFERENCE,
    InterferenceSpec,
    PulseSpec,
    SceneSpec,
    SynthError,
    make_interference,
    make_protocol,
    make_pulse,
    read_truth,
    render_video,
    scene_layout,
)

FPS = 20.0


def region_mean(video, box):
    return video[:, box.y : box.y + box.h, box.x : box.x + box.w, :].mean(axis=(1, 2, 3))


def centered_nc(a, b):
    da = np.asarray(a) - np.mean(a)
    db = np.asarray(b) - np.mean(b)
    return float(np.dot(da, db) / (np.linalg.norm(da) * np.linalg.norm(db)))


class TestMakePulse:
    def test_hr_recovered_exactly_on_aligned_bin(self):
        # 30 s at 20 fps -> 2 bpm bins; 72 bpm sits on a bin
        trace = make_pulse(PulseSpec(hr_bpm=72.0), n_samples=600, fps=FPS)
        assert estimate_hr(psd(trace)) == pytest.approx(72.0, abs=1e-9)

    def test_pure_tone_power_concentration(self):
        trace = make_pulse(PulseSpec(hr_bpm=72.0, harmonic_ratio=0.0), 600, FPS)
        in_band = psd(trace, (1.15, 1.25)).power.sum()
        total = psd(trace, (1e-6, FPS / 2)).power.sum()
        assert in_band / total > 0.99

    def test_nearby_rates_resolve_with_enough_duration(self):
        # 60 s of samples -> 1 bpm bins, so 60 vs 61 bpm land in distinct bins
        a = make_pulse(PulseSpec(hr_bpm=60.0, harmonic_ratio=0.0), 1200, FPS)
        b = make_pulse(PulseSpec(hr_bpm=61.0, harmonic_ratio=0.0), 1200, FPS)
        assert estimate_hr(psd(a)) == pytest.approx(60.0, abs=1e-9)
        assert estimate_hr(psd(b)) == pytest.approx(61.0, abs=1e-9)

    @pytest.mark.parametrize("hr", [39.0, 251.0, 0.0])
    def test_out_of_range_hr_rejected(self, hr):
        with pytest.raises(SynthError):
            make_pulse(PulseSpec(hr_bpm=hr), 100, FPS)


class TestMakeInterference:
    def test_flicker_peak_frequency(self):
        spec = InterferenceSpec(kind="periodic_flicker", freq_hz=0.9)
        trace = make_interference(spec, 600, FPS, seed=1)
        assert estimate_hr(psd(trace)) == pytest.approx(54.0, abs=1e-9)

    @pytest.mark.parametrize("seed", range(20))
    def test_drift_is_low_pass(self, seed):
        spec = InterferenceSpec(kind="illumination_drift")
        trace = make_interference(spec, 600, FPS, seed=seed)
        low = psd(trace, (1e-6, 0.3)).power.sum()
        total = psd(trace, (1e-6, FPS / 2)).power.sum()
        assert low / total > 0.90

    @pytest.mark.parametrize("kind", ["periodic_flicker", "illumination_drift", "blockiness"])
    def test_seed_determinism(self, kind):
        spec = InterferenceSpec(kind=kind, freq_hz=1.3)
        a = make_interference(spec, 200, FPS, seed=4)
        b = make_interference(spec, 200, FPS, seed=4)
        np.testing.assert_array_equal(a.samples, b.samples)

    def test_unknown_kind_rejected(self):
        with pytest.raises(SynthError):
            make_interference(InterferenceSpec(kind="jitter"), 100, FPS)


class TestSceneLayout:
    def test_boxes_fit_and_match(self):
        layout = scene_layout(SceneSpec(frame_hw=(64, 64)))
        fg = layout.fg_box
        left, right = layout.bg_boxes
        assert (left.w, left.h) == (fg.w, fg.h) == (right.w, right.h)
        assert left.x >= 0 and right.x + right.w <= 64
        assert fg.x - (left.x + left.w) == 4
        assert right.x - (fg.x + fg.w) == 4


class TestRenderVideo:
    def _scene(self, interference, seed=0, duration=12.0, hr=72.0, amp=0.01):
        return SceneSpec(
            frame_hw=(64, 64),
            fps=FPS,
            duration_s=duration,
            pulse=PulseSpec(hr_bpm=hr, amplitude=amp),
            interference=interference,
            seed=seed,
        )

    def test_region_means_match_emitted_expectations(self):
        specs = [
            InterferenceSpec(kind="periodic_flicker", freq_hz=0.9, amplitude=0.008),
            InterferenceSpec(kind="illumination_drift", amplitude=0.006, profile="gradient"),
        ]
        result = render_video(self._scene(specs, seed=3))
        np.testing.assert_allclose(
            region_mean(result.video, result.layout.fg_box),
            result.expected_fg_mean,
            atol=1e-6,
        )
        for box, expected in zip(result.layout.bg_boxes, result.expected_bg_means):
            np.testing.assert_allclose(region_mean(result.video, box), expected, atol=1e-6)

    def test_zero_interference_fg_minus_bg_is_pulse(self):
        result = render_video(self._scene([], seed=5))
        diff = region_mean(result.video, result.layout.fg_box) - region_mean(
            result.video, result.layout.bg_boxes[0]
        )
        assert centered_nc(diff, result.r.samples) > 0.999

    def test_shared_interference_visible_in_background(self):
        specs = [InterferenceSpec(kind="periodic_flicker", freq_hz=0.9, amplitude=0.01)]
        result = render_video(self._scene(specs, seed=7))
        bg = region_mean(result.video, result.layout.bg_boxes[0])
        assert centered_nc(bg, result.n_bg.samples) > 0.99

    def test_opposing_gradient_profiles_anticorrelate(self):
        specs = [
            InterferenceSpec(
                kind="periodic_flicker", freq_hz=1.1, amplitude=0.02, profile="gradient"
            )
        ]
        result = render_video(self._scene(specs, seed=9, amp=0.0005))
        left = region_mean(result.video, result.layout.bg_boxes[0])
        right = region_mean(result.video, result.layout.bg_boxes[1])
        assert centered_nc(left, right) < -0.99

    def test_excessive_clipping_rejected(self):
        specs = [InterferenceSpec(kind="periodic_flicker", freq_hz=0.9, amplitude=5.0)]
        with pytest.raises(SynthError):
            render_video(self._scene(specs))

    def test_bad_channel_mix_rejected(self):
        specs = [InterferenceSpec(kind="periodic_flicker", channel_mix=(1.0, 1.0))]
        with pytest.raises(SynthError):
            render_video(self._scene(specs))

    def test_clip_fraction_reported(self):
        result = render_video(self._scene([], seed=1))
        assert result.clip_fraction == 0.0

    def test_deterministic(self):
        specs = [InterferenceSpec(kind="expression_warp", amplitude=0.008)]
        a = render_video(self._scene(specs, seed=11))
        b = render_video(self._scene(specs, seed=11))
        np.testing.assert_array_equal(a.video, b.video)


def _dir_bytes(root):
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = path.read_bytes()
    return out


class TestMakeProtocol:
    def test_unknown_protocol(self, tmp_path):
        with pytest.raises(SynthError):
            make_protocol("P9", 1, 0, tmp_path)

    def test_byte_identical_regeneration(self, tmp_path):
        a = make_protocol("P3", 2, seed=42, out_dir=tmp_path / "a", duration_s=6.0)
        b = make_protocol("P3", 2, seed=42, out_dir=tmp_path / "b", duration_s=6.0)
        assert _dir_bytes(a) == _dir_bytes(b)

    def test_dataset_files_present(self, tmp_path):
        root = make_protocol("P5", 3, seed=1, out_dir=tmp_path / "d", duration_s=6.0)
        assert (root / "manifest.json").exists()
        assert len(list((root / "videos").glob("*.raw"))) == 3
        assert len(list((root / "boxes").glob("*.boxes.csv"))) == 3
        assert len(list((root / "truth").glob("*.csv"))) == 3

    def test_p5_truth_traces_spectrally_separated(self, tmp_path):
        root = make_protocol(
            "P5", 1, seed=2, out_dir=tmp_path / "p5", duration_s=30.0, hr_range=(72.0, 72.0)
        )
        t, r, n_fg, n_bg, hr = read_truth(next((root / "truth").glob("*.csv")))
        from ddrppg.signals import SignalTrace

        r_hr = estimate_hr(psd(SignalTrace(samples=r, fs=FPS, kind="rppg")))
        n_hr = estimate_hr(psd(SignalTrace(samples=n_bg, fs=FPS, kind="interference")))
        assert hr == pytest.approx(72.0)
        assert r_hr == pytest.approx(72.0, abs=2.0)
        assert n_hr == pytest.approx(54.0, abs=2.0)

    def test_truth_round_trip_exact(self, tmp_path):
        root = make_protocol("P1", 1, seed=3, out_dir=tmp_path / "p1", duration_s=6.0)
        path = next((root / "truth").glob("*.csv"))
        t, r, n_fg, n_bg, hr = read_truth(path)
        assert len(t) == int(6.0 * FPS)
        assert np.all(np.isfinite(r)) and np.all(np.isfinite(n_bg))
        np.testing.assert_allclose(np.diff(t), 1.0 / FPS)

    def test_chromatic_gradient_flicker_hurts_classical_more_than_motion(self, tmp_path):
        def mean_error(pid):
            root = make_protocol(
                pid, 4, seed=6, out_dir=tmp_path / pid, duration_s=30.0, hr_range=(78.0, 90.0)
            )
            import json

            manifest = json.loads((root / "manifest.json").read_text())
            errs = []
            for entry in manifest["videos"]:
                from ddrppg.videoio import load_raw_video

                video, fps = load_raw_video(root / "videos" / f"{entry['name']}.raw")
                scene = SceneSpec(
                    frame_hw=tuple(entry["scene"]["frame_hw"]),
                    fps=fps,
                )
                layout = scene_layout(scene)
                fg = layout.fg_box
                crop = video[:, fg.y : fg.y + fg.h, fg.x : fg.x + fg.w, :]
                hr = estimate_hr(psd(classical_extract(crop, fps, "pos")))
                errs.append(abs(hr - entry["hr_bpm"]))
            return float(np.mean(errs))

        assert mean_error("P4") > mean_error("P1")


def test_protocol_table_covers_all_kinds():
    kinds = {s.kind for specs in PROTOCOL_INTERFERENCE.values() for s in specs}
    assert kinds == {
        "translation_motion",
        "expression_warp",
        "blockiness",
        "periodic_flicker",
    }
