"""Training loop, evaluation metrics, analysis reports, and persistence.

Checkpoints are zip archives of named little-endian float64 parameter arrays
plus a JSON config echo, so reloads are shape-safe and bit-stable.  Data
order and clip sampling derive their seeds from (seed, epoch, video index),
which makes resumed runs reproduce uninterrupted ones without carrying RNG
state around.
"""

from __future__ import annotations

import csv
import io
import json
import zipfile
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch

from .classical import classical_extract
from .clips import locate_regions, sample_clips
from .losses import LossWeights, total_loss
from .network import BranchConfig, DDNet, ForwardBundle, clips_to_tensor, deinterfere
from .signals import (
    HR_BAND_HZ,
    SignalTrace,
    estimate_hr,
    psd,
    running_correlation,
    decompose_correlation,
)
from .synth import read_truth
from .videoio import load_raw_video

METRICS_HEADER = ["epoch", "step", "stage", "l_nc", "l_kcn", "l_cr_hat", "l_dcr", "total"]


class ConfigError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    dataset: str = ""
    checkpoint_dir: str = "checkpoints"
    lr: float = 1e-5
    weight_decay: float = 0.0
    optimizer: str = "adamw"
    epochs: int = 100
    batch_size: int = 2
    stage_switch: float = 0.2
    w_nc: float = 1.0
    w_kcn: float = 1.0
    w_cr_hat: float = 1.0
    w_dcr: float = 1.0
    K: int = 4
    L: int = 4
    dt: int = 150
    h: int = 64
    w: int = 64
    epsilon: float = 0.7
    descriptive: bool = True
    widths: tuple = (16, 24, 32, 40, 48)
    seed: int = 0
    eval_window_s: float = 30.0

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2: contrastive losses need cross-video negatives")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.optimizer != "adamw":
            raise ConfigError(f"unsupported optimizer {self.optimizer!r}")
        if not (0.0 <= self.stage_switch <= 1.0):
            raise ConfigError("stage_switch must lie in [0, 1]")
        self.widths = tuple(self.widths)

    @classmethod
    def desk_preset(cls, **overrides):
        """Small settings that train in minutes on a CPU."""
        base = dict(
            lr=1e-3,
            epochs=10,
            batch_size=2,
            L=4,
            dt=120,
            h=16,
            w=16,
            widths=(4, 6, 8, 10, 12),
            eval_window_s=8.0,
        )
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_dict(cls, data: dict):
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def branch_config(self) -> BranchConfig:
        return BranchConfig(
            widths=self.widths,
            epsilon=self.epsilon,
            descriptive=self.descriptive,
            d=self.K,
        )

    def weights(self) -> LossWeights:
        return LossWeights(nc=self.w_nc, kcn=self.w_kcn, cr_hat=self.w_cr_hat, dcr=self.w_dcr)


@dataclass
class EvalReport:
    estimates: list
    truths: list
    mae: float
    rmse: float
    r: float
    skipped: int = 0


def load_dataset(dataset_dir):
    """Read a benchmark directory's manifest into video entries."""
    dataset_dir = Path(dataset_dir)
    manifest_path = dataset_dir / "manifest.json"
    if not manifest_path.exists():
        raise TrainingError(f"no manifest.json in {dataset_dir}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    entries = []
    for item in manifest["videos"]:
        name = item["name"]
        entries.append(
            {
                "name": name,
                "video": dataset_dir / "videos" / f"{name}.raw",
                "boxes": dataset_dir / "boxes" / f"{name}.boxes.csv",
                "truth": dataset_dir / "truth" / f"{name}.csv",
                "hr_bpm": item["hr_bpm"],
            }
        )
    return manifest, entries


def save_checkpoint(path, net: DDNet, config: TrainConfig, epoch: int, optimizer=None):
    """Write parameters (and optimizer state) as named arrays + JSON meta."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        for name, param in net.state_dict().items():
            zf.writestr(f"params/{name}.npy", _np_bytes(param.detach().cpu().numpy()))
        if optimizer is not None:
            state = optimizer.state_dict()
            zf.writestr("optimizer/meta.json", json.dumps(_opt_meta(state)))
            for pid, pstate in state["state"].items():
                for key, value in pstate.items():
                    if isinstance(value, torch.Tensor):
                        zf.writestr(
                            f"optimizer/{pid}/{key}.npy",
                            _np_bytes(value.detach().cpu().numpy()),
                        )
                    # scalar entries live in meta
        meta = {"epoch": epoch, "config": asdict(config), "widths": list(config.widths)}
        zf.writestr("meta.json", json.dumps(meta, sort_keys=True))


def _np_bytes(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr)
    if arr.dtype.byteorder == ">":
        arr = arr.astype(arr.dtype.newbyteorder("<"))
    buf = io.BytesIO()
    np.save(buf, arr)
    return buf.getvalue()


def _opt_meta(state):
    scalars = {}
    for pid, pstate in state["state"].items():
        scalars[str(pid)] = {
            k: (float(v) if not isinstance(v, torch.Tensor) else None)
            for k, v in pstate.items()
        }
    return {"param_groups": state["param_groups"], "scalars": scalars}


def load_checkpoint(path, device="cpu"):
    """Returns (net, config, epoch, optimizer_state or None)."""
    with zipfile.ZipFile(path) as zf:
        meta = json.loads(zf.read("meta.json"))
        config = TrainConfig.from_dict(meta["config"])
        net = DDNet(config.branch_config()).to(device)
        state = {}
        for name in zf.namelist():
            if name.startswith("params/") and name.endswith(".npy"):
                key = name[len("params/") : -len(".npy")]
                arr = np.load(io.BytesIO(zf.read(name)))
                state[key] = torch.as_tensor(arr)
        missing = set(net.state_dict()) - set(state)
        if missing:
            raise TrainingError(f"checkpoint missing parameters: {sorted(missing)[:5]}")
        net.load_state_dict(state)
        opt_state = None
        if "optimizer/meta.json" in zf.namelist():
            opt_meta = json.loads(zf.read("optimizer/meta.json"))
            opt_state = {"param_groups": opt_meta["param_groups"], "state": {}}
            for name in zf.namelist():
                if name.startswith("optimizer/") and name.endswith(".npy"):
                    _, pid, keyfile = name.split("/")
                    key = keyfile[: -len(".npy")]
                    arr = np.load(io.BytesIO(zf.read(name)))
                    opt_state["state"].setdefault(int(pid), {})[key] = torch.as_tensor(arr)
            for pid, scalars in opt_meta["scalars"].items():
                for k, v in scalars.items():
                    if v is not None:
                        opt_state["state"].setdefault(int(pid), {})[k] = torch.tensor(v)
    return net, config, meta["epoch"], opt_state


def _merge_bundles(bundles) -> ForwardBundle:
    """Concatenate per-video bundles so negatives span the whole batch."""
    Ls = [b.n_fg.shape[0] for b in bundles]
    fg_part = torch.cat([b.r_hat[: L] for b, L in zip(bundles, Ls)])
    aug_part = torch.cat([b.r_hat[L:] for b, L in zip(bundles, Ls)])
    fg_r = torch.cat([b.r[: L] for b, L in zip(bundles, Ls)])
    aug_r = torch.cat([b.r[L:] for b, L in zip(bundles, Ls)])
    return ForwardBundle(
        n_fg=torch.cat([b.n_fg for b in bundles]),
        n_bg=torch.cat([b.n_bg for b in bundles]),
        r_hat=torch.cat([fg_part, aug_part]),
        r=torch.cat([fg_r, aug_r]),
        f_n_fg=torch.cat([b.f_n_fg for b in bundles]),
        f_hat_r=torch.cat([b.f_hat_r for b in bundles]),
        f_r=torch.cat([b.f_r for b in bundles]),
        fps=bundles[0].fps,
    )


def _clipset_for(entry, config: TrainConfig, seed: int):
    video, fps = load_raw_video(entry["video"])
    layout = locate_regions(video, locator="sidecar-file", sidecar=entry["boxes"])
    return sample_clips(
        video,
        layout,
        L=config.L,
        dt=config.dt,
        h=config.h,
        w=config.w,
        seed=seed,
        fps=fps,
        source_id=entry["name"],
    )


def train(config: TrainConfig, resume_from=None, device="cpu", log=print):
    """Run the two-stage training loop; returns the final checkpoint path."""
    _, entries = load_dataset(config.dataset)
    if len(entries) < config.batch_size:
        raise TrainingError("dataset smaller than one batch")
    ckpt_dir = Path(config.checkpoint_dir)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = ckpt_dir / "metrics.csv"

    torch.manual_seed(config.seed)
    net = DDNet(config.branch_config()).to(device)
    optimizer = torch.optim.AdamW(net.parameters(), lr=config.lr, weight_decay=config.weight_decay)
    start_epoch = 0
    if resume_from is not None:
        net, _, last_epoch, opt_state = load_checkpoint(resume_from, device=device)
        optimizer = torch.optim.AdamW(net.parameters(), lr=config.lr, weight_decay=config.weight_decay)
        if opt_state is not None:
            optimizer.load_state_dict(opt_state)
        start_epoch = last_epoch + 1

    mode = "a" if (resume_from is not None and metrics_path.exists()) else "w"
    switch_epoch = int(round(config.stage_switch * config.epochs))
    step = start_epoch * max(1, len(entries) // config.batch_size)
    with open(metrics_path, mode, newline="") as fh:
        writer = csv.writer(fh)
        if mode == "w":
            writer.writerow(METRICS_HEADER)
        final_path = None
        for epoch in range(start_epoch, config.epochs):
            stage = 1 if epoch < switch_epoch else 2
            order = np.random.default_rng((config.seed, epoch)).permutation(len(entries))
            for b0 in range(0, len(order) - config.batch_size + 1, config.batch_size):
                batch_ids = order[b0 : b0 + config.batch_size]
                bundles = []
                for vid in batch_ids:
                    clip_seed = int(
                        np.random.SeedSequence([config.seed, epoch, int(vid)]).generate_state(1)[0]
                    )
                    bundles.append(net.forward_all(_clipset_for(entries[vid], config, clip_seed)))
                bundle = _merge_bundles(bundles)
                report = total_loss(bundle, stage, config.weights(), K=config.K, seed=config.seed)
                if not torch.isfinite(report.total):
                    raise TrainingError(
                        f"non-finite loss at epoch {epoch} step {step}: {report.as_row()}"
                    )
                optimizer.zero_grad()
                report.total.backward()
                optimizer.step()
                row = report.as_row()
                writer.writerow(
                    [epoch, step, stage, row["l_nc"], row["l_kcn"], row["l_cr_hat"], row["l_dcr"], row["total"]]
                )
                step += 1
            fh.flush()
            final_path = ckpt_dir / f"epoch{epoch:04d}.ckpt"
            save_checkpoint(final_path, net, config, epoch, optimizer)
            log(f"epoch {epoch} stage {stage} total {row['total']:.4f}")
    return final_path


def _window_trace(net, video, fps, layout, h, w, t0, dt, use_deinterfered=True):
    fg = layout.fg_box
    y0 = fg.y + (fg.h - h) // 2
    x0 = fg.x + (fg.w - w) // 2
    clip = video[t0 : t0 + dt, y0 : y0 + h, x0 : x0 + w]
    with torch.no_grad():
        x = clips_to_tensor([clip], device=next(net.parameters()).device)
        f_hat = net.extract_r(x)
        if use_deinterfered:
            f = deinterfere(f_hat, net.extract_n(x))
        else:
            f = f_hat
        trace = net.estimate_r(f)[0].cpu().numpy().astype(np.float64)
    return SignalTrace(samples=trace, fs=fps, kind="rppg")


def interference_trace(net, config, video, fps, layout, t0, dt, trim=12):
    """Interference estimate for one window, with boundary transients cut.

    The stacked temporal convolutions zero-pad the clip ends, which injects a
    deterministic warm-up/cool-down transient into the first and last few
    frames of the trace; ``trim`` (>= the temporal receptive-field half-width)
    drops those frames before any spectral readout.
    """
    fg = layout.fg_box
    y0 = fg.y + (fg.h - config.h) // 2
    x0 = fg.x + (fg.w - config.w) // 2
    clip = video[t0 : t0 + dt, y0 : y0 + config.h, x0 : x0 + config.w]
    with torch.no_grad():
        x = clips_to_tensor([clip], device=next(net.parameters()).device)
        trace = net.estimate_n(net.extract_n(x))[0].cpu().numpy().astype(np.float64)
    if trim:
        if dt <= 2 * trim + 1:
            raise TrainingError(f"window of {dt} frames too short for trim {trim}")
        trace = trace[trim:-trim]
    return SignalTrace(samples=trace, fs=fps, kind="interference")


def evaluate(
    checkpoint,
    dataset_dir,
    window_s: float = None,
    use_deinterfered: bool = True,
    device: str = "cpu",
) -> EvalReport:
    """HR per non-overlapping window on every video; MAE/RMSE/R vs truth."""
    if isinstance(checkpoint, (str, Path)):
        net, config, _, _ = load_checkpoint(checkpoint, device=device)
    else:
        net, config = checkpoint
    net.eval()
    window_s = window_s if window_s is not None else config.eval_window_s
    _, entries = load_dataset(dataset_dir)
    estimates, truths = [], []
    skipped = 0
    for entry in entries:
        video, fps = load_raw_video(entry["video"])
        dt = int(round(window_s * fps))
        if video.shape[0] < dt:
            skipped += 1
            continue
        layout = locate_regions(video, locator="sidecar-file", sidecar=entry["boxes"])
        for t0 in range(0, video.shape[0] - dt + 1, dt):
            trace = _window_trace(
                net, video, fps, layout, config.h, config.w, t0, dt, use_deinterfered
            )
            estimates.append(estimate_hr(psd(trace, HR_BAND_HZ)))
            truths.append(float(entry["hr_bpm"]))
    if not estimates:
        raise TrainingError("no video long enough for the evaluation window")
    return _metrics(estimates, truths, skipped)


def _metrics(estimates, truths, skipped=0) -> EvalReport:
    est = np.asarray(estimates, dtype=np.float64)
    tru = np.asarray(truths, dtype=np.float64)
    err = est - tru
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(np.mean(err**2)))
    if est.std() == 0 or tru.std() == 0:
        r = 0.0
    else:
        r = float(np.corrcoef(est, tru)[0, 1])
    return EvalReport(estimates=list(est), truths=list(tru), mae=mae, rmse=rmse, r=r, skipped=skipped)


def _region_mean_trace(video, box, fps) -> SignalTrace:
    sub = video[:, box.y : box.y + box.h, box.x : box.x + box.w, :]
    trace = sub.mean(axis=(1, 2, 3))
    return SignalTrace(samples=trace - trace.mean(), fs=fps, kind="interference")


def analyze(dataset_dir, estimator="classical", checkpoint=None, out_dir=None, device="cpu"):
    """Running-correlation profiles between estimated pulse and bg
    interference, between the two bg regions, and the alpha/beta split.

    Returns a list of per-video dicts and optionally writes CSV + plots.
    """
    _, entries = load_dataset(dataset_dir)
    net = config = None
    if estimator == "checkpoint":
        if checkpoint is None:
            raise ConfigError("checkpoint estimator needs a checkpoint path")
        net, config, _, _ = load_checkpoint(checkpoint, device=device)
        net.eval()
    elif estimator != "classical":
        raise ConfigError(f"unknown estimator {estimator!r}")

    results = []
    for entry in entries:
        video, fps = load_raw_video(entry["video"])
        layout = locate_regions(video, locator="sidecar-file", sidecar=entry["boxes"])
        bg1 = _region_mean_trace(video, layout.bg_boxes[0], fps)
        bg2 = _region_mean_trace(video, layout.bg_boxes[1], fps)
        fg = layout.fg_box
        if estimator == "classical":
            fg_clip = video[:, fg.y : fg.y + fg.h, fg.x : fg.x + fg.w, :]
            r_hat = classical_extract(fg_clip, fps)
        else:
            r_hat = _window_trace(
                net, video, fps, layout, config.h, config.w, 0, video.shape[0],
                use_deinterfered=False,
            )
        r_hat = SignalTrace(r_hat.samples - r_hat.samples.mean(), fps, "rppg")
        prof_rn = running_correlation(r_hat, bg1)
        prof_bb = running_correlation(bg1, bg2)
        t, r_true, n_fg_true, _, _ = read_truth(entry["truth"])
        decomposition = None
        if np.any(n_fg_true) and np.any(r_true):
            lag = prof_rn.peak()[0]
            alpha, beta, recon = decompose_correlation(
                SignalTrace(r_true, fps, "rppg"),
                SignalTrace(n_fg_true, fps, "interference"),
                bg1,
                tau=lag,
            )
            decomposition = {"alpha": alpha, "beta": beta, "reconstructed": recon}
        results.append(
            {
                "name": entry["name"],
                "rn_profile": prof_rn,
                "bb_profile": prof_bb,
                "rn_peak": prof_rn.peak(),
                "bb_peak": prof_bb.peak(),
                "decomposition": decomposition,
            }
        )
    if out_dir is not None:
        _write_analysis(Path(out_dir), results)
    return results


def _write_analysis(out_dir: Path, results):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "correlations.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "lag", "rn_value", "bb_value"])
        for res in results:
            for lag, rn, bb in zip(
                res["rn_profile"].lags, res["rn_profile"].values, res["bb_profile"].values
            ):
                writer.writerow([res["name"], int(lag), rn, bb])
    for res in results:
        fig, ax = plt.subplots(figsize=(7, 3))
        ax.plot(res["rn_profile"].lags, res["rn_profile"].values, label="pulse vs bg")
        ax.plot(res["bb_profile"].lags, res["bb_profile"].values, label="bg vs bg")
        ax.set_xlabel("lag (samples)")
        ax.set_ylabel("normalized correlation")
        ax.legend()
        fig.tight_layout()
        fig.savefig(out_dir / f"{res['name']}_profiles.png", dpi=100)
        plt.close(fig)
