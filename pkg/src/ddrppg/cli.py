"""Command-line surface: dataset generation, training, evaluation,
analysis, and the built-in oracle self-test.

Options can come from the command line, from a YAML config file
(``--config``), or from environment variables prefixed ``DDRPPG_``.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import yaml

from .harness import TrainConfig, analyze, evaluate, train
from .synth import PROTOCOL_INTERFERENCE, make_protocol


def _load_config_file(path) -> dict:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise click.ClickException(f"{path}: config must be a mapping")
    return data


@click.group(context_settings={"auto_envvar_prefix": "DDRPPG"})
def main():
    """Unsupervised de-interfered rPPG estimation toolkit."""


@main.command()
@click.option("--protocol", type=click.Choice(sorted(PROTOCOL_INTERFERENCE)), default="P5")
@click.option("--n-videos", default=8, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--fps", default=20.0, show_default=True)
@click.option("--duration-s", default=12.0, show_default=True)
@click.option("--frame", default=64, show_default=True, help="Square frame side in pixels.")
def synth(protocol, n_videos, seed, out_dir, fps, duration_s, frame):
    """Generate a synthetic benchmark dataset."""
    path = make_protocol(
        protocol, n_videos, seed, out_dir, frame_hw=(frame, frame), fps=fps, duration_s=duration_s
    )
    click.echo(f"wrote {n_videos} videos to {path}")


@main.command(name="train")
@click.option("--config", "config_path", type=click.Path(exists=True), help="YAML config file.")
@click.option("--dataset", type=click.Path(exists=True))
@click.option("--checkpoint-dir", type=click.Path())
@click.option("--desk-preset", is_flag=True, help="Use small, CPU-friendly settings.")
@click.option("--resume", type=click.Path(exists=True), help="Checkpoint to resume from.")
@click.option("--epochs", type=int)
@click.option("--lr", type=float)
@click.option("--seed", type=int)
def train_cmd(config_path, dataset, checkpoint_dir, desk_preset, resume, epochs, lr, seed):
    """Train the two-branch network on a dataset directory."""
    data = _load_config_file(config_path) if config_path else {}
    for key, value in [
        ("dataset", dataset),
        ("checkpoint_dir", checkpoint_dir),
        ("epochs", epochs),
        ("lr", lr),
        ("seed", seed),
    ]:
        if value is not None:
            data[key] = value
    if not data.get("dataset"):
        raise click.ClickException("a dataset is required (--dataset or config file)")
    try:
        config = TrainConfig.desk_preset(**data) if desk_preset else TrainConfig.from_dict(data)
        final = train(config, resume_from=resume, log=click.echo)
    except Exception as exc:  # surface config/training errors as exit code 1
        raise click.ClickException(str(exc)) from exc
    click.echo(f"final checkpoint: {final}")


@main.command(name="eval")
@click.argument("checkpoint", type=click.Path(exists=True))
@click.argument("dataset", type=click.Path(exists=True))
@click.option("--window-s", type=float, default=None, help="Evaluation window (default: config).")
@click.option("--use-rhat", is_flag=True, help="Evaluate the interference-carrying estimate instead.")
def eval_cmd(checkpoint, dataset, window_s, use_rhat):
    """Evaluate a checkpoint: per-window HR, MAE/RMSE/R."""
    report = evaluate(checkpoint, dataset, window_s=window_s, use_deinterfered=not use_rhat)
    click.echo(
        json.dumps(
            {
                "mae_bpm": report.mae,
                "rmse_bpm": report.rmse,
                "pearson_r": report.r,
                "n_clips": len(report.estimates),
                "skipped_videos": report.skipped,
            },
            indent=2,
        )
    )


@main.command(name="analyze")
@click.argument("dataset", type=click.Path(exists=True))
@click.option("--estimator", type=click.Choice(["classical", "checkpoint"]), default="classical")
@click.option("--checkpoint", type=click.Path(exists=True))
@click.option("--out", "out_dir", type=click.Path(), required=True)
def analyze_cmd(dataset, estimator, checkpoint, out_dir):
    """Write running-correlation CSV and plots for a dataset."""
    results = analyze(dataset, estimator=estimator, checkpoint=checkpoint, out_dir=out_dir)
    for res in results:
        click.echo(
            f"{res['name']}: pulse-vs-bg peak {res['rn_peak'][1]:+.3f} "
            f"bg-vs-bg peak {res['bb_peak'][1]:+.3f}"
        )


@main.command()
def selftest():
    """Run the oracle test suites via pytest."""
    import pytest

    root = Path(__file__).resolve().parents[2] / "tests"
    sys.exit(pytest.main([str(root), "-q"]))


if __name__ == "__main__":
    main()
