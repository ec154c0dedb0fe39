"""Command-line interface using Typer."""

import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
import typer
from rich.console import Console
from rich.table import Table

from splatfusion import __version__
from splatfusion.config import Config
from splatfusion.errors import ConfigError, EmptyMaskError, StageError
from splatfusion.gsmap import load_map, render
from splatfusion.harness import dataset_io
from splatfusion.harness.metrics import ALIGNMENTS, NEAR_RANGE, ate, depth_l1
from splatfusion.harness.pipeline import run_pipeline
from splatfusion.harness.scenarios import SCENARIOS, get_scenario
from splatfusion.harness.simulate import generate_sequence
from splatfusion.logging_setup import setup_logging
from splatfusion.utils import format_duration, horizontal_bar, sparkline

app = typer.Typer(
    name="splatfusion",
    help="Confidence-weighted dense SLAM backend on synthetic sequences",
    add_completion=False,
)

console = Console()
logger = logging.getLogger(__name__)

EXIT_STAGE_ERROR = 1
EXIT_CONFIG_ERROR = 2


def _load_config(config_path: Optional[Path]) -> Config:
    """Load config or exit with the invalid-config code."""
    try:
        return Config.load(config_path) if config_path else Config.load()
    except ConfigError as e:
        console.print(f"[bold red]✗ Invalid configuration: {e}[/bold red]")
        sys.exit(EXIT_CONFIG_ERROR)


def _setup_logging(config: Config) -> logging.Logger:
    return setup_logging(
        level=config.logging.level,
        log_file=config.logging.file_path,
        max_bytes=config.logging.max_bytes,
        backup_count=config.logging.backup_count,
        console_level=config.logging.console_level,
    )


def _meters(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.4f} m"


@app.command()
def init(
    config_path: Path = typer.Option(Path("config.yaml"), "--config", help="Config file to write"),
) -> None:
    """Write a default configuration file."""
    console.print(f"[bold cyan]Initializing splatfusion v{__version__}...[/bold cyan]")
    config = Config()
    config.save(config_path)
    console.print(f"✓ Configuration saved to: {config_path}")


@app.command()
def simulate(
    scene: str = typer.Option("smoke", "--scene", help="Scene preset"),
    output: Path = typer.Option(Path("data/smoke"), "--output", help="Output directory"),
    seed: int = typer.Option(0, "--seed", help="Random seed"),
) -> None:
    """Write a synthetic sequence (images, depth, priors, ground truth) to disk."""
    console.print(f"[bold cyan]Simulating '{scene}' (seed={seed})...[/bold cyan]")
    try:
        sequence = generate_sequence(*get_scenario(scene, seed))
        dataset_io.write_sequence(sequence, output)
    except KeyError as e:
        console.print(f"[bold red]✗ {e.args[0]}[/bold red]")
        sys.exit(EXIT_CONFIG_ERROR)
    except Exception as e:
        console.print(f"[bold red]✗ Simulation failed: {e}[/bold red]")
        logger.error("Simulation failed", exc_info=True)
        sys.exit(EXIT_STAGE_ERROR)

    console.print("[bold green]✓ Sequence written[/bold green]")
    console.print(f"  Frames: {len(sequence)}")
    console.print(f"  Camera: {sequence.camera.width}x{sequence.camera.height}")
    console.print(f"  Output: {output}")


@app.command()
def run(
    config_path: Optional[Path] = typer.Option(None, "--config", help="Config file"),
    scene: Optional[str] = typer.Option(None, "--scene", help="Scene preset"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Random seed"),
    output: Optional[Path] = typer.Option(None, "--output", help="Artifact directory"),
    sequential: bool = typer.Option(False, "--sequential", help="Map on the calling thread"),
    no_fusion: bool = typer.Option(False, "--no-fusion", help="Use multi-view depth only"),
    no_loop_closure: bool = typer.Option(
        False, "--no-loop-closure", help="Skip loop detection"
    ),
) -> None:
    """Run the full pipeline on a scene preset and write the report and artifacts."""
    config = _load_config(config_path)
    if scene is not None:
        config.pipeline.scene = scene
    if seed is not None:
        config.pipeline.seed = seed
    if output is not None:
        config.pipeline.output_dir = str(output)
    config.pipeline.sequential |= sequential
    config.pipeline.fusion_enabled &= not no_fusion
    config.pipeline.loop_closure_enabled &= not no_loop_closure
    try:
        config.validate()
        if config.pipeline.scene not in SCENARIOS:
            raise ConfigError(
                f"Unknown scene '{config.pipeline.scene}' (choose from {sorted(SCENARIOS)})"
            )
    except ConfigError as e:
        console.print(f"[bold red]✗ Invalid configuration: {e}[/bold red]")
        sys.exit(EXIT_CONFIG_ERROR)

    _setup_logging(config)
    console.print("[bold cyan]Running pipeline...[/bold cyan]")
    console.print(f"  Scene: {config.pipeline.scene}")
    console.print(f"  Seed: {config.pipeline.seed}")
    console.print(f"  Output: {config.pipeline.output_dir}")

    try:
        result = run_pipeline(config)
    except StageError as e:
        console.print(f"[bold red]✗ Pipeline failed in stage '{e.stage}': {e}[/bold red]")
        logger.error("Pipeline failed", exc_info=True)
        sys.exit(EXIT_STAGE_ERROR)

    report = result.report
    errors = ate(result.estimate, result.sequence.gt_poses, config.pipeline.ate_alignment).errors

    console.print("[bold green]✓ Pipeline complete[/bold green]")
    table = Table(title="Run report")
    table.add_column("Metric", style="cyan")
    table.add_column("Value", justify="right")
    table.add_row("Keyframes", f"{report.num_keyframes} / {report.num_frames}")
    table.add_row("Loop closures", str(report.num_loops))
    table.add_row("ATE RMSE", f"{report.ate_rmse * 100:.2f} cm")
    table.add_row("ATE RMSE (before backend)", f"{report.ate_rmse_tracked * 100:.2f} cm")
    table.add_row("ATE RMSE (odometry)", f"{report.ate_rmse_frontend * 100:.2f} cm")
    table.add_row("Depth L1", f"{report.depth_l1_overall:.4f} m")
    table.add_row(f"Depth L1 (≤ {NEAR_RANGE:g} m)", _meters(report.depth_l1_near))
    table.add_row("Rendered depth L1", _meters(report.render_depth_l1))
    table.add_row("PSNR", f"{report.psnr:.2f} dB")
    table.add_row("SSIM", f"{report.ssim:.4f}")
    table.add_row("Chamfer L1", f"{report.chamfer_l1:.4f} m")
    table.add_row("Completion ratio", f"{report.completion_ratio:.2%}")
    table.add_row("Gaussians", f"{report.gaussian_count:,} ({report.map_size_mb:.3f} MB)")
    table.add_row("Runtime", f"{format_duration(report.total_seconds)} ({report.fps:.2f} FPS)")
    console.print(table)

    console.print(f"  ATE per frame: {sparkline(errors)}")
    longest = max(report.timings.values(), default=0.0)
    for name, seconds in sorted(report.timings.items(), key=lambda kv: -kv[1]):
        console.print(
            f"  {name:<10} {horizontal_bar(seconds, longest)} {format_duration(seconds)}"
        )
    if result.output_dir is not None:
        console.print(f"  Artifacts: {result.output_dir}")


@app.command()
def evaluate(
    est: Path = typer.Option(..., "--est", help="Estimated TUM trajectory"),
    gt: Path = typer.Option(..., "--gt", help="Ground-truth TUM trajectory"),
    align: str = typer.Option("rigid", "--align", help="rigid, sim3 or none"),
    est_depth: Optional[Path] = typer.Option(None, "--est-depth", help="Estimated depth PNGs"),
    gt_depth: Optional[Path] = typer.Option(None, "--gt-depth", help="Ground-truth depth PNGs"),
) -> None:
    """Compute trajectory (and optionally depth) metrics from files."""
    if align not in ALIGNMENTS:
        console.print(f"[bold red]✗ Unknown alignment '{align}' (use {ALIGNMENTS})[/bold red]")
        sys.exit(EXIT_CONFIG_ERROR)

    try:
        _, est_poses = dataset_io.read_tum(est)
        _, gt_poses = dataset_io.read_tum(gt)
        result = ate(est_poses, gt_poses, align)

        table = Table(title="Evaluation")
        table.add_column("Metric", style="cyan")
        table.add_column("Value", justify="right")
        table.add_row("Poses", str(len(gt_poses)))
        table.add_row("ATE RMSE", f"{result.rmse:.6f} m")
        table.add_row("ATE mean", f"{result.mean:.6f} m")
        table.add_row("ATE median", f"{result.median:.6f} m")
        if result.alignment.scale != 1.0:
            table.add_row("Alignment scale", f"{result.alignment.scale:.6f}")

        if est_depth is not None and gt_depth is not None:
            overall, near = _depth_errors(est_depth, gt_depth)
            table.add_row("Depth L1", f"{np.mean(overall):.6f} m")
            if near:
                table.add_row(f"Depth L1 (≤ {NEAR_RANGE:g} m)", f"{np.mean(near):.6f} m")
    except Exception as e:
        console.print(f"[bold red]✗ Evaluation failed: {e}[/bold red]")
        logger.error("Evaluation failed", exc_info=True)
        sys.exit(EXIT_STAGE_ERROR)

    console.print(table)
    console.print(f"  Error profile: {sparkline(result.errors)}")


def _depth_errors(est_dir: Path, gt_dir: Path) -> tuple[List[float], List[float]]:
    """Depth L1 for every PNG name present in both directories."""
    names = sorted(p.name for p in est_dir.glob("*.png") if (gt_dir / p.name).exists())
    if not names:
        raise EmptyMaskError(f"No matching depth maps in {est_dir} and {gt_dir}")
    overall, near = [], []
    for name in names:
        e = dataset_io.read_depth_png(est_dir / name)
        g = dataset_io.read_depth_png(gt_dir / name)
        overall.append(depth_l1(e, g))
        try:
            near.append(depth_l1(e, g, max_range=NEAR_RANGE))
        except EmptyMaskError:
            pass
    return overall, near


@app.command("render")
def render_views(
    map_path: Path = typer.Option(..., "--map", help="CSPL map file"),
    trajectory: Path = typer.Option(..., "--trajectory", help="TUM trajectory of camera poses"),
    camera_path: Path = typer.Option(..., "--camera", help="camera.yaml"),
    output: Path = typer.Option(Path("renders"), "--output", help="Output directory"),
) -> None:
    """Render color and depth images of a saved map from the given poses."""
    try:
        gmap = load_map(map_path)
        camera = dataset_io.read_camera_yaml(camera_path)
        _, poses = dataset_io.read_tum(trajectory)
        console.print(
            f"[bold cyan]Rendering {len(poses)} views of {len(gmap):,} Gaussians...[/bold cyan]"
        )
        for k, pose in enumerate(poses):
            out = render(gmap, camera, pose)
            dataset_io.write_png(output / f"{k:06d}.png", np.clip(out.color, 0.0, 1.0))
            dataset_io.write_depth_png(output / f"{k:06d}_depth.png", out.normalized_depth())
    except Exception as e:
        console.print(f"[bold red]✗ Rendering failed: {e}[/bold red]")
        logger.error("Rendering failed", exc_info=True)
        sys.exit(EXIT_STAGE_ERROR)

    console.print("[bold green]✓ Rendering complete[/bold green]")
    console.print(f"  Output: {output}")


@app.command()
def version() -> None:
    """Show version information."""
    console.print(f"splatfusion v{__version__}")


if __name__ == "__main__":
    app()
