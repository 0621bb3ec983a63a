#!/usr/bin/env python3
"""Command-line entry point: kp | trace | analyze | estimate-time | export-script"""
import logging
from enum import Enum
from pathlib import Path
from typing import Optional

import typer

from config.settings import settings
from models.events import PatternKind
from models.schemas import AnalysisConfig, ExperimentConfig, JitterMode
from services.atomic import export_script, load_script
from services.errors import AtomicityError, CurveError, ScalarError, TraceFormatError
from services.experiment import ExperimentRunner, estimate_time, load_config
from services.trace_io import read_trace

app = typer.Typer(add_completion=False, help="Atomic-pattern P-256 kP, leakage simulation and simple-SCA analysis")
runner = ExperimentRunner()


class Preset(str, Enum):
    desk = "desk"
    measured = "measured"


opt_config = typer.Option(None, "--config", help="ExperimentConfig as JSON.")
opt_preset = typer.Option(Preset.desk, help="Trace timing preset when no config file is given.")


@app.callback()
def main(verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging.")):
    logging.basicConfig(
        level=logging.DEBUG if verbose else settings.LOG_LEVEL,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def fail(message: str, code: int = 1):
    typer.echo(f"Error: {message}", err=True)
    raise typer.Exit(code)


@app.command()
def kp(
    scalar: str = typer.Argument(..., help="Scalar as an MSB-first bit string."),
    x: Optional[str] = typer.Option(None, help="Affine x of the input point (hex), default G."),
    y: Optional[str] = typer.Option(None, help="Affine y of the input point (hex), default G."),
    word_bits: int = typer.Option(settings.WORD_BITS, help="Limb width, 32 or 64."),
):
    """Compute kP with the atomic patterns and verify it against the oracles."""
    if word_bits not in (32, 64):
        fail("word bits must be 32 or 64", 2)
    try:
        result = runner.run_kp(scalar, x, y, word_bits)
    except (ScalarError, CurveError) as e:
        fail(str(e), 2)
    typer.echo(f"x = {result.x}")
    typer.echo(f"y = {result.y}")
    typer.echo(f"PD = {result.doublings}, PA = {result.additions}")
    typer.echo(f"oracle: {'verified' if result.verified else 'MISMATCH'}")
    if not result.verified:
        raise typer.Exit(1)


@app.command()
def trace(
    output: Path = typer.Option(Path(settings.OUTPUT_DIR) / "trace.atrc", help="Binary trace path."),
    config: Optional[Path] = opt_config,
    preset: Preset = opt_preset,
    scalar: Optional[str] = typer.Option(None, help="Scalar bit string."),
    seed: Optional[int] = typer.Option(None, help="Simulation seed."),
    jitter: Optional[JitterMode] = typer.Option(None, help="Duration jitter model."),
    address_weight: Optional[float] = typer.Option(None, help="Address leakage weight."),
    value_weight: Optional[float] = typer.Option(None, help="Value leakage weight."),
    snr: Optional[float] = typer.Option(None, help="Target SNR for noise calibration."),
    truncate: bool = typer.Option(False, help="Capture only part of the final operation."),
    csv: Optional[Path] = typer.Option(None, help="Also export the samples as CSV."),
):
    """Run kP with event capture and write a simulated trace plus its annotations."""
    try:
        experiment = load_config(config, preset.value, scalar=scalar, seed=seed, jitter=jitter,
                                 address_weight=address_weight, value_weight=value_weight,
                                 target_snr=snr, truncate_final=truncate or None)
    except (ValueError, OSError) as e:
        fail(f"invalid configuration: {e}", 2)
    try:
        result, path = runner.run_trace(experiment, output, csv)
    except (AtomicityError, OSError) as e:
        fail(str(e))
    typer.echo(f"Wrote {len(result)} samples to {path}")


@app.command()
def analyze(
    trace_file: Path = typer.Argument(..., help="Binary trace written by the trace command."),
    config: Optional[Path] = opt_config,
    preset: Preset = opt_preset,
    output_dir: Path = typer.Option(Path(settings.OUTPUT_DIR), help="Directory for the reports."),
    ground_truth: bool = typer.Option(False, help="Segment from the annotations instead of the NOP gaps."),
    block: int = typer.Option(1, min=1, max=4, help="Atomic block to compare."),
):
    """Segment, synchronize and test a trace; writes the CSV report and summary."""
    try:
        loaded = read_trace(trace_file)
    except TraceFormatError as e:
        fail(str(e))
    try:
        if config is None and "experiment" in loaded.metadata:
            experiment = ExperimentConfig.model_validate(loaded.metadata["experiment"])
        else:
            experiment = load_config(config, preset.value)
    except (ValueError, OSError) as e:
        fail(f"invalid configuration: {e}", 2)
    analysis = AnalysisConfig.model_validate(
        {**experiment.analysis.model_dump(), "ground_truth_segmentation": ground_truth, "block": block})
    experiment = experiment.model_copy(update={"analysis": analysis})

    try:
        result = runner.run_analyze(loaded, experiment)
        paths = runner.write_reports(result, output_dir)
    except AtomicityError as e:
        fail(str(e))
    summary = result.summary
    typer.echo(f"PD = {summary.doublings}, PA = {summary.additions}, partial = {summary.partial}")
    typer.echo(f"range = {summary.analysis_range}, unsynchronizable = {summary.unsynchronizable}")
    for level, indices in summary.separated_ci.items():
        typer.echo(f"c = {level}: {len(indices)} separated samples")
    typer.echo(summary.verdict)
    typer.echo(f"Reports: {paths['csv']}, {paths['summary']}")


@app.command("estimate-time")
def estimate_time_cmd(
    bits: int = typer.Option(256, min=1, max=256, help="Scalar bit length."),
    clock_mhz: float = typer.Option(settings.CLOCK_MHZ, help="Clock frequency in MHz."),
    block_cycles: int = typer.Option(settings.BLOCK_CYCLES, help="Cycles per atomic block."),
):
    """Minimum and maximum kP time for an l-bit scalar."""
    estimate = estimate_time(bits, clock_mhz, block_cycles)
    typer.echo(f"min: {estimate.min_cycles} cycles, {estimate.min_ms:.0f} ms")
    typer.echo(f"max: {estimate.max_cycles} cycles, {estimate.max_ms:.0f} ms")


@app.command("export-script")
def export_script_cmd(kind: PatternKind = typer.Argument(..., help="PD or PA.")):
    """Print an atomic script in its text table format."""
    typer.echo(export_script(load_script(kind)), nl=False)


if __name__ == "__main__":
    app()
