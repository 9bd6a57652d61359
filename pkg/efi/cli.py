"""
Command-line interface.

    efi simulate  --preset linear_known_sigma --out data.csv
    efi fit data.csv --preset linear_known_sigma --out-dir run/
    efi replicate --config experiment.yaml --threads 4
    efi presets list | efi presets show NAME
    efi baseline data.csv --preset bf_equal_var_n50 --method welch
"""

import logging
import sys
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, List, Optional

import click
import numpy as np
import typer

from efi import __version__
from efi.core.config import settings
from efi.core.errors import ConfigError, EFIError
from efi.core.logging import configure_logging
from efi.core.rng import RngStreams
from efi.schemas.experiment import (
    ExperimentConfig,
    config_hash,
    config_to_dict,
    dump_config,
    load_config,
    parse_config,
)
from efi.schemas.report import FitSummary, IntervalSummary
from efi.services.baselines import run_baseline
from efi.services.harness import coverage_harness
from efi.services.inference import diagnostics, summarize
from efi.services.models import family_truth, make_family, read_csv, simulate, write_csv
from efi.services.presets import get_preset, list_presets
from efi.services.sampler import run_efi

logger = logging.getLogger(__name__)

app = typer.Typer(
    name="efi",
    help="Extended fiducial inference: simulate, fit, replicate and compare.",
    no_args_is_help=True,
    add_completion=False,
)
presets_app = typer.Typer(help="Named experiment presets.", no_args_is_help=True)
app.add_typer(presets_app, name="presets")

ConfigOption = typer.Option(None, "--config", "-c", help="Experiment YAML file.")
PresetOption = typer.Option(None, "--preset", "-p", help="Named preset (see `efi presets list`).")
SeedOption = typer.Option(None, "--seed", help="Override the experiment seed.")
OutDirOption = typer.Option(None, "--out-dir", "-o", help="Output directory.")


@contextmanager
def _handle_errors() -> Iterator[None]:
    try:
        yield
    except EFIError as exc:
        logger.debug("command failed", exc_info=True)
        typer.echo(f"error: {exc}", err=True)
        raise typer.Exit(code=exc.exit_code) from exc


def _load(
    config: Optional[Path], preset: Optional[str], seed: Optional[int] = None
) -> ExperimentConfig:
    if (config is None) == (preset is None):
        raise ConfigError("pass exactly one of --config or --preset")
    experiment = load_config(config) if config is not None else get_preset(preset or "")
    if seed is not None:
        experiment = experiment.model_copy(update={"seed": seed})
    return experiment


def _out_dir(out_dir: Optional[Path]) -> Path:
    path = out_dir or Path(settings.DEFAULT_OUT_DIR)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {path}: {exc}") from exc
    return path


def _finite(value: object) -> Optional[float]:
    if value is None:
        return None
    number = float(value)  # type: ignore[arg-type]
    return number if np.isfinite(number) else None


@app.callback()
def main_callback(
    log_level: str = typer.Option(settings.LOG_LEVEL, "--log-level", help="Logging level."),
) -> None:
    configure_logging(log_level)


@app.command()
def version() -> None:
    """Print the package version."""
    typer.echo(__version__)


@app.command("simulate")
def simulate_command(
    out: Path = typer.Option(..., "--out", help="Destination CSV."),
    config: Optional[Path] = ConfigOption,
    preset: Optional[str] = PresetOption,
    seed: Optional[int] = SeedOption,
) -> None:
    """Simulate one dataset from the experiment's family and truth."""
    with _handle_errors():
        experiment = _load(config, preset, seed)
        family = make_family(experiment.family)
        truth = family_truth(family, experiment.family)
        dataset = simulate(
            family, truth, experiment.n, RngStreams(experiment.seed).integer_seed("simulation")
        )
        write_csv(dataset, out)
        logger.info("wrote %d rows to %s", dataset.n, out)


@app.command("fit")
def fit_command(
    data: Path = typer.Argument(..., help="Dataset CSV."),
    config: Optional[Path] = ConfigOption,
    preset: Optional[str] = PresetOption,
    seed: Optional[int] = SeedOption,
    out_dir: Optional[Path] = OutDirOption,
    threads: Optional[int] = typer.Option(None, "--threads", min=1, help="Worker cap."),
) -> None:
    """Run the EFI chain on a dataset and write samples, trace and summary."""
    with _handle_errors():
        experiment = _load(config, preset, seed)
        family = make_family(experiment.family)
        dataset = read_csv(data, family)
        out = _out_dir(out_dir)

        samples = run_efi(dataset, family, experiment, threads=threads or experiment.threads)
        samples.to_frame().to_csv(out / "samples.csv", index=False, float_format="%.17g")
        if samples.trace is not None:
            samples.trace.to_csv(out / "trace.csv", index=False, float_format="%.17g")
        for name, frame in diagnostics(samples, dataset, family, experiment.level).items():
            frame.to_csv(out / f"plotdata_{name}.csv", index=False, float_format="%.17g")

        table = summarize(samples, experiment.level, family=family)
        summary = FitSummary(
            family=family.name,
            method="efi",
            level=experiment.level,
            seed=experiment.seed,
            config_hash=samples.meta.get("config_hash", config_hash(experiment)),
            n_draws=samples.n_draws,
            runtime_seconds=float(samples.meta.get("runtime_seconds", 0.0)),
            intervals=[
                IntervalSummary(
                    name=row.name,
                    estimate=_finite(row.estimate),
                    lower=_finite(row.lower),
                    upper=_finite(row.upper),
                )
                for row in table.itertuples(index=False)
            ],
        )
        (out / "summary.json").write_text(summary.model_dump_json(indent=2), encoding="utf-8")
        typer.echo(f"{samples.n_draws} draws written to {out}")


@app.command("replicate")
def replicate_command(
    config: Optional[Path] = ConfigOption,
    preset: Optional[str] = PresetOption,
    seed: Optional[int] = SeedOption,
    out_dir: Optional[Path] = OutDirOption,
    threads: Optional[int] = typer.Option(None, "--threads", min=1, help="Worker cap."),
    method: Optional[List[str]] = typer.Option(None, "--method", "-m", help="Repeatable."),
) -> None:
    """Coverage and width of each method over simulated replicates."""
    with _handle_errors():
        experiment = _load(config, preset, seed)
        if method:
            experiment = parse_config({**config_to_dict(experiment), "methods": method})
        out = _out_dir(out_dir)
        report = coverage_harness(experiment, threads=threads)
        frame = report.to_frame()
        frame.to_csv(out / "coverage.csv", index=False, float_format="%.17g")
        if report.failures:
            typer.echo(f"{len(report.failures)} method run(s) failed; see failures.json", err=True)
            (out / "failures.json").write_text(
                report.model_dump_json(include={"failures"}, indent=2), encoding="utf-8"
            )
        typer.echo(frame.to_string(index=False))


@presets_app.command("list")
def presets_list() -> None:
    for name in list_presets():
        typer.echo(name)


@presets_app.command("show")
def presets_show(name: str = typer.Argument(...)) -> None:
    with _handle_errors():
        typer.echo(dump_config(get_preset(name)), nl=False)


@app.command("baseline")
def baseline_command(
    data: Path = typer.Argument(..., help="Dataset CSV."),
    method: str = typer.Option(..., "--method", "-m", help="Classical method name."),
    config: Optional[Path] = ConfigOption,
    preset: Optional[str] = PresetOption,
    seed: Optional[int] = SeedOption,
) -> None:
    """Run one classical method on a dataset and print a JSON summary."""
    with _handle_errors():
        experiment = _load(config, preset, seed)
        family = make_family(experiment.family)
        dataset = read_csv(data, family)
        started = time.perf_counter()
        result = run_baseline(
            method,
            family,
            dataset,
            experiment.level,
            RngStreams(experiment.seed).integer_seed("baseline"),
        )
        summary = FitSummary(
            family=family.name,
            method=method,
            level=experiment.level,
            seed=experiment.seed,
            config_hash=config_hash(experiment),
            n_draws=0,
            runtime_seconds=time.perf_counter() - started,
            intervals=[
                IntervalSummary(
                    name=name, estimate=result.estimates.get(name), lower=lo, upper=hi
                )
                for name, (lo, hi) in result.intervals.items()
            ],
            reject_null=result.reject,
            extra=result.estimates,
        )
        typer.echo(summary.model_dump_json(indent=2))


def main() -> None:
    try:
        code = app(standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except click.exceptions.Abort:
        sys.exit(1)
    except Exception:
        logger.exception("unexpected failure")
        sys.exit(1)
    if isinstance(code, int) and code:
        sys.exit(code)


if __name__ == "__main__":
    main()
