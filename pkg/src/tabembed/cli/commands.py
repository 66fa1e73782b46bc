"""CLI commands for tabembed."""

import functools
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import click

from tabembed import __version__
from tabembed.api.experiment import EmbeddingExperiment, precompute as precompute_table_file, verify_table
from tabembed.core.config import RunConfig, parse_method_flags
from tabembed.core.trainer import SWEEP_AXES
from tabembed.utils.constants import (
    CHECKPOINT_FILE,
    COMPARE_FILE,
    DEFAULT_OUTPUT_DIR,
    EXIT_CONFIG_ERROR,
    EXIT_DATA_ERROR,
    EXIT_RUNTIME_ERROR,
    PARAMS_FILE,
    SWEEP_FILE,
)
from tabembed.utils.errors import ConfigurationError, DataError, OutOfVocabularyError, SchemaError
from tabembed.utils.formatters import OutputFormatter

RULE = "━" * 72


def _exit_code(error: Exception) -> int:
    if isinstance(error, (ConfigurationError, SchemaError)):
        return EXIT_CONFIG_ERROR
    if isinstance(error, (DataError, OutOfVocabularyError)):
        return EXIT_DATA_ERROR
    return EXIT_RUNTIME_ERROR


def handle_errors(command: Callable) -> Callable:
    """Print the error and exit with the code of its class."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except Exception as e:
            click.echo(click.style(f"\n❌ Error: {e}", fg="red", bold=True), err=True)
            logging.getLogger(__name__).debug("command failed", exc_info=True)
            sys.exit(_exit_code(e))

    return wrapper


def run_options(command: Callable) -> Callable:
    """Dataset, method and training flags shared by every training command."""
    options = [
        click.option("--data", type=click.Path(), help="CSV dataset path"),
        click.option("--schema", type=click.Path(), help="Schema file for --data"),
        click.option("--synth", type=click.Choice(["numeric", "categorical"]), help="Synthetic task instead of --data"),
        click.option("--n", type=int, help="Synthetic row count"),
        click.option("--v", type=int, help="Synthetic vocabulary size"),
        click.option(
            "--method",
            "methods",
            multiple=True,
            help="<field>=<method>, or a bare method for every field that supports it (repeatable)",
        ),
        click.option("--d", type=int, help="Embedding size"),
        click.option("--dhat", "d_hat", type=int, help="Deep categorical identifier size"),
        click.option("--layers", type=int, help="Deep numerical transformation depth"),
        click.option("--width", type=int, help="Deep numerical hidden width"),
        click.option("--cap", type=float, help="ExU activation cap"),
        click.option("--buckets", type=int, help="Discretization buckets"),
        click.option("--hash-functions", type=int, help="Hash functions for the hashing method"),
        click.option("--hash-buckets", type=int, help="Hash buckets for the hashing method"),
        click.option("--lr", type=float, help="Adam learning rate"),
        click.option("--batch", type=int, help="Mini-batch size"),
        click.option("--patience", type=int, help="Early-stopping patience in epochs"),
        click.option("--max-epochs", type=int, help="Epoch limit per run"),
        click.option("--seeds", type=int, help="Number of seeded runs"),
        click.option("--seed", type=int, help="Master seed (falls back to $DTE_SEED)"),
        click.option("--out", type=click.Path(), help=f"Output directory (default: {DEFAULT_OUTPUT_DIR})"),
        click.option("--config", "config_file", type=click.Path(), help="Flat key = value config file"),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def _resolve(config_file: Optional[str], methods: tuple, **flags: Any) -> RunConfig:
    default, per_field = parse_method_flags(methods)
    overrides: Dict[str, Any] = dict(flags)
    overrides["default_method"] = default
    overrides["methods"] = per_field
    return RunConfig.resolve(overrides, config_file=config_file)


def _header(title: str) -> None:
    click.echo("╔" + "═" * 70 + "╗")
    click.echo("║" + f"TABEMBED v{__version__}".center(70) + "║")
    click.echo("║" + title.center(70) + "║")
    click.echo("╚" + "═" * 70 + "╝")
    click.echo()


def _load(experiment: EmbeddingExperiment) -> None:
    config = experiment.config
    source = f"synthetic '{config.synth}' task" if config.synth else config.data
    click.echo("🔍 Loading data from: " + click.style(str(source), fg="cyan", bold=True))
    summary = experiment.load_data()
    click.echo(click.style("✓ Data loaded successfully", fg="green"))
    click.echo(f"  ├─ Rows: {summary.n_rows} {summary.split_sizes}")
    click.echo(f"  ├─ Positive rate: {OutputFormatter.format_ratio(summary.positive_rate)}")
    click.echo(f"  ├─ Numerical fields: {', '.join(summary.numerical_fields) or '-'}")
    categorical = ", ".join(f"{k} (v={v})" for k, v in summary.categorical_fields.items())
    click.echo(f"  └─ Categorical fields: {categorical or '-'}")
    click.echo()


def _files(paths: List[Path]) -> None:
    click.echo("   Files created:")
    for i, path in enumerate(paths):
        branch = "└─" if i == len(paths) - 1 else "├─"
        click.echo(f"   {branch} 📄 {path}")
    click.echo()


def _param_table(rows: List[Dict[str, Any]]) -> None:
    click.echo(f"   {'Field':18s} │ {'Kind':11s} │ {'Method':11s} │ {'Dim':>5s} │ {'Params':>12s} │ {'Network':>10s} │ {'Extras':>7s}")
    click.echo("   " + "─" * 95)
    for row in rows:
        click.echo("   " + OutputFormatter.format_param_row(row))
    click.echo()


@click.group()
@click.version_option(version=__version__)
@click.option("--verbose", "-v", is_flag=True, help="Log debug output")
def cli(verbose):
    """
    tabembed - Deep embeddings for tabular data

    Train embedding models, report parameter counts, precompute embedding tables
    and run sweeps.
    """
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s: %(message)s",
    )


@cli.command()
@run_options
@handle_errors
def train(config_file, methods, **flags):
    """
    Train over every seed and write report.json, epochs.csv and model.ckpt.

    Example:
        tabembed train --synth numeric --n 5000 --method deep
    """
    config = _resolve(config_file, methods, **flags)
    _header("Training")
    experiment = EmbeddingExperiment(config)
    _load(experiment)

    click.echo(f"🏋️  Training {config.seeds} run(s) (seed {config.seed})...")
    report = experiment.train()
    click.echo()
    click.echo(OutputFormatter.format_report_summary(report.to_dict()))
    click.echo()
    click.echo(RULE)
    click.echo()

    click.echo(f"💾 Exporting results to: {click.style(config.out, fg='cyan', bold=True)}")
    _files(experiment.export())
    click.echo(click.style("✅ Training complete!", fg="green", bold=True))


@cli.command()
@run_options
@handle_errors
def params(config_file, methods, **flags):
    """
    Report per-field parameter counts and write params.csv.

    Example:
        tabembed params --data clicks.csv --schema clicks.schema --method user=lookup
    """
    config = _resolve(config_file, methods, **flags)
    experiment = EmbeddingExperiment(config)
    frame = experiment.param_report()

    click.echo("📊 Parameter accounting:")
    click.echo()
    _param_table(frame.to_dict("records"))
    _files([p for p in experiment.export() if p.name == PARAMS_FILE])


@cli.command(name="precompute")
@click.option("--checkpoint", required=True, type=click.Path(), help=f"Model checkpoint ({CHECKPOINT_FILE})")
@click.option("--field", "field_name", required=True, help="Deep categorical field")
@click.option("--out", type=click.Path(), help="Table file (default: <field>.table next to the checkpoint)")
@click.option("--check", "check_table", type=click.Path(), help="Verify an existing table instead of writing one")
@handle_errors
def precompute_cmd(checkpoint, field_name, out, check_table):
    """
    Materialize the full embedding table of a deep categorical field.

    Example:
        tabembed precompute --checkpoint out/model.ckpt --field entity
    """
    if check_table is not None:
        cache = verify_table(checkpoint, check_table)
        click.echo(click.style(f"✓ Table for '{cache.field_name}' matches {checkpoint}", fg="green"))
        return

    out = out or str(Path(checkpoint).parent / f"{field_name}.table")
    cache = precompute_table_file(checkpoint, field_name, out)
    rows, dim = cache.full_table.shape
    click.echo(click.style(f"✓ Precomputed {rows} x {dim} table for '{field_name}'", fg="green"))
    _files([Path(out)])


@cli.command()
@run_options
@click.option("--axis", required=True, type=click.Choice(sorted(SWEEP_AXES)), help="Swept hyper-parameter")
@click.option("--values", "values", required=True, help="Comma-separated values, e.g. 10,20,30")
@handle_errors
def sweep(config_file, methods, axis, values, **flags):
    """
    Train once per value of --axis and write sweep.csv.

    Example:
        tabembed sweep --synth numeric --axis depth --values 1,2,3,4,5,6
    """
    try:
        parsed = [int(v) for v in values.split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(f"expected comma-separated integers, got '{values}'", "--values") from None

    config = _resolve(config_file, methods, **flags)
    _header(f"Sweep over {axis}")
    experiment = EmbeddingExperiment(config)
    _load(experiment)

    frame = experiment.sweep(axis, parsed)
    for _, row in frame.iterrows():
        click.echo(
            f"   {axis} = {int(row['value']):4d} │ AUC {OutputFormatter.format_auc(row['auc_mean'], row['auc_std'])} │ "
            f"params {OutputFormatter.format_count(row['total_params'])}"
        )
    click.echo()
    _files([p for p in experiment.export() if p.name == SWEEP_FILE])


@cli.command()
@run_options
@click.option(
    "--methods",
    "compared",
    default="deep,expand,linear,none",
    show_default=True,
    help="Comma-separated default methods to compare",
)
@handle_errors
def compare(config_file, methods, compared, **flags):
    """
    Train the same data under several methods and write compare.csv.

    Example:
        tabembed compare --synth numeric --methods deep,linear,none
    """
    config = _resolve(config_file, methods, **flags)
    _header("Method comparison")
    experiment = EmbeddingExperiment(config)
    _load(experiment)

    frame = experiment.compare([m.strip() for m in compared.split(",") if m.strip()])
    for _, row in frame.iterrows():
        click.echo(
            f"   {row['method']:12s} │ AUC {OutputFormatter.format_auc(row['auc_mean'], row['auc_std'])} │ "
            f"embedding params {OutputFormatter.format_count(row['embedding_params'])}"
        )
    click.echo()
    _files([p for p in experiment.export() if p.name == COMPARE_FILE])


@cli.command()
@click.option("--synth", required=True, type=click.Choice(["numeric", "categorical"]), help="Synthetic task")
@click.option("--n", type=int, help="Row count")
@click.option("--v", type=int, help="Vocabulary size (categorical task)")
@click.option("--seed", type=int, help="Seed (falls back to $DTE_SEED)")
@click.option("--out", type=click.Path(), help=f"Output directory (default: {DEFAULT_OUTPUT_DIR})")
@handle_errors
def synth(synth, n, v, seed, out):
    """
    Write a synthetic task as CSV plus schema file.

    Example:
        tabembed synth --synth categorical --n 20000 --v 1000 --out data/
    """
    config = RunConfig.resolve({"synth": synth, "n": n, "v": v, "seed": seed, "out": out})
    paths = EmbeddingExperiment(config).export_data(stem=synth)
    click.echo(click.style(f"✓ Generated {config.n} rows", fg="green"))
    _files(paths)


@cli.command()
@click.option("--data", required=True, type=click.Path(), help="CSV dataset path")
@click.option("--schema", required=True, type=click.Path(), help="Schema file")
@click.option("--seed", type=int, help="Split seed (falls back to $DTE_SEED)")
@handle_errors
def validate(data, schema, seed):
    """
    Validate a CSV against its schema without training.

    Example:
        tabembed validate --data clicks.csv --schema clicks.schema
    """
    config = RunConfig.resolve({"data": data, "schema": schema, "seed": seed})
    click.echo(f"🔍 Validating data from: {click.style(data, fg='cyan', bold=True)}")
    click.echo()
    summary = EmbeddingExperiment(config).load_data()
    click.echo(click.style("✅ Data validation passed!", fg="green", bold=True))
    click.echo()
    click.echo("Data Summary:")
    click.echo(f"  ├─ Rows: {summary.n_rows}")
    click.echo(f"  ├─ Positives: {summary.n_positive}")
    click.echo(f"  ├─ Negatives: {summary.n_negative}")
    click.echo(f"  ├─ Split sizes: {summary.split_sizes}")
    click.echo(f"  ├─ Numerical fields: {len(summary.numerical_fields)}")
    click.echo(f"  └─ Categorical fields: {summary.categorical_fields}")


if __name__ == "__main__":
    cli()
