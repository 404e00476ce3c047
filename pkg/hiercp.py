#!/usr/bin/env python3

__license__ = "MIT"

import json
import logging
import sys

import click
from rich.console import Console
from rich.live import Live
from rich.table import Table

from hiercp_core import __version__
from hiercp_core.artifacts import (
    ArtifactBundle,
    ingest_scores,
    load_model,
    save_model,
    synthetic_scores_frame,
)
from hiercp_core.baselines import (
    crc_recall_calibrate,
    crc_recall_predict,
    hcc_no_correction_predict,
    hcc_no_pruning_predict,
    lca_baseline_predict,
    standard_cp_predict,
)
from hiercp_core.config import (
    COVER_MODES,
    METHODS,
    RunConfigModel,
    resolve_run_config,
    validate_run_config,
)
from hiercp_core.conformal import (
    PredictorFamily,
    calibrate_cover,
    calibrate_family,
    conformity_score,
    predict_cover,
    threshold_at,
)
from hiercp_core.covers import (
    CoverSpace,
    NolCover,
    brute_force_nol_covers,
    build_cover_space,
    cover_size_histogram,
    depth_limited_covers,
    enumerate_nol_covers,
    is_nol_cover,
)
from hiercp_core.evaluation import (
    SynthConfig,
    coverage_indicator,
    default_beta,
    evaluate_run,
    split_data,
    sweep_beta,
    synth_arrays,
    synth_generate,
)
from hiercp_core.inference import (
    CostParams,
    HccPrediction,
    bonferroni,
    dynamic_prune,
    hcc_predict,
    set_cost,
)
from hiercp_core.paths import run_artifact_paths
from hiercp_core.propagation import (
    LeafScores,
    label_indicator,
    propagate_scores,
    propagated_label_set,
)
from hiercp_core.runner import (
    EXIT_OK,
    PipelineAbortError,
    error_record,
    exit_code_for,
    run_pipeline,
)
from hiercp_core.taxonomy import (
    Taxonomy,
    lca_set,
    leaf_cover,
    load_taxonomy,
    node_depth,
    parse_taxonomy,
)
from hiercp_core.ui import (
    metrics_table,
    overall_progress,
    progress_group,
    stage_progress,
    summary_table,
)

logger = logging.getLogger()

__all__ = [
    "CliRichReporter",
    "CostParams",
    "CoverSpace",
    "HccPrediction",
    "LeafScores",
    "NolCover",
    "PipelineAbortError",
    "PredictorFamily",
    "RunConfigModel",
    "Taxonomy",
    "bonferroni",
    "brute_force_nol_covers",
    "calibrate_cover",
    "calibrate_family",
    "configure_logging",
    "conformity_score",
    "coverage_indicator",
    "crc_recall_calibrate",
    "crc_recall_predict",
    "default_beta",
    "depth_limited_covers",
    "dynamic_prune",
    "enumerate_nol_covers",
    "evaluate_run",
    "fail",
    "hcc_no_correction_predict",
    "hcc_no_pruning_predict",
    "hcc_predict",
    "ingest_scores",
    "is_nol_cover",
    "label_indicator",
    "lca_baseline_predict",
    "lca_set",
    "leaf_cover",
    "load_model",
    "load_taxonomy",
    "main",
    "node_depth",
    "parse_taxonomy",
    "predict_cover",
    "propagate_scores",
    "propagated_label_set",
    "run_pipeline",
    "save_model",
    "set_cost",
    "split_data",
    "standard_cp_predict",
    "sweep_beta",
    "synth_generate",
    "threshold_at",
]


class CliRichReporter:
    def __init__(self, console=None):
        self.console = console or Console()
        self.live = None
        self.overall_task_id = None

    def start(self, *, total, command):
        self.overall_task_id = overall_progress.add_task(f"hiercp {command}", total=total)
        self.live = Live(progress_group, console=self.console)
        self.live.__enter__()

    def finish(self):
        if self.live is not None:
            self.live.__exit__(None, None, None)
            self.live = None

    def add_stage(self, *, name, total):
        return stage_progress.add_task(name, total=total)

    def advance_stage(self, task_id, *, advance=1):
        stage_progress.update(task_id, advance=advance)
        if self.overall_task_id is not None:
            overall_progress.update(self.overall_task_id, advance=advance)

    def finish_stage(self, task_id, *, description):
        stage_progress.update(task_id, description=description)
        stage_progress.stop_task(task_id)

    def emit_summary(self, summary):
        self.console.print(summary_table(summary))
        if summary.get("metrics"):
            self.console.print(metrics_table(summary["metrics"]))


def configure_logging(do_debug):
    global logger

    if do_debug:
        logging.basicConfig(
            filename="debug.log",
            filemode="a",
            level=logging.DEBUG,
            format="%(asctime)s - %(levelname)s - %(message)s",
        )
        logger = logging.getLogger()
        logger.disabled = False
    else:
        logging.basicConfig(
            level=logging.WARN,
            format="%(asctime)s - %(levelname)s - %(message)s",
        )
        logger = logging.getLogger()
        logger.disabled = True


def fail(exc):
    logger.debug("fail: type=%s message=%s", type(exc).__name__, exc)
    click.echo(json.dumps(error_record(exc), sort_keys=True), err=True)
    sys.exit(exit_code_for(exc))


def run_options(func):
    options = [
        click.option("--taxonomy", "-t", "taxonomy_path", default=None, help="Taxonomy JSON document"),
        click.option("--scores", "-s", "scores_path", default=None, help="Score CSV file"),
        click.option("--model", "-m", "model_path", default=None, help="Model artifact to load"),
        click.option("--alpha", "-a", type=float, default=None, help="Miscoverage level in [0, 1)"),
        click.option("--beta", "-b", default=None, help="Cost trade-off, a number or 'auto'"),
        click.option(
            "--method",
            type=click.Choice(METHODS + ("all",), case_sensitive=False),
            default=None,
            help="Prediction method",
        ),
        click.option("--split", "split_ratio", type=float, default=None, help="Calibration share"),
        click.option("--seed", type=int, default=None, help="Seed for the calibration/test split"),
        click.option("--max-covers", type=int, default=None, help="Cover enumeration limit"),
        click.option(
            "--cover-mode",
            type=click.Choice(COVER_MODES, case_sensitive=False),
            default=None,
            help="Cover search space",
        ),
        click.option("--renormalize", is_flag=True, help="Divide off-simplex score rows by their sum"),
        click.option("--pad-empty", is_flag=True, help="Pad empty sets with the top-scoring member"),
        click.option("--threads", type=int, default=None, help="Worker threads"),
        click.option("--output", "-o", "output_path", default=None, help="Output directory"),
        click.option("--betas", default=None, help="Comma separated beta values for sweep-beta"),
        click.option("--beta-points", type=int, default=None, help="Sweep points on [0, 1]"),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def cli_values(values):
    values = dict(values)
    for flag in ("renormalize", "pad_empty"):
        values[flag] = True if values.get(flag) else None
    if values.get("method"):
        values["method"] = values["method"].lower()
    return values


def resolve(ctx, values, *, require, command):
    cfg = resolve_run_config(ctx.obj["config_file"], cli_values(values))
    validate_run_config(cfg, require=require, command=command)
    logger.debug("resolve: command=%s cfg=%s", command, cfg.model_dump())
    return cfg


def run_command(ctx, command, require, values):
    try:
        cfg = resolve(ctx, values, require=require, command=command)
        run_pipeline(cfg, command=command, reporter=CliRichReporter())
    except (ValueError, RuntimeError) as exc:
        fail(exc)
    click.echo(f"Artifacts written to {cfg.output_path}")
    sys.exit(EXIT_OK)


@click.group()
@click.version_option(__version__, prog_name="hiercp")
@click.option(
    "--config-file",
    "-c",
    "config_file",
    default=None,
    help="TOML config file with a [run] section (default: hiercp.toml when present)",
)
@click.option(
    "--debug",
    "-d",
    "do_debug",
    is_flag=True,
    help="Enable debug logging to debug.log logfile",
)
@click.pass_context
def main(ctx, config_file, do_debug):
    """Hierarchical conformal prediction sets over a class taxonomy."""
    configure_logging(do_debug)
    ctx.ensure_object(dict)
    ctx.obj["config_file"] = config_file


@main.command()
@click.option("--taxonomy", "-t", "taxonomy_path", default=None, help="Taxonomy JSON document")
@click.option("--scores", "-s", "scores_path", default=None, help="Optional score CSV to check")
@click.option("--renormalize", is_flag=True, help="Divide off-simplex score rows by their sum")
@click.pass_context
def validate(ctx, **values):
    """Parse the taxonomy (and scores) and print a summary."""
    try:
        cfg = resolve(ctx, values, require=("taxonomy_path",), command="validate")
        t = load_taxonomy(cfg.taxonomy_path)
        summary = {
            "root": t.names[t.root],
            "nodes": t.size,
            "leaves": len(t.leaf_indices),
            "depth": t.depth,
        }
        if t.internal_indices:
            summary["default_beta"] = default_beta(t)
        if cfg.scores_path:
            table = ingest_scores(cfg.scores_path, t, renormalize=cfg.renormalize, require_truth=False)
            summary["instances"] = len(table)
            summary["labelled"] = table.labelled
    except (ValueError, RuntimeError) as exc:
        fail(exc)
    Console().print(summary_table(summary, title="Taxonomy"))
    sys.exit(EXIT_OK)


@main.command()
@click.option("--taxonomy", "-t", "taxonomy_path", default=None, help="Taxonomy JSON document")
@click.option("--max-covers", type=int, default=None, help="Cover enumeration limit")
@click.option(
    "--cover-mode",
    type=click.Choice(COVER_MODES, case_sensitive=False),
    default=None,
    help="Cover search space",
)
@click.option("--list", "do_list", is_flag=True, help="Print every cover as a line of node names")
@click.pass_context
def covers(ctx, do_list, **values):
    """Enumerate the non-overlapping leaf covers of a taxonomy."""
    try:
        cfg = resolve(ctx, values, require=("taxonomy_path",), command="covers")
        t = load_taxonomy(cfg.taxonomy_path)
        space = build_cover_space(t, cfg.cover_mode, cfg.max_covers)
    except (ValueError, RuntimeError) as exc:
        fail(exc)

    console = Console()
    console.print(
        summary_table(
            {
                "covers": len(space),
                "mode": space.mode,
                "node subsets": 2**t.size,
                "skipped levels": len(space.skipped_levels),
            },
            title="Cover space",
        )
    )
    histogram = Table(title="Cover sizes")
    histogram.add_column("Size", justify="right")
    histogram.add_column("Covers", justify="right")
    for size, count in cover_size_histogram(space).items():
        histogram.add_row(str(size), str(count))
    console.print(histogram)
    if do_list:
        for cover in space:
            click.echo(f"{cover.cover_id}: {', '.join(t.names_of(cover.members))}")
    sys.exit(EXIT_OK)


@main.command()
@run_options
@click.pass_context
def calibrate(ctx, **values):
    """Calibrate one conformal predictor per cover on every score row."""
    run_command(ctx, "calibrate", ("taxonomy_path", "scores_path"), values)


@main.command()
@run_options
@click.pass_context
def predict(ctx, **values):
    """Predict every score row with a saved model."""
    run_command(ctx, "predict", ("taxonomy_path", "scores_path", "model_path"), values)


@main.command()
@run_options
@click.pass_context
def evaluate(ctx, **values):
    """Split, calibrate, predict and score the test part."""
    run_command(ctx, "evaluate", ("taxonomy_path", "scores_path"), values)


@main.command("sweep-beta")
@run_options
@click.pass_context
def sweep_beta(ctx, **values):
    """Rerun the cost selection for a range of beta values."""
    run_command(ctx, "sweep-beta", ("taxonomy_path", "scores_path"), values)


@main.command()
@click.option("--taxonomy", "-t", "taxonomy_path", default=None, help="Taxonomy JSON document")
@click.option("--output", "-o", "output_path", default=None, help="Output directory")
@click.option("--seed", type=int, default=None, help="Generator seed")
@click.option("--n", "n_instances", type=click.IntRange(min=1), default=1000, help="Instances")
@click.option("--signal", type=click.FloatRange(min=0), default=4.0, help="Logit boost of the true leaf")
@click.option("--noise", type=click.FloatRange(min=0), default=1.0, help="Logit noise scale")
@click.pass_context
def synth(ctx, n_instances, signal, noise, **values):
    """Write a synthetic score file for a taxonomy."""
    try:
        cfg = resolve(ctx, values, require=("taxonomy_path",), command="synth")
        t = load_taxonomy(cfg.taxonomy_path)
        scores, true_leaves = synth_arrays(
            SynthConfig(taxonomy=t, n=n_instances, signal=signal, noise=noise, seed=cfg.seed)
        )
        bundle = ArtifactBundle()
        path = run_artifact_paths(cfg.output_path)["scores"]
        bundle.stage_frame(path, synthetic_scores_frame(t, scores, true_leaves))
        bundle.commit()
    except (ValueError, RuntimeError, OSError) as exc:
        fail(exc)
    click.echo(f"Wrote {n_instances} synthetic rows to {path}")
    sys.exit(EXIT_OK)


if __name__ == "__main__":
    main()
