from rich.console import Group
from rich.panel import Panel
from rich.progress import (
    BarColumn,
    Progress,
    SpinnerColumn,
    TextColumn,
    TimeElapsedColumn,
)
from rich.table import Table

stage_progress = Progress(
    TimeElapsedColumn(),
    TextColumn("[bold purple]{task.description}"),
    SpinnerColumn("simpleDots"),
    BarColumn(),
    TextColumn("{task.completed}/{task.total}"),
)

overall_progress = Progress(TimeElapsedColumn(), BarColumn(), TextColumn("{task.description}"))

progress_group = Group(Panel(stage_progress), overall_progress)


def summary_table(summary: dict, title="Run summary") -> Table:
    table = Table(title=title)
    table.add_column("Key", style="bold")
    table.add_column("Value", justify="right")
    for key, value in summary.items():
        if key == "metrics":
            continue
        if isinstance(value, float):
            value = f"{value:.4f}"
        table.add_row(key, str(value))
    return table


def metrics_table(metrics: dict) -> Table:
    table = Table(title="Test set results (mean)")
    table.add_column("Method", style="bold")
    for column in ("coverage", "cost", "ps_size", "covered_leaves"):
        table.add_column(column, justify="right")
    for method, row in metrics.items():
        table.add_row(
            method,
            f"{row['coverage']:.4f}",
            f"{row['cost']:.4f}",
            f"{row['ps_size']:.4f}",
            f"{row['covered_leaves']:.4f}",
        )
    return table
