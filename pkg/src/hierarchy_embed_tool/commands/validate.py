"""Check whether a hierarchy's semantic dissimilarity is a proper metric."""
import logging
from pathlib import Path
from typing import Optional

import typer

from hierarchy_embed_tool.core.taxonomy import check_metric
from hierarchy_embed_tool.utils.config import ConfigManager, console, exit_on_error, is_verbose
from hierarchy_embed_tool.utils.file_formats import load_taxonomy

logger = logging.getLogger(__name__)

METRIC_VIOLATED_EXIT_CODE = 2


@exit_on_error
def validate(
    ctx: typer.Context,
    hierarchy: Path = typer.Argument(..., help="Hierarchy edge list ('parent child' per line)"),
    classes: Optional[Path] = typer.Option(None, help="Ordered class list (default: all leaves)"),
    config: Optional[Path] = typer.Option(None, "--config", help="key=value run-config file"),
):
    """Report the tree/leaf conditions and every metric axiom violation.

    Exits with status 2 when at least one axiom is violated.
    """
    manager = ConfigManager(config)
    run = manager.resolve("validate", hierarchy=hierarchy, classes=classes)
    run.require_inputs("hierarchy", *(["classes"] if run.classes else []))
    if is_verbose(ctx) or run.verbose:
        manager.display(run)

    taxonomy = load_taxonomy(run.hierarchy, run.classes)
    logger.info(f"Checking metric axioms over {taxonomy.num_classes} classes")
    report = check_metric(taxonomy)
    console.print(report.to_text(), markup=False, highlight=False, soft_wrap=True)

    if not report.ok:
        raise typer.Exit(code=METRIC_VIOLATED_EXIT_CODE)
