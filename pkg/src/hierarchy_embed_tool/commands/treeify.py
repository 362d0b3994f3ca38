"""Convert a DAG hierarchy into a tree."""
from pathlib import Path
from typing import Optional

import typer

from hierarchy_embed_tool.commands.validate import METRIC_VIOLATED_EXIT_CODE
from hierarchy_embed_tool.core.errors import ConfigError
from hierarchy_embed_tool.core.taxonomy import check_metric, tree_from_dag
from hierarchy_embed_tool.utils.config import ConfigManager, console, exit_on_error, is_verbose
from hierarchy_embed_tool.utils.file_formats import load_taxonomy, save_taxonomy


@exit_on_error
def treeify(
    ctx: typer.Context,
    hierarchy: Path = typer.Argument(..., help="Hierarchy edge list ('parent child' per line)"),
    out: Optional[Path] = typer.Option(None, "--out", help="Where to write the tree edge list"),
    classes: Optional[Path] = typer.Option(None, help="Ordered class list (default: all leaves)"),
    config: Optional[Path] = typer.Option(None, "--config", help="key=value run-config file"),
):
    """Keep one root path per concept (fewest new nodes) and write the resulting tree."""
    manager = ConfigManager(config)
    run = manager.resolve("treeify", hierarchy=hierarchy, out=out, classes=classes)
    run.require_inputs("hierarchy", *(["classes"] if run.classes else []))
    if is_verbose(ctx) or run.verbose:
        manager.display(run)
    if run.out is None:
        raise ConfigError("--out is required")

    taxonomy = load_taxonomy(run.hierarchy, run.classes)
    tree = tree_from_dag(taxonomy)
    save_taxonomy(tree, run.out)

    console.print(f"edges: {len(taxonomy.edges)} -> {len(tree.edges)}", highlight=False)
    console.print(f"written: {run.out}", highlight=False, soft_wrap=True)
    report = check_metric(tree)
    console.print(report.to_text(), markup=False, highlight=False, soft_wrap=True)
    if not report.ok:
        raise typer.Exit(code=METRIC_VIOLATED_EXIT_CODE)
