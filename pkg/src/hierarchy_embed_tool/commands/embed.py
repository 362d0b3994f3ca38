"""Compute class embeddings from a hierarchy."""
import logging
from pathlib import Path
from typing import Optional

import typer
from rich.table import Table

from hierarchy_embed_tool.core.embedding import (
    compute_embeddings,
    default_dims,
    low_dim_embeddings,
    reconstruction_curve,
    reconstruction_error,
)
from hierarchy_embed_tool.core.errors import ConfigError, TaxonomyError
from hierarchy_embed_tool.core.taxonomy import similarity_matrix, tree_from_dag
from hierarchy_embed_tool.utils.config import ConfigManager, console, exit_on_error, is_verbose
from hierarchy_embed_tool.utils.file_formats import load_taxonomy, write_embeddings, write_similarity

logger = logging.getLogger(__name__)


@exit_on_error
def embed(
    ctx: typer.Context,
    hierarchy: Path = typer.Argument(..., help="Hierarchy edge list ('parent child' per line)"),
    out: Optional[Path] = typer.Option(None, "--out", help="Where to write the embedding file"),
    dims: Optional[int] = typer.Option(None, "--dims", help="Target dimension (eigendecomposition path)"),
    treeify: bool = typer.Option(False, "--treeify", help="Tree-ify a DAG hierarchy before embedding"),
    classes: Optional[Path] = typer.Option(None, help="Ordered class list (default: all leaves)"),
    similarity_out: Optional[Path] = typer.Option(None, "--similarity-out", help="Also write the similarity matrix"),
    config: Optional[Path] = typer.Option(None, "--config", help="key=value run-config file"),
):
    """Embed every class on the unit hypersphere so that dot products equal similarities.

    Without --dims the exact construction is used, which needs a tree.
    """
    manager = ConfigManager(config)
    run = manager.resolve(
        "embed",
        hierarchy=hierarchy,
        out=out,
        dims=dims,
        treeify=treeify or None,
        classes=classes,
        similarity_out=similarity_out,
    )
    run.require_inputs("hierarchy", *(["classes"] if run.classes else []))
    if is_verbose(ctx) or run.verbose:
        manager.display(run)
    if run.out is None:
        raise ConfigError("--out is required")

    taxonomy = load_taxonomy(run.hierarchy, run.classes)
    if run.treeify:
        taxonomy = tree_from_dag(taxonomy)
    s = similarity_matrix(taxonomy)

    if run.dims is None:
        if not taxonomy.is_tree:
            raise TaxonomyError(
                "hierarchy is not a tree: exact embeddings need a tree (use --treeify, or --dims for the "
                "eigendecomposition path)"
            )
        phi = compute_embeddings(s)
    else:
        phi = low_dim_embeddings(s, run.dims)

    write_embeddings(phi, run.out)
    if run.similarity_out:
        write_similarity(s, run.similarity_out)

    error = reconstruction_error(phi, s)
    logger.info(f"Embedded {phi.num_classes} classes into {phi.dim} dimensions")
    console.print(f"classes: {phi.num_classes}", highlight=False)
    console.print(f"dims: {phi.dim}", highlight=False)
    console.print(f"reconstruction_error: {error:.4g}", highlight=False)

    if is_verbose(ctx) or run.verbose:
        table = Table(title="Low-dimensional reconstruction", show_header=True, header_style="bold cyan")
        table.add_column("dims", justify="right", style="cyan")
        table.add_column("max |error|", justify="right", style="green")
        for k, value in reconstruction_curve(s, default_dims(s.order)).items():
            table.add_row(str(k), f"{value:.4g}")
        console.print(table)
