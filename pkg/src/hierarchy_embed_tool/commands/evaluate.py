"""Leave-one-out retrieval evaluation with hierarchical precision."""
import logging
from pathlib import Path
from typing import Optional

import numpy as np
import typer
from rich.panel import Panel

from hierarchy_embed_tool.core.errors import EvaluationError
from hierarchy_embed_tool.core.mapper import extract_features, l2_normalize, nearest_centroid_predictions
from hierarchy_embed_tool.core.retrieval import balanced_accuracy, evaluate_rankings, leave_one_out_rankings
from hierarchy_embed_tool.core.taxonomy import similarity_matrix
from hierarchy_embed_tool.utils.config import ConfigManager, console, exit_on_error, is_verbose
from hierarchy_embed_tool.utils.file_formats import (
    load_taxonomy,
    read_dataset,
    read_embeddings,
    read_model,
    write_text,
)

logger = logging.getLogger(__name__)


@exit_on_error
def evaluate(
    ctx: typer.Context,
    data: Path = typer.Argument(..., help="Features CSV (id,label,x0,..), or a dataset CSV with --model"),
    hierarchy: Path = typer.Argument(..., help="Hierarchy edge list used for the similarities"),
    model: Optional[Path] = typer.Option(None, "--model", help="Mapper model applied to the dataset first"),
    embeddings: Optional[Path] = typer.Option(
        None, "--embeddings", help="Class embeddings for nearest-centroid balanced accuracy"
    ),
    classes: Optional[Path] = typer.Option(None, help="Ordered class list (default: all leaves)"),
    cutoff: Optional[int] = typer.Option(None, "--K", help="HP curve cutoff K (default: 250)"),
    normalize: bool = typer.Option(False, "--normalize", help="L2-normalize plain feature vectors"),
    out_curve: Optional[Path] = typer.Option(None, "--out-curve", help="Write the mean HP@k curve as CSV"),
    out_summary: Optional[Path] = typer.Option(None, "--out-summary", help="Write the summary block"),
    config: Optional[Path] = typer.Option(None, "--config", help="key=value run-config file"),
):
    """Use every item as a query against all others and report mAHP@K, mAP and P@k."""
    manager = ConfigManager(config)
    run = manager.resolve(
        "eval",
        features=data,
        hierarchy=hierarchy,
        model=model,
        embeddings=embeddings,
        classes=classes,
        cutoff=cutoff,
        normalize=normalize or None,
        out_curve=out_curve,
        out_summary=out_summary,
    )
    optional = [name for name in ("model", "embeddings", "classes") if getattr(run, name)]
    run.require_inputs("features", "hierarchy", *optional)
    if is_verbose(ctx) or run.verbose:
        manager.display(run)

    taxonomy = load_taxonomy(run.hierarchy, run.classes)
    s = similarity_matrix(taxonomy)
    dataset = read_dataset(run.features, taxonomy.classes)
    features = dataset.features

    mapper_model = read_model(run.model) if run.model else None
    phi = None
    if run.embeddings:
        phi = read_embeddings(run.embeddings)
        if phi.class_order != taxonomy.classes:
            raise EvaluationError("embedding classes do not match the hierarchy's class order")

    predictions = None
    if mapper_model is not None:
        features = extract_features(mapper_model, dataset.features)
        if mapper_model.has_head:
            predictions = mapper_model.predict(dataset.features)
        elif phi is not None:
            predictions = nearest_centroid_predictions(mapper_model, phi, dataset.features)
    else:
        if run.normalize:
            features = l2_normalize(features)
        if phi is not None:
            if phi.dim != features.shape[1]:
                raise EvaluationError(f"features have dimension {features.shape[1]} but embeddings have {phi.dim}")
            predictions = np.argmax(features @ phi.rows.T, axis=1)

    logger.info(f"Evaluating {len(dataset)} leave-one-out queries with K={run.cutoff}")
    report = evaluate_rankings(leave_one_out_rankings(features, dataset.labels, dataset.ids), s, run.cutoff)
    if predictions is not None:
        report = report.with_balanced_accuracy(balanced_accuracy(dataset.labels, predictions, s.order))

    console.print(Panel("\n".join(report.summary_lines()), title="Retrieval evaluation", expand=False))
    if run.out_curve:
        write_text(run.out_curve, report.curve_csv())
    if run.out_summary:
        write_text(run.out_summary, "\n".join(report.summary_lines(digits=17)) + "\n")
