"""End-to-end synthetic benchmark: hierarchy -> embeddings -> mappers -> retrieval."""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import typer
from rich.table import Table

from hierarchy_embed_tool.core import mapper
from hierarchy_embed_tool.core.embedding import (
    EmbeddingMatrix,
    compute_embeddings,
    default_dims,
    low_dim_embeddings,
    reconstruction_curve,
    reconstruction_error,
)
from hierarchy_embed_tool.core.mapper import FeatureDataset, LossMode, TrainConfig
from hierarchy_embed_tool.core.retrieval import (
    EvalReport,
    balanced_accuracy,
    evaluate_rankings,
    leave_one_out_rankings,
)
from hierarchy_embed_tool.core.taxonomy import SimilarityMatrix, random_tree, similarity_matrix
from hierarchy_embed_tool.utils.config import console, exit_on_error

logger = logging.getLogger(__name__)

NUM_CLASSES = 20
SAMPLES_PER_CLASS = 50
INPUT_DIM = 32
NOISE_SIGMA = 0.15
LOW_DIMS = (8, 16)


@dataclass(frozen=True)
class BenchmarkRow:
    method: str
    report: EvalReport


def _evaluate(
    method: str,
    features: np.ndarray,
    test: FeatureDataset,
    s: SimilarityMatrix,
    cutoff: int,
    predictions: Optional[np.ndarray] = None,
) -> BenchmarkRow:
    logger.info(f"Evaluating '{method}'")
    report = evaluate_rankings(leave_one_out_rankings(features, test.labels), s, cutoff)
    if predictions is not None:
        report = report.with_balanced_accuracy(balanced_accuracy(test.labels, predictions, s.order))
    return BenchmarkRow(method, report)


def run_benchmark(
    seed: int = 0,
    cutoff: int = 250,
    num_classes: int = NUM_CLASSES,
    samples_per_class: int = SAMPLES_PER_CLASS,
    input_dim: int = INPUT_DIM,
    noise_sigma: float = NOISE_SIGMA,
    epochs: int = 100,
    low_dims: Sequence[int] = LOW_DIMS,
):
    """Train the baseline and both semantic mappers on one synthetic task.

    Each dimension in ``low_dims`` below the number of classes adds an L_CORR
    mapper trained on the rank-k eigendecomposition embedding instead.

    Returns:
        The class embedding, the similarity matrix and one row per method.
    """
    taxonomy = random_tree(num_classes, seed=seed)
    s = similarity_matrix(taxonomy)
    phi = compute_embeddings(s)

    lifting = mapper.make_lifting(input_dim, phi.dim, seed)
    train_set = mapper.generate_synthetic_dataset(
        phi, samples_per_class, noise_sigma, input_dim, seed=seed + 1, lifting=lifting
    )
    test_set = mapper.generate_synthetic_dataset(
        phi, samples_per_class, noise_sigma, input_dim, seed=seed + 2, lifting=lifting
    )

    models = {}
    for mode in (LossMode.CLS, LossMode.CORR, LossMode.CORR_CLS):
        config = TrainConfig(epochs=epochs, seed=seed, loss_mode=mode)
        logger.info(f"Training '{mode.value}' mapper")
        models[mode] = mapper.train(train_set, phi, config).model

    X = test_set.features
    softmax = models[LossMode.CLS]
    rows: List[BenchmarkRow] = [
        _evaluate("Raw features + L2 norm", mapper.l2_normalize(X), test_set, s, cutoff),
        _evaluate(
            "Classification-based",
            mapper.extract_features(softmax, X, normalize=False),
            test_set,
            s,
            cutoff,
            softmax.predict(X),
        ),
        _evaluate(
            "Classification-based + L2 norm",
            mapper.extract_features(softmax, X),
            test_set,
            s,
            cutoff,
            softmax.predict(X),
        ),
        _evaluate(
            "Semantic embeddings (L_CORR)",
            mapper.extract_features(models[LossMode.CORR], X),
            test_set,
            s,
            cutoff,
            mapper.nearest_centroid_predictions(models[LossMode.CORR], phi, X),
        ),
        _evaluate(
            "Semantic embeddings (L_CORR+CLS)",
            mapper.extract_features(models[LossMode.CORR_CLS], X),
            test_set,
            s,
            cutoff,
            models[LossMode.CORR_CLS].predict(X),
        ),
    ]
    for k in sorted(set(low_dims)):
        if k >= phi.dim:
            continue
        phi_k = low_dim_embeddings(s, k)
        logger.info(f"Training 'corr' mapper on {k}-dimensional class embeddings")
        model_k = mapper.train(train_set, phi_k, TrainConfig(epochs=epochs, seed=seed, loss_mode=LossMode.CORR)).model
        rows.append(
            _evaluate(
                f"Semantic embeddings (L_CORR, {k} dims)",
                mapper.extract_features(model_k, X),
                test_set,
                s,
                cutoff,
                mapper.nearest_centroid_predictions(model_k, phi_k, X),
            )
        )
    return phi, s, rows


def _curve_table(phi: EmbeddingMatrix, s: SimilarityMatrix) -> Table:
    table = Table(title="Low-dimensional class embeddings", show_header=True, header_style="bold cyan")
    table.add_column("dims", justify="right", style="cyan")
    table.add_column("max |error|", justify="right", style="green")
    for k, value in reconstruction_curve(s, default_dims(phi.num_classes)).items():
        table.add_row(str(k), f"{value:.4g}")
    return table


@exit_on_error
def demo(
    seed: int = typer.Option(0, "--seed", help="Random seed for hierarchy, data and training"),
    cutoff: int = typer.Option(250, "--K", help="HP curve cutoff K"),
    epochs: int = typer.Option(100, "--epochs", help="Training epochs per mapper"),
):
    """Compare semantic embeddings against feature baselines on a synthetic 20-class task."""
    phi, s, rows = run_benchmark(seed=seed, cutoff=cutoff, epochs=epochs)

    console.print(
        f"classes: {phi.num_classes}, samples/class: {SAMPLES_PER_CLASS}, "
        f"input dim: {INPUT_DIM}, noise: {NOISE_SIGMA}, seed: {seed}",
        highlight=False,
    )
    console.print(f"embedding reconstruction error: {reconstruction_error(phi, s):.4g}", highlight=False)

    table = Table(title="Synthetic retrieval benchmark", show_header=True, header_style="bold cyan")
    table.add_column("Method", style="cyan")
    table.add_column(f"mAHP@{cutoff}", justify="right", style="green")
    table.add_column("mAP", justify="right", style="green")
    table.add_column("Balanced accuracy", justify="right", style="yellow")
    for row in rows:
        accuracy = row.report.balanced_accuracy
        table.add_row(
            row.method,
            f"{row.report.mahp:.4f}",
            f"{row.report.map:.4f}",
            "-" if accuracy is None else f"{accuracy:.4f}",
        )
    console.print(table)
    console.print(_curve_table(phi, s))
