"""Train a mapper from feature vectors onto class embeddings."""
import logging
from pathlib import Path
from typing import Optional

import typer
from rich.progress import BarColumn, MofNCompleteColumn, Progress, SpinnerColumn, TextColumn

from hierarchy_embed_tool.core import mapper
from hierarchy_embed_tool.core.errors import ConfigError
from hierarchy_embed_tool.utils.config import ConfigManager, console, exit_on_error, is_verbose
from hierarchy_embed_tool.utils.file_formats import (
    read_dataset,
    read_embeddings,
    write_model,
    write_training_log,
)

logger = logging.getLogger(__name__)


def default_log_path(out: Path) -> Path:
    return out.with_name(out.name + ".log.csv")


@exit_on_error
def train(
    ctx: typer.Context,
    dataset: Path = typer.Argument(..., help="Dataset CSV (label, x0, x1, ...)"),
    embeddings: Path = typer.Argument(..., help="Class embedding file written by 'embed'"),
    out: Optional[Path] = typer.Option(None, "--out", help="Where to write the model file"),
    loss: Optional[str] = typer.Option(None, "--loss", help="Loss: corr | corr+cls | cls (default: corr)"),
    lam: Optional[float] = typer.Option(None, "--lambda", help="Weight of the classification loss (default: 0.1)"),
    lr: Optional[float] = typer.Option(None, "--lr", help="Base learning rate (default: 0.5)"),
    min_lr: Optional[float] = typer.Option(None, "--min-lr", help="Cosine floor (default: 1e-6)"),
    epochs: Optional[int] = typer.Option(None, "--epochs", help="Number of epochs (default: 100)"),
    batch_size: Optional[int] = typer.Option(None, "--batch-size", help="Mini-batch size (default: 32)"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Random seed (default: 0)"),
    schedule: Optional[str] = typer.Option(
        None, "--schedule", help="constant | cosine | cosine-restarts (default: cosine)"
    ),
    cycle_len: Optional[int] = typer.Option(None, "--cycle-len", help="First restart cycle length (default: 12)"),
    cycle_mult: Optional[float] = typer.Option(None, "--cycle-mult", help="Cycle length multiplier (default: 2)"),
    clip_norm: Optional[float] = typer.Option(None, "--clip-norm", help="Gradient norm limit (default: 10)"),
    log: Optional[Path] = typer.Option(None, "--log", help="Training log CSV (default: <out>.log.csv)"),
    config: Optional[Path] = typer.Option(None, "--config", help="key=value run-config file"),
):
    """Fit the linear mapper with mini-batch SGD and write the model and its training log."""
    manager = ConfigManager(config)
    run = manager.resolve(
        "train",
        dataset=dataset,
        embeddings=embeddings,
        out=out,
        loss_mode=loss,
        lam=lam,
        lr=lr,
        min_lr=min_lr,
        epochs=epochs,
        batch_size=batch_size,
        seed=seed,
        schedule=schedule,
        cycle_len=cycle_len,
        cycle_mult=cycle_mult,
        clip_norm=clip_norm,
        log=log,
    )
    run.require_inputs("dataset", "embeddings")
    if is_verbose(ctx) or run.verbose:
        manager.display(run)
    if run.out is None:
        raise ConfigError("--out is required")
    train_config = run.to_train_config()

    phi = read_embeddings(run.embeddings)
    data = read_dataset(run.dataset, phi.class_order)
    logger.info(
        f"Training '{train_config.loss_mode.value}' mapper: {len(data)} samples, "
        f"p={data.input_dim}, d={phi.dim}, {train_config.epochs} epochs"
    )

    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        MofNCompleteColumn(),
        console=console,
        transient=True,
    ) as progress:
        task = progress.add_task("Training", total=train_config.epochs)
        result = mapper.train(data, phi, train_config, on_epoch=lambda entry: progress.advance(task))

    write_model(result.model, run.out)
    log_path = run.log or default_log_path(run.out)
    write_training_log(result.history, log_path)

    corr, cls, total = mapper.evaluate_losses((data.features, data.labels), result.model, phi, train_config)
    console.print(f"epochs: {len(result.history)}", highlight=False)
    console.print(f"loss_corr: {corr:.4g}", highlight=False)
    if result.model.has_head:
        console.print(f"loss_cls: {cls:.4g}", highlight=False)
    console.print(f"loss_total: {total:.4g}", highlight=False)
    console.print(f"model: {run.out}", highlight=False, soft_wrap=True)
    console.print(f"log: {log_path}", highlight=False, soft_wrap=True)
