"""Readers and writers for every file the command line consumes or produces.

Machine-readable floats are written with 17 significant digits so that a
round trip reproduces the exact 64-bit value.
"""
import csv
import io
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np

from hierarchy_embed_tool.core.embedding import EmbeddingMatrix
from hierarchy_embed_tool.core.errors import FileFormatError, TaxonomyError
from hierarchy_embed_tool.core.mapper import EpochLog, FeatureDataset, LossMode, MapperModel
from hierarchy_embed_tool.core.taxonomy import (
    SimilarityMatrix,
    Taxonomy,
    parse_class_list,
    parse_taxonomy,
    write_edge_list,
)

logger = logging.getLogger(__name__)

TRAINING_LOG_HEADER = ("epoch", "lr", "loss_corr", "loss_cls", "loss_total")


def fmt(value: float) -> str:
    return f"{value:.17g}"


def read_text(path: Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise FileFormatError(f"cannot read {path}: {e}") from e


def write_text(path: Path, text: str):
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as e:
        raise FileFormatError(f"cannot write {path}: {e}") from e
    logger.debug(f"Wrote {path}")


def _parse_floats(tokens: Sequence[str], line_number: int) -> List[float]:
    try:
        return [float(token) for token in tokens]
    except ValueError:
        raise FileFormatError(f"expected numbers, got {' '.join(tokens)!r}", line_number) from None


def load_taxonomy(path: Path, classes_path: Optional[Path] = None) -> Taxonomy:
    """Read a hierarchy edge list and an optional ordered class list."""
    class_list = parse_class_list(read_text(classes_path)) if classes_path else None
    return parse_taxonomy(read_text(path), class_list)


def save_taxonomy(t: Taxonomy, path: Path):
    write_text(path, write_edge_list(t))


def format_embeddings(phi: EmbeddingMatrix) -> str:
    lines = [f"{phi.num_classes} {phi.dim}"]
    for name, row in zip(phi.class_order, phi.rows):
        lines.append(" ".join([name, *(fmt(v) for v in row)]))
    return "\n".join(lines) + "\n"


def write_embeddings(phi: EmbeddingMatrix, path: Path):
    """Header ``n d`` followed by one ``class v1 .. vd`` line per class."""
    write_text(path, format_embeddings(phi))


def read_embeddings(path: Path) -> EmbeddingMatrix:
    lines = [(i, line.split()) for i, line in enumerate(read_text(path).splitlines(), start=1) if line.strip()]
    if not lines:
        raise FileFormatError(f"embedding file {path} is empty")
    header_line, header = lines[0]
    if len(header) != 2:
        raise FileFormatError("expected header 'n d'", header_line)
    try:
        n, d = int(header[0]), int(header[1])
    except ValueError:
        raise FileFormatError(f"expected integer header 'n d', got {' '.join(header)!r}", header_line) from None
    body = lines[1:]
    if len(body) != n:
        raise FileFormatError(f"header announces {n} classes but file has {len(body)} rows")

    names, rows = [], []
    for line_number, tokens in body:
        if len(tokens) != d + 1:
            raise FileFormatError(f"expected a class name and {d} values, got {len(tokens)} fields", line_number)
        names.append(tokens[0])
        rows.append(_parse_floats(tokens[1:], line_number))
    return EmbeddingMatrix(rows=np.array(rows, dtype=np.float64).reshape(n, d), class_order=tuple(names))


def format_similarity(s: SimilarityMatrix) -> str:
    lines = [str(len(s.class_order)), " ".join(s.class_order)]
    lines.extend(" ".join(fmt(v) for v in row) for row in s.values)
    return "\n".join(lines) + "\n"


def write_similarity(s: SimilarityMatrix, path: Path):
    """Header ``n``, a line of class names, then n rows of n values."""
    write_text(path, format_similarity(s))


def read_similarity(path: Path) -> SimilarityMatrix:
    lines = [(i, line.split()) for i, line in enumerate(read_text(path).splitlines(), start=1) if line.strip()]
    if len(lines) < 2:
        raise FileFormatError(f"similarity file {path} needs a size line and a class line")
    header_line, header = lines[0]
    try:
        (n,) = (int(v) for v in header)
    except ValueError:
        raise FileFormatError(f"expected header 'n', got {' '.join(header)!r}", header_line) from None
    names_line, names = lines[1]
    if len(names) != n:
        raise FileFormatError(f"expected {n} class names, got {len(names)}", names_line)
    body = lines[2:]
    if len(body) != n:
        raise FileFormatError(f"header announces {n} rows but file has {len(body)}")
    rows = []
    for line_number, tokens in body:
        if len(tokens) != n:
            raise FileFormatError(f"expected {n} values, got {len(tokens)}", line_number)
        rows.append(_parse_floats(tokens, line_number))
    try:
        return SimilarityMatrix(values=np.array(rows, dtype=np.float64), class_order=tuple(names))
    except TaxonomyError as e:
        raise FileFormatError(str(e)) from e


def _is_number(field: str) -> bool:
    try:
        float(field)
    except ValueError:
        return False
    return True


def _is_header(row: Sequence[str]) -> bool:
    fields = [field.strip() for field in row]
    if not fields or fields[0].lower() not in ("id", "label"):
        return False
    return not any(_is_number(field) for field in fields[1:])


def _dataset_ids(ids: List) -> np.ndarray:
    try:
        return np.array([int(v) for v in ids], dtype=np.int64)
    except ValueError:
        return np.array(ids)


def read_dataset(path: Path, class_order: Sequence[str]) -> FeatureDataset:
    """Read a feature CSV: optional ``id`` column, a class-name ``label`` column, then the features.

    A header row starts with ``id`` or ``label`` and has no numeric field after
    it; without one the label comes first and there is no id column. Ids are
    integers when every id in the file is one.

    Raises:
        FileFormatError: Ragged rows, non-numeric features or an unknown label.
    """
    rows = list(csv.reader(io.StringIO(read_text(path))))
    index = {name: i for i, name in enumerate(class_order)}
    start, has_ids = 0, False
    if rows and _is_header(rows[0]):
        has_ids = rows[0][0].strip().lower() == "id"
        start = 1

    ids, labels, features = [], [], []
    width = None
    for line_number, row in enumerate(rows[start:], start=start + 1):
        if not row or not "".join(row).strip():
            continue
        row = [field.strip() for field in row]
        if has_ids:
            item_id, row = row[0], row[1:]
        else:
            item_id = len(ids)
        if len(row) < 2:
            raise FileFormatError("expected a label and at least one feature", line_number)
        if width is None:
            width = len(row) - 1
        elif len(row) - 1 != width:
            raise FileFormatError(f"expected {width} features, got {len(row) - 1}", line_number)
        if row[0] not in index:
            raise FileFormatError(f"unknown label '{row[0]}'", line_number)
        ids.append(item_id)
        labels.append(index[row[0]])
        features.append(_parse_floats(row[1:], line_number))

    if not features:
        raise FileFormatError(f"dataset {path} has no samples")
    logger.debug(f"Read {len(features)} samples with {width} features from {path}")
    return FeatureDataset(
        features=np.array(features, dtype=np.float64),
        labels=np.array(labels, dtype=np.int64),
        num_classes=len(class_order),
        class_order=tuple(class_order),
        ids=_dataset_ids(ids),
    )


def write_dataset(dataset: FeatureDataset, path: Path, include_ids: bool = False):
    if dataset.class_order is None:
        raise FileFormatError("dataset needs class names to be written")
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    header = ["label", *(f"x{j}" for j in range(dataset.input_dim))]
    writer.writerow(["id", *header] if include_ids else header)
    for item_id, label, x in zip(dataset.ids.tolist(), dataset.labels, dataset.features):
        row = [dataset.class_order[label], *(fmt(v) for v in x)]
        writer.writerow([item_id, *row] if include_ids else row)
    write_text(path, buffer.getvalue())


def format_model(model: MapperModel) -> str:
    """Header ``p d n loss_mode`` then W, b and (when present) the head, row-major."""
    n = model.num_classes or 0
    lines = [f"{model.input_dim} {model.dim} {n} {model.loss_mode.value}"]
    lines.extend(" ".join(fmt(v) for v in row) for row in model.weights)
    lines.append(" ".join(fmt(v) for v in model.bias))
    if model.has_head:
        lines.extend(" ".join(fmt(v) for v in row) for row in model.head_weights)
        lines.append(" ".join(fmt(v) for v in model.head_bias))
    return "\n".join(lines) + "\n"


def write_model(model: MapperModel, path: Path):
    write_text(path, format_model(model))


def read_model(path: Path) -> MapperModel:
    lines = [(i, line.split()) for i, line in enumerate(read_text(path).splitlines(), start=1) if line.strip()]
    if not lines:
        raise FileFormatError(f"model file {path} is empty")
    header_line, header = lines[0]
    if len(header) != 4:
        raise FileFormatError("expected header 'p d n loss_mode'", header_line)
    try:
        p, d, n = (int(v) for v in header[:3])
        loss_mode = LossMode(header[3])
    except ValueError:
        raise FileFormatError(f"invalid model header {' '.join(header)!r}", header_line) from None

    expected = d + 1 + (n + 1 if n else 0)
    if len(lines) - 1 != expected:
        raise FileFormatError(f"model with p={p}, d={d}, n={n} needs {expected} rows, got {len(lines) - 1}")

    def block(offset: int, count: int, width: int) -> np.ndarray:
        values = []
        for line_number, tokens in lines[offset:offset + count]:
            if len(tokens) != width:
                raise FileFormatError(f"expected {width} values, got {len(tokens)}", line_number)
            values.append(_parse_floats(tokens, line_number))
        return np.array(values, dtype=np.float64).reshape(count, width)

    weights = block(1, d, p)
    bias = block(1 + d, 1, d)[0]
    head_weights = head_bias = None
    if n:
        head_weights = block(2 + d, n, d)
        head_bias = block(2 + d + n, 1, n)[0]
    return MapperModel(weights, bias, head_weights, head_bias, loss_mode)


def format_training_log(history: Iterable[EpochLog]) -> str:
    lines = [",".join(TRAINING_LOG_HEADER)]
    for entry in history:
        lines.append(
            ",".join([str(entry.epoch), *(fmt(v) for v in (entry.lr, entry.loss_corr, entry.loss_cls, entry.loss_total))])
        )
    return "\n".join(lines) + "\n"


def write_training_log(history: Iterable[EpochLog], path: Path):
    write_text(path, format_training_log(history))
