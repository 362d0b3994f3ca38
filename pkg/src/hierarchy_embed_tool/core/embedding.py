"""Hierarchy-based class embeddings on the unit hypersphere.

Exact embeddings place class i in the first i coordinates so that its dot
products with all previously placed classes equal their similarities; the
remaining coordinate normalizes the row. Low-dimensional embeddings keep the
top eigenpairs of the similarity matrix instead.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, Sequence, Tuple

import numpy as np

from hierarchy_embed_tool.core.errors import ConvergenceError, EmbeddingError
from hierarchy_embed_tool.core.taxonomy import SimilarityMatrix

logger = logging.getLogger(__name__)

DIAGONAL_TOLERANCE = 1e-12
RADICAND_TOLERANCE = 1e-9
SYMMETRY_TOLERANCE = 1e-12
JACOBI_TOLERANCE = 1e-12
JACOBI_MAX_SWEEPS = 100


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Class centroids, one row per class in ``class_order``."""

    rows: np.ndarray
    class_order: Tuple[str, ...]

    def __post_init__(self):
        rows = np.array(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise EmbeddingError(f"embedding rows must form a matrix, got shape {rows.shape}")
        if len(self.class_order) != rows.shape[0]:
            raise EmbeddingError(f"{rows.shape[0]} embedding rows but {len(self.class_order)} class names")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "class_order", tuple(self.class_order))

    @property
    def num_classes(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    @property
    def is_exact(self) -> bool:
        """Full-dimensional with unit-norm rows."""
        norms = np.linalg.norm(self.rows, axis=1)
        return self.dim == self.num_classes and bool(np.all(np.abs(norms - 1.0) <= 1e-12))

    def gram(self) -> np.ndarray:
        return self.rows @ self.rows.T

    def row(self, name: str) -> np.ndarray:
        try:
            return self.rows[self.class_order.index(name)]
        except ValueError:
            raise EmbeddingError(f"'{name}' has no embedding") from None


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues in descending order and the matching orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sweeps: int = 0

    def reconstruct(self) -> np.ndarray:
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.T


def forward_substitution(lower_triangular: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``L x = rhs`` for lower-triangular ``L`` in O(k^2).

    Entries above the diagonal are ignored.

    Raises:
        EmbeddingError: Shape mismatch or a diagonal entry with magnitude <= 1e-12.
    """
    L = np.asarray(lower_triangular, dtype=np.float64)
    b = np.asarray(rhs, dtype=np.float64)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise EmbeddingError(f"triangular system needs a square matrix, got shape {L.shape}")
    if b.shape != (L.shape[0],):
        raise EmbeddingError(f"right-hand side of shape {b.shape} does not match matrix of order {L.shape[0]}")

    k = L.shape[0]
    x = np.zeros(k, dtype=np.float64)
    for i in range(k):
        pivot = L[i, i]
        if abs(pivot) <= DIAGONAL_TOLERANCE:
            raise EmbeddingError(f"near-zero diagonal entry {pivot:.3g} at row {i} of triangular system")
        x[i] = (b[i] - L[i, :i] @ x[:i]) / pivot
    return x


def _require_unit_diagonal(s: SimilarityMatrix):
    diagonal = np.diag(s.values)
    bad = np.flatnonzero(np.abs(diagonal - 1.0) > DIAGONAL_TOLERANCE)
    if bad.size:
        names = ", ".join(s.class_order[i] for i in bad[:5])
        raise EmbeddingError(
            f"self-similarity differs from 1 for {bad.size} class(es) ({names}); classes must be leaves"
        )


def compute_embeddings(s: SimilarityMatrix) -> EmbeddingMatrix:
    """Exact class embeddings whose pairwise dot products equal ``s``.

    Class 1 is placed at ``[1, 0, ..., 0]``. Class i solves the lower-triangular
    system formed by the previously placed classes for its first i-1
    coordinates and takes the non-negative root ``sqrt(1 - ||x||^2)`` as
    coordinate i. The result is lower-triangular and lies in the positive
    orthant for tree hierarchies.

    Raises:
        EmbeddingError: Non-unit diagonal, a radicand below -1e-9 (similarities
            not realizable, typically a non-tree hierarchy) or a singular
            system (two classes with similarity 1).
    """
    _require_unit_diagonal(s)
    n = s.order
    phi = np.zeros((n, n), dtype=np.float64)
    phi[0, 0] = 1.0

    for i in range(1, n):
        try:
            head = forward_substitution(phi[:i, :i], s.values[:i, i])
        except EmbeddingError as e:
            raise EmbeddingError(
                f"cannot place class '{s.class_order[i]}': {e} (duplicate or degenerate class embedding)"
            ) from e
        radicand = 1.0 - head @ head
        if radicand < -RADICAND_TOLERANCE:
            raise EmbeddingError(
                f"similarities are not realizable on the unit sphere at class '{s.class_order[i]}' "
                f"(radicand {radicand:.3g}); the hierarchy is probably not a tree"
            )
        if radicand < 0:
            logger.debug(f"Clamped radicand {radicand:.3g} to 0 for class '{s.class_order[i]}'")
            radicand = 0.0
        phi[i, :i] = head
        phi[i, i] = math.sqrt(radicand)

    return EmbeddingMatrix(rows=phi, class_order=s.class_order)


def reconstruction_error(phi: EmbeddingMatrix, s: SimilarityMatrix) -> float:
    """Maximum absolute deviation between the embedding's Gram matrix and ``s``."""
    if phi.num_classes != s.order:
        raise EmbeddingError(f"embedding has {phi.num_classes} classes but similarity matrix has order {s.order}")
    return float(np.max(np.abs(phi.gram() - s.values)))


def _rotate(a: np.ndarray, v: np.ndarray, p: int, q: int):
    apq = a[p, q]
    tau = (a[q, q] - a[p, p]) / (2.0 * apq)
    t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + math.sqrt(1.0 + tau * tau))
    c = 1.0 / math.sqrt(1.0 + t * t)
    s = t * c

    col_p = a[:, p].copy()
    col_q = a[:, q].copy()
    a[:, p] = c * col_p - s * col_q
    a[:, q] = s * col_p + c * col_q
    row_p = a[p, :].copy()
    row_q = a[q, :].copy()
    a[p, :] = c * row_p - s * row_q
    a[q, :] = s * row_p + c * row_q
    a[p, q] = a[q, p] = 0.0

    vec_p = v[:, p].copy()
    vec_q = v[:, q].copy()
    v[:, p] = c * vec_p - s * vec_q
    v[:, q] = s * vec_p + c * vec_q


def jacobi_eigh(
    matrix: np.ndarray, tol: float = JACOBI_TOLERANCE, max_sweeps: int = JACOBI_MAX_SWEEPS
) -> Tuple[np.ndarray, np.ndarray, int]:
    """Cyclic Jacobi eigenvalue algorithm for real symmetric matrices.

    Sweeps over all (p, q) pairs above the diagonal, annihilating each entry
    with a plane rotation, until the off-diagonal Frobenius mass drops below
    ``tol * ||matrix||_F``.

    Returns:
        Unsorted eigenvalues, eigenvector columns and the number of sweeps used.

    Raises:
        EmbeddingError: Non-square or asymmetric input.
        ConvergenceError: Sweep budget exhausted.
    """
    a = np.array(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise EmbeddingError(f"eigendecomposition needs a square matrix, got shape {a.shape}")
    asymmetry = float(np.max(np.abs(a - a.T))) if a.size else 0.0
    if asymmetry > SYMMETRY_TOLERANCE:
        raise EmbeddingError(f"matrix is not symmetric (max asymmetry {asymmetry:.3g})")

    n = a.shape[0]
    v = np.eye(n)
    threshold = tol * np.linalg.norm(a)

    for sweep in range(max_sweeps + 1):
        off = float(np.linalg.norm(a - np.diag(np.diag(a))))
        if off <= threshold:
            logger.debug(f"Jacobi converged after {sweep} sweep(s), off-diagonal mass {off:.3g}")
            return np.diag(a).copy(), v, sweep
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] != 0.0:
                    _rotate(a, v, p, q)

    raise ConvergenceError(f"Jacobi eigen solver did not converge within {max_sweeps} sweeps")


def symmetric_eigendecomposition(s: SimilarityMatrix) -> EigenDecomposition:
    """Eigendecomposition ``S = Q diag(w) Q^T`` with eigenvalues sorted descending."""
    values, vectors, sweeps = jacobi_eigh(s.values)
    logger.debug(f"Jacobi eigensolver finished after {sweeps} sweep(s) for {s.order} classes")
    order = np.argsort(-values, kind="stable")
    return EigenDecomposition(eigenvalues=values[order], eigenvectors=vectors[:, order], sweeps=sweeps)


def low_dim_embeddings(s: SimilarityMatrix, k: int) -> EmbeddingMatrix:
    """Rank-k approximation ``Q_k Lambda_k^(1/2)`` of the class embeddings.

    Negative eigenvalues are clamped to 0. Rows are generally not unit-norm.
    """
    if k < 1 or k > s.order:
        raise EmbeddingError(f"embedding dimension must lie in [1, {s.order}], got {k}")
    decomposition = symmetric_eigendecomposition(s)
    eigenvalues = decomposition.eigenvalues[:k]
    if np.any(eigenvalues < 0):
        logger.debug(f"Clamped {int(np.sum(eigenvalues < 0))} negative eigenvalue(s) to 0")
    scale = np.sqrt(np.clip(eigenvalues, 0.0, None))
    return EmbeddingMatrix(rows=decomposition.eigenvectors[:, :k] * scale, class_order=s.class_order)


def reconstruction_curve(s: SimilarityMatrix, dims: Iterable[int]) -> Dict[int, float]:
    """Reconstruction error of the low-dimensional embedding for each requested dimension.

    The eigendecomposition is computed once and truncated per dimension.
    """
    decomposition = symmetric_eigendecomposition(s)
    scale = np.sqrt(np.clip(decomposition.eigenvalues, 0.0, None))
    curve: Dict[int, float] = {}
    for k in sorted(set(dims)):
        if k < 1 or k > s.order:
            raise EmbeddingError(f"embedding dimension must lie in [1, {s.order}], got {k}")
        rows = decomposition.eigenvectors[:, :k] * scale[:k]
        curve[k] = reconstruction_error(EmbeddingMatrix(rows=rows, class_order=s.class_order), s)
    return curve


def default_dims(n: int) -> Sequence[int]:
    """Powers of two below ``n`` followed by ``n`` itself."""
    dims = []
    k = 2
    while k < n:
        dims.append(k)
        k *= 2
    dims.append(n)
    return dims


def pairwise_distances(phi: EmbeddingMatrix) -> np.ndarray:
    """Euclidean distances between all pairs of class embeddings."""
    squared = np.sum(phi.rows ** 2, axis=1)
    gaps = squared[:, None] + squared[None, :] - 2.0 * phi.gram()
    return np.sqrt(np.clip(gaps, 0.0, None))
