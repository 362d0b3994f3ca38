import numpy as np
import pytest

from hierarchy_embed_tool.core.embedding import (
    EmbeddingMatrix,
    compute_embeddings,
    default_dims,
    forward_substitution,
    jacobi_eigh,
    low_dim_embeddings,
    pairwise_distances,
    reconstruction_curve,
    reconstruction_error,
    symmetric_eigendecomposition,
)
from hierarchy_embed_tool.core.errors import ConvergenceError, EmbeddingError
from hierarchy_embed_tool.core.taxonomy import (
    SimilarityMatrix,
    dissimilarity,
    parse_taxonomy,
    random_tree,
    similarity_matrix,
)
from hierarchy_embed_tool.fixtures import STAR_TREE, TOY_TREE


def toy_similarity():
    return similarity_matrix(parse_taxonomy(TOY_TREE.read_text()))


def random_symmetric(rng, n):
    a = rng.standard_normal((n, n))
    return (a + a.T) / 2


class TestForwardSubstitution:
    """Test the lower-triangular solver."""

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_dense_solver(self, seed):
        """Test against numpy's general solver."""
        rng = np.random.default_rng(seed)
        L = np.tril(rng.uniform(-1, 1, (6, 6)))
        np.fill_diagonal(L, rng.uniform(0.5, 2.0, 6))
        b = rng.standard_normal(6)
        np.testing.assert_allclose(forward_substitution(L, b), np.linalg.solve(L, b), atol=1e-12)

    def test_ignores_upper_triangle(self):
        """Test that entries above the diagonal are not read."""
        L = np.array([[2.0, 99.0], [1.0, 4.0]])
        np.testing.assert_allclose(forward_substitution(L, np.array([2.0, 9.0])), [1.0, 2.0])

    def test_zero_pivot(self):
        """Test that a near-zero diagonal entry is rejected."""
        with pytest.raises(EmbeddingError, match="diagonal"):
            forward_substitution(np.array([[1.0, 0.0], [1.0, 1e-13]]), np.array([1.0, 1.0]))

    def test_shape_mismatch(self):
        """Test input shape validation."""
        with pytest.raises(EmbeddingError):
            forward_substitution(np.eye(3), np.ones(2))
        with pytest.raises(EmbeddingError):
            forward_substitution(np.ones((2, 3)), np.ones(2))


class TestComputeEmbeddings:
    """Test the exact class embedding construction."""

    def test_toy_gram_matches_similarities(self):
        """Test that the 3-class embedding reproduces S entrywise."""
        s = toy_similarity()
        phi = compute_embeddings(s)
        assert phi.class_order == s.class_order
        assert phi.rows.shape == (3, 3)
        assert reconstruction_error(phi, s) <= 1e-12
        np.testing.assert_allclose(phi.rows[0], [1.0, 0.0, 0.0])
        assert phi.is_exact

    @pytest.mark.parametrize("seed", range(5))
    def test_structure_on_random_trees(self, seed):
        """Test unit norms, triangular shape and non-negative last coordinates."""
        phi = compute_embeddings(similarity_matrix(random_tree(25, seed=seed)))
        np.testing.assert_allclose(np.linalg.norm(phi.rows, axis=1), 1.0, atol=1e-12)
        assert np.all(np.triu(phi.rows, k=1) == 0.0)
        assert np.all(np.diag(phi.rows) >= 0.0)

    def test_star_tree_gives_identity(self):
        """Test that pairwise dissimilar classes become orthonormal."""
        phi = compute_embeddings(similarity_matrix(parse_taxonomy(STAR_TREE.read_text())))
        np.testing.assert_allclose(phi.rows, np.eye(5), atol=1e-15)

    def test_distances_follow_dissimilarity(self):
        """Test that ||phi_i - phi_j|| = sqrt(2 d_G(i, j))."""
        t = random_tree(12, seed=7)
        phi = compute_embeddings(similarity_matrix(t))
        distances = pairwise_distances(phi)
        for i, u in enumerate(t.classes):
            for j, v in enumerate(t.classes):
                assert distances[i, j] == pytest.approx(np.sqrt(2 * dissimilarity(t, u, v)), abs=1e-7)

    def test_unrealizable_similarities(self):
        """Test that a negative radicand names the offending class."""
        s = SimilarityMatrix(np.array([[1.0, 0.9, 0.0], [0.9, 1.0, 0.9], [0.0, 0.9, 1.0]]), ("a", "b", "c"))
        with pytest.raises(EmbeddingError, match="'c'"):
            compute_embeddings(s)

    def test_duplicate_classes(self):
        """Test that two classes with similarity 1 make the system singular."""
        s = SimilarityMatrix(np.array([[1.0, 1.0, 0.5], [1.0, 1.0, 0.5], [0.5, 0.5, 1.0]]), ("a", "b", "c"))
        with pytest.raises(EmbeddingError, match="cannot place class 'c'"):
            compute_embeddings(s)

    def test_non_unit_diagonal(self):
        """Test that inner-node classes are rejected."""
        s = SimilarityMatrix(np.array([[1.0, 0.5], [0.5, 0.8]]), ("a", "b"))
        with pytest.raises(EmbeddingError, match="leaves"):
            compute_embeddings(s)

    def test_tiny_negative_radicand_is_clamped(self):
        """Test that radicands just below zero become a zero coordinate."""
        s = SimilarityMatrix(np.array([[1.0, 1.0 + 1e-13], [1.0 + 1e-13, 1.0]]), ("a", "b"))
        phi = compute_embeddings(s)
        assert phi.rows[1, 1] == 0.0

    def test_row_lookup(self):
        """Test access to a class embedding by name."""
        phi = compute_embeddings(toy_similarity())
        np.testing.assert_array_equal(phi.row("cat"), phi.rows[0])
        with pytest.raises(EmbeddingError):
            phi.row("zebra")


class TestJacobi:
    """Test the cyclic Jacobi eigen solver."""

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_numpy(self, seed):
        """Test eigenvalues, orthonormality and reconstruction against numpy."""
        rng = np.random.default_rng(seed)
        a = random_symmetric(rng, 8)
        values, vectors, sweeps = jacobi_eigh(a)
        np.testing.assert_allclose(np.sort(values), np.linalg.eigvalsh(a), atol=1e-10)
        np.testing.assert_allclose(vectors.T @ vectors, np.eye(8), atol=1e-10)
        np.testing.assert_allclose((vectors * values) @ vectors.T, a, atol=1e-10)
        assert sweeps >= 1

    def test_diagonal_needs_no_sweep(self):
        """Test that an already diagonal matrix returns immediately."""
        values, vectors, sweeps = jacobi_eigh(np.diag([3.0, 1.0, 2.0]))
        assert sweeps == 0
        np.testing.assert_array_equal(values, [3.0, 1.0, 2.0])
        np.testing.assert_array_equal(vectors, np.eye(3))

    def test_rejects_asymmetric(self):
        """Test symmetry validation."""
        with pytest.raises(EmbeddingError, match="not symmetric"):
            jacobi_eigh(np.array([[1.0, 2.0], [0.0, 1.0]]))
        with pytest.raises(EmbeddingError, match="square"):
            jacobi_eigh(np.ones((2, 3)))

    def test_sweep_budget(self):
        """Test that exhausting the sweep budget raises ConvergenceError."""
        with pytest.raises(ConvergenceError):
            jacobi_eigh(random_symmetric(np.random.default_rng(0), 6), max_sweeps=0)

    def test_sorted_descending(self):
        """Test the eigenvalue order of the decomposition."""
        decomposition = symmetric_eigendecomposition(toy_similarity())
        assert np.all(np.diff(decomposition.eigenvalues) <= 0)
        np.testing.assert_allclose(decomposition.reconstruct(), toy_similarity().values, atol=1e-10)

    def test_sweep_count_recorded(self):
        """Test that an already diagonal similarity needs no sweep and the toy tree needs at least one."""
        star = similarity_matrix(parse_taxonomy(STAR_TREE.read_text()))
        assert symmetric_eigendecomposition(star).sweeps == 0
        assert symmetric_eigendecomposition(toy_similarity()).sweeps >= 1


class TestLowDimEmbeddings:
    """Test the eigendecomposition route."""

    @pytest.mark.parametrize("n", [10, 50])
    def test_full_rank_reproduces_similarities(self, n):
        """Test that k = n reproduces S."""
        s = similarity_matrix(random_tree(n, seed=n))
        phi = low_dim_embeddings(s, n)
        assert reconstruction_error(phi, s) <= 1e-6

    def test_toy_two_dims(self):
        """Test that two dimensions give a 3x2 embedding with a larger error."""
        s = toy_similarity()
        phi = low_dim_embeddings(s, 2)
        assert phi.rows.shape == (3, 2)
        assert not phi.is_exact
        assert reconstruction_error(phi, s) > reconstruction_error(compute_embeddings(s), s)

    def test_curve_is_non_increasing(self):
        """Test that the error does not grow with the dimension."""
        s = similarity_matrix(random_tree(30, seed=1))
        curve = reconstruction_curve(s, range(1, 31))
        values = [curve[k] for k in sorted(curve)]
        assert all(b <= a + 1e-10 for a, b in zip(values, values[1:]))
        assert values[-1] <= 1e-6

    def test_dimension_out_of_range(self):
        """Test dimension validation."""
        s = toy_similarity()
        with pytest.raises(EmbeddingError):
            low_dim_embeddings(s, 0)
        with pytest.raises(EmbeddingError):
            low_dim_embeddings(s, 4)
        with pytest.raises(EmbeddingError):
            reconstruction_curve(s, [2, 5])

    def test_default_dims(self):
        """Test the default dimension ladder."""
        assert default_dims(20) == [2, 4, 8, 16, 20]
        assert default_dims(16) == [2, 4, 8, 16]
        assert default_dims(1) == [1]


class TestEmbeddingMatrix:
    """Test the embedding matrix container."""

    def test_read_only(self):
        """Test that rows cannot be modified in place."""
        phi = EmbeddingMatrix(np.eye(2), ("a", "b"))
        with pytest.raises(ValueError):
            phi.rows[0, 0] = 2.0

    def test_name_count_mismatch(self):
        """Test that every row needs a class name."""
        with pytest.raises(EmbeddingError):
            EmbeddingMatrix(np.eye(2), ("a",))
