"""Class hierarchies and the LCS-based semantic (dis)similarity between classes."""
import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from hierarchy_embed_tool.core.errors import TaxonomyError, TaxonomyParseError

logger = logging.getLogger(__name__)

# Dissimilarities are multiples of 1/height, so anything above rounding noise is real.
METRIC_TOLERANCE = 1e-12


class Taxonomy:
    """Immutable rooted DAG of concepts with an ordered list of classes of interest.

    An edge ``(parent, child)`` means that ``child`` is a sub-class of ``parent``.
    Heights and ancestor sets are computed once at construction, so every query
    afterwards is read-only and safe to share between threads.
    """

    def __init__(self, graph: nx.DiGraph, classes: Sequence[str]):
        if graph.number_of_nodes() == 0:
            raise TaxonomyError("hierarchy has no nodes")
        if not nx.is_directed_acyclic_graph(graph):
            cycle = nx.find_cycle(graph)
            chain = " -> ".join([edge[0] for edge in cycle] + [cycle[-1][1]])
            raise TaxonomyError(f"cycle detected: {chain}")

        roots = sorted(node for node, degree in graph.in_degree() if degree == 0)
        if len(roots) != 1:
            raise TaxonomyError(f"expected exactly one root, found {len(roots)}: {', '.join(roots)}")

        classes = tuple(classes)
        if not classes:
            raise TaxonomyError("taxonomy needs at least one class")
        unknown = [c for c in classes if c not in graph]
        if unknown:
            raise TaxonomyError(f"class identifier not a node: {', '.join(unknown)}")
        if len(set(classes)) != len(classes):
            duplicates = sorted({c for c in classes if classes.count(c) > 1})
            raise TaxonomyError(f"duplicate class identifiers: {', '.join(duplicates)}")

        self._graph = nx.freeze(graph.copy())
        self._root = roots[0]
        self._classes = classes
        self._class_index = {name: i for i, name in enumerate(classes)}

        order = list(nx.lexicographical_topological_sort(self._graph))
        self._ancestors: Dict[str, FrozenSet[str]] = {}
        for node in order:
            ancestors = {node}
            for parent in self._graph.predecessors(node):
                ancestors |= self._ancestors[parent]
            self._ancestors[node] = frozenset(ancestors)

        self._heights: Dict[str, int] = {}
        for node in reversed(order):
            children = list(self._graph.successors(node))
            self._heights[node] = 1 + max(self._heights[c] for c in children) if children else 0
        self._height = max(self._heights.values())

    @classmethod
    def from_edges(
        cls,
        edges: Iterable[Tuple[str, str]],
        classes: Optional[Sequence[str]] = None,
        nodes: Optional[Iterable[str]] = None,
    ) -> "Taxonomy":
        """Build a taxonomy from ``(parent, child)`` pairs.

        Args:
            edges: Hyponymy edges.
            classes: Ordered classes of interest. Defaults to all leaves in
                lexicographic order.
            nodes: Extra nodes without edges (e.g. a single-node hierarchy).
        """
        graph = nx.DiGraph()
        if nodes is not None:
            graph.add_nodes_from(nodes)
        for parent, child in edges:
            if graph.has_edge(parent, child):
                raise TaxonomyError(f"duplicate edge {parent} -> {child}")
            graph.add_edge(parent, child)
        if classes is None:
            classes = sorted(node for node, degree in graph.out_degree() if degree == 0)
        return cls(graph, classes)

    @property
    def graph(self) -> nx.DiGraph:
        """Frozen view of the hierarchy graph."""
        return self._graph

    @property
    def root(self) -> str:
        return self._root

    @property
    def classes(self) -> Tuple[str, ...]:
        return self._classes

    @property
    def num_classes(self) -> int:
        return len(self._classes)

    @property
    def nodes(self) -> Tuple[str, ...]:
        return tuple(sorted(self._graph.nodes))

    @property
    def edges(self) -> Tuple[Tuple[str, str], ...]:
        return tuple(sorted(self._graph.edges))

    @property
    def leaves(self) -> Tuple[str, ...]:
        return tuple(sorted(node for node, degree in self._graph.out_degree() if degree == 0))

    @property
    def height(self) -> int:
        """Height of the whole hierarchy, i.e. the maximum node height."""
        return self._height

    @property
    def is_tree(self) -> bool:
        return all(degree == 1 for node, degree in self._graph.in_degree() if node != self._root)

    def require_node(self, node: str):
        if node not in self._heights:
            raise TaxonomyError(f"unknown node '{node}'")

    def class_index(self, name: str) -> int:
        try:
            return self._class_index[name]
        except KeyError:
            raise TaxonomyError(f"'{name}' is not a class of this taxonomy") from None

    def parents(self, node: str) -> Tuple[str, ...]:
        self.require_node(node)
        return tuple(sorted(self._graph.predecessors(node)))

    def children(self, node: str) -> Tuple[str, ...]:
        self.require_node(node)
        return tuple(sorted(self._graph.successors(node)))

    def ancestors(self, node: str) -> FrozenSet[str]:
        """All ancestors of ``node``, the node itself included."""
        self.require_node(node)
        return self._ancestors[node]

    def node_height(self, node: str) -> int:
        self.require_node(node)
        return self._heights[node]

    def __contains__(self, node: str) -> bool:
        return node in self._heights

    def __repr__(self) -> str:
        return (
            f"Taxonomy(root={self._root!r}, nodes={self._graph.number_of_nodes()}, "
            f"edges={self._graph.number_of_edges()}, classes={len(self._classes)})"
        )


@dataclass(frozen=True)
class SimilarityMatrix:
    """Symmetric matrix of pairwise class similarities in a fixed class order."""

    values: np.ndarray
    class_order: Tuple[str, ...]

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise TaxonomyError(f"similarity matrix must be square, got shape {values.shape}")
        if len(self.class_order) != values.shape[0]:
            raise TaxonomyError(
                f"similarity matrix has order {values.shape[0]} but {len(self.class_order)} class names"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "class_order", tuple(self.class_order))

    @property
    def order(self) -> int:
        return self.values.shape[0]

    def index(self, name: str) -> int:
        try:
            return self.class_order.index(name)
        except ValueError:
            raise TaxonomyError(f"'{name}' is not part of the similarity matrix") from None


@dataclass(frozen=True)
class MetricViolation:
    """A single failed metric axiom with its witnesses and both sides of the check."""

    axiom: str
    witnesses: Tuple[str, ...]
    lhs: float
    rhs: float

    def to_line(self) -> str:
        return f"{self.axiom} {','.join(self.witnesses)} {self.lhs:.17g} {self.rhs:.17g}"


@dataclass(frozen=True)
class MetricReport:
    """Structural conditions and axiom violations of d_G over the classes of a taxonomy."""

    is_tree: bool
    classes_are_leaves: bool
    violations: Tuple[MetricViolation, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_text(self) -> str:
        lines = [
            f"tree: {'yes' if self.is_tree else 'no'}",
            f"classes_are_leaves: {'yes' if self.classes_are_leaves else 'no'}",
            f"violations: {len(self.violations)}",
        ]
        lines.extend(v.to_line() for v in self.violations)
        lines.append("metric: OK" if self.ok else "metric: VIOLATED")
        return "\n".join(lines)


def parse_taxonomy(text: str, class_list: Optional[Sequence[str]] = None) -> Taxonomy:
    """Parse a hierarchy edge list ("parent child" per line, '#' comments).

    Args:
        text: Edge-list document.
        class_list: Ordered classes of interest. Defaults to all leaves in
            lexicographic order.

    Returns:
        The validated taxonomy.

    Raises:
        TaxonomyParseError: Malformed line or duplicate edge (with line number).
        TaxonomyError: Cycle, several roots or unknown class identifiers.
    """
    if not text or not text.strip():
        raise TaxonomyParseError("hierarchy document is empty")

    edges: List[Tuple[str, str]] = []
    first_seen: Dict[Tuple[str, str], int] = {}
    for line_number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise TaxonomyParseError(f"expected 'parent child', got {raw_line.strip()!r}", line_number)
        edge = (parts[0], parts[1])
        if edge in first_seen:
            raise TaxonomyParseError(
                f"duplicate edge {edge[0]} -> {edge[1]} (first seen on line {first_seen[edge]})", line_number
            )
        first_seen[edge] = line_number
        edges.append(edge)

    if not edges:
        raise TaxonomyParseError("hierarchy document contains no edges")
    logger.debug(f"Parsed {len(edges)} edges")
    return Taxonomy.from_edges(edges, classes=class_list)


def parse_class_list(text: str) -> List[str]:
    """Parse a class list document: one identifier per line, order significant."""
    classes: List[str] = []
    for line_number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if len(line.split()) != 1:
            raise TaxonomyParseError(f"expected a single class identifier, got {line!r}", line_number)
        if line in classes:
            raise TaxonomyParseError(f"duplicate class identifier '{line}'", line_number)
        classes.append(line)
    if not classes:
        raise TaxonomyParseError("class list is empty")
    return classes


def write_edge_list(t: Taxonomy) -> str:
    """Render a taxonomy in the hierarchy file format."""
    return "".join(f"{parent} {child}\n" for parent, child in t.edges)


def node_height(t: Taxonomy, u: str) -> int:
    """Length of the longest downward path from ``u`` to a leaf."""
    return t.node_height(u)


def lcs(t: Taxonomy, u: str, v: str) -> str:
    """Lowest common subsumer of two nodes.

    Among the common ancestors without a child that is itself a common
    ancestor, the one with the smallest height wins; remaining ties (DAGs
    only) go to the lexicographically smallest identifier.
    """
    common = t.ancestors(u) & t.ancestors(v)
    lowest = [w for w in common if not any(child in common for child in t.children(w))]
    return min(lowest, key=lambda w: (t.node_height(w), w))


def dissimilarity(t: Taxonomy, u: str, v: str) -> float:
    """d_G(u, v): height of the LCS divided by the height of the hierarchy."""
    t.require_node(u)
    t.require_node(v)
    if t.height == 0:
        raise TaxonomyError("hierarchy height is 0, dissimilarity is undefined")
    return t.node_height(lcs(t, u, v)) / t.height


def similarity(t: Taxonomy, u: str, v: str) -> float:
    """s_G(u, v) = 1 - d_G(u, v)."""
    return 1.0 - dissimilarity(t, u, v)


def similarity_matrix(t: Taxonomy) -> SimilarityMatrix:
    """Pairwise class similarities in the taxonomy's class order."""
    classes = t.classes
    n = len(classes)
    values = np.empty((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i, n):
            values[i, j] = values[j, i] = similarity(t, classes[i], classes[j])
    return SimilarityMatrix(values=values, class_order=classes)


def _dissimilarity_table(t: Taxonomy) -> np.ndarray:
    classes = t.classes
    n = len(classes)
    table = np.empty((n, n), dtype=np.float64)
    for i, j in itertools.product(range(n), repeat=2):
        table[i, j] = dissimilarity(t, classes[i], classes[j])
    return table


def check_metric(t: Taxonomy) -> MetricReport:
    """Check whether d_G is a proper metric on the classes of ``t``.

    Reports the structural conditions (tree, leaf classes) and exhaustively
    tests non-negativity, symmetry, identity of indiscernibles and the
    triangle inequality over all class pairs and triples.
    """
    classes = t.classes
    is_tree = t.is_tree
    classes_are_leaves = all(not t.children(c) for c in classes)
    if t.height == 0:
        return MetricReport(is_tree=is_tree, classes_are_leaves=classes_are_leaves)

    d = _dissimilarity_table(t)
    n = len(classes)
    violations: List[MetricViolation] = []

    for i, j in itertools.product(range(n), repeat=2):
        if d[i, j] < 0:
            violations.append(MetricViolation("non-negativity", (classes[i], classes[j]), d[i, j], 0.0))

    for i, j in itertools.combinations(range(n), 2):
        if d[i, j] != d[j, i]:
            violations.append(MetricViolation("symmetry", (classes[i], classes[j]), d[i, j], d[j, i]))

    for i, j in itertools.product(range(n), repeat=2):
        if (i == j) != (d[i, j] == 0):
            violations.append(
                MetricViolation("identity-of-indiscernibles", (classes[i], classes[j]), d[i, j], 0.0)
            )

    triangle = []
    for v in range(n):
        rhs = d[:, v][:, None] + d[v, :][None, :]
        for u, w in np.argwhere(d > rhs + METRIC_TOLERANCE):
            triangle.append((int(u), v, int(w), rhs[u, w]))
    for u, v, w, rhs_value in sorted(triangle):
        violations.append(
            MetricViolation("triangle-inequality", (classes[u], classes[v], classes[w]), d[u, w], rhs_value)
        )

    if violations:
        logger.info(f"d_G violates metric axioms {len(violations)} time(s)")
    return MetricReport(is_tree=is_tree, classes_are_leaves=classes_are_leaves, violations=tuple(violations))


def _added_nodes(path: Tuple[str, ...], tree_parent: Dict[str, Optional[str]]) -> int:
    deepest = max(i for i, node in enumerate(path) if node in tree_parent)
    return len(path) - 1 - deepest


def tree_from_dag(t: Taxonomy) -> Taxonomy:
    """Extract a tree from a rooted DAG, keeping every node and all classes.

    Starts from the union of root paths of all concepts that have exactly one
    root path. Remaining concepts (classes in their fixed order, then the rest
    lexicographically) are attached through the root path that adds the fewest
    new nodes; ties go to the lexicographically smallest path. A path is
    attached below its deepest node that is already part of the tree.
    """
    graph = t.graph
    root = t.root

    path_counts: Dict[str, int] = {}
    for node in nx.topological_sort(graph):
        parents = list(graph.predecessors(node))
        path_counts[node] = sum(path_counts[p] for p in parents) if parents else 1

    tree_parent: Dict[str, Optional[str]] = {root: None}
    for node, count in path_counts.items():
        if node != root and count == 1:
            (tree_parent[node],) = graph.predecessors(node)

    pending = list(t.classes) + sorted(set(graph.nodes) - set(t.classes))
    resolved = 0
    for node in pending:
        if node in tree_parent:
            continue
        paths = sorted(tuple(path) for path in nx.all_simple_paths(graph, root, node))
        if not paths:
            raise TaxonomyError(f"no root path exists for '{node}'")
        best = min(paths, key=lambda path: (_added_nodes(path, tree_parent), path))
        deepest = max(i for i, n in enumerate(best) if n in tree_parent)
        for i in range(deepest + 1, len(best)):
            tree_parent[best[i]] = best[i - 1]
        resolved += 1
        logger.debug(f"Attached '{node}' via {' -> '.join(best)}")

    logger.info(f"Tree-ified hierarchy: {resolved} concept(s) with several root paths resolved")
    edges = [(parent, child) for child, parent in tree_parent.items() if parent is not None]
    return Taxonomy.from_edges(edges, classes=t.classes, nodes=tree_parent.keys())


def random_tree(num_classes: int, seed: int = 0, max_children: int = 4) -> Taxonomy:
    """Seeded random tree whose leaves are exactly ``num_classes`` classes.

    Classes are named ``c00``, ``c01``, ...; inner nodes ``n0`` (the root),
    ``n1``, ... The leaf set is split recursively into 2..max_children groups.
    """
    if num_classes < 1:
        raise TaxonomyError("random_tree needs at least one class")
    if max_children < 2:
        raise TaxonomyError("max_children must be at least 2")

    rng = np.random.default_rng(seed)
    width = max(2, len(str(num_classes - 1)))
    leaves = [f"c{i:0{width}d}" for i in range(num_classes)]
    if num_classes == 1:
        return Taxonomy.from_edges([("n0", leaves[0])])

    edges: List[Tuple[str, str]] = []
    counter = itertools.count()

    def build(items: List[str]) -> str:
        if len(items) == 1:
            return items[0]
        name = f"n{next(counter)}"
        groups = int(rng.integers(2, min(max_children, len(items)) + 1))
        cuts = np.sort(rng.choice(np.arange(1, len(items)), size=groups - 1, replace=False))
        bounds = [0, *cuts.tolist(), len(items)]
        for start, stop in zip(bounds[:-1], bounds[1:]):
            edges.append((name, build(items[start:stop])))
        return name

    build(leaves)
    return Taxonomy.from_edges(edges)
