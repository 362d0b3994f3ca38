"""Hierarchy files shipped with the package."""
from pathlib import Path

FIXTURES_DIR = Path(__file__).parent

TOY_TREE = FIXTURES_DIR / "toy_tree.txt"
GOLFCART_DAG = FIXTURES_DIR / "golfcart_dag.txt"
NONTREE_TRIANGLE = FIXTURES_DIR / "nontree_triangle.txt"
STAR_TREE = FIXTURES_DIR / "star_tree.txt"
SYNTHETIC_20 = FIXTURES_DIR / "synthetic_20.txt"
