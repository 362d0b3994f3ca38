import logging
import os

import click
import typer
from typer.core import TyperGroup

try:  # typer >= 0.26 raises errors from its vendored copy of click
    from typer._click.exceptions import UsageError as _TyperUsageError
    USAGE_ERRORS = (click.UsageError, _TyperUsageError)
except ImportError:
    USAGE_ERRORS = (click.UsageError,)

from hierarchy_embed_tool.commands.demo import demo
from hierarchy_embed_tool.commands.embed import embed
from hierarchy_embed_tool.commands.evaluate import evaluate
from hierarchy_embed_tool.commands.train import train
from hierarchy_embed_tool.commands.treeify import treeify
from hierarchy_embed_tool.commands.validate import validate
from hierarchy_embed_tool.utils.config import console

logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s %(levelname)s %(name)s: %(message)s"
)

logger = logging.getLogger(__name__)

USAGE_ERROR_EXIT_CODE = 1


class HierarchyEmbedGroup(TyperGroup):
    """Command group whose usage errors exit with 1; status 2 is reserved for validation findings."""

    def make_context(self, *args, **kwargs):
        try:
            return super().make_context(*args, **kwargs)
        except USAGE_ERRORS as e:
            e.exit_code = USAGE_ERROR_EXIT_CODE
            raise

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except USAGE_ERRORS as e:
            e.exit_code = USAGE_ERROR_EXIT_CODE
            raise


app = typer.Typer(
    cls=HierarchyEmbedGroup,
    help="Hierarchy-based class embeddings, semantic mappers and hierarchical retrieval metrics.",
)


@app.callback()
def main(
    ctx: typer.Context,
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable debug logging and extra tables"),
    no_color: bool = typer.Option(False, "--no-color", help="Plain output without colors"),
):
    debug_mode = verbose or os.environ.get("HIERARCHY_EMBED_TOOL_DEBUG", "0") == "1"
    if debug_mode:
        logging.getLogger().setLevel(logging.DEBUG)
        logger.debug("Debug mode enabled.")
    if no_color:
        console.no_color = True
    ctx.obj = {"verbose": debug_mode}


app.command(name="validate")(validate)
app.command(name="treeify")(treeify)
app.command(name="embed")(embed)
app.command(name="train")(train)
app.command(name="eval")(evaluate)
app.command(name="demo")(demo)


if __name__ == "__main__":
    app()
