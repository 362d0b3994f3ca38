"""Run configuration for hierarchy-embed-tool commands."""
import logging
from dataclasses import dataclass, fields, replace
from functools import wraps
from pathlib import Path
from typing import Any, Dict, Optional

import typer
from rich.console import Console
from rich.markup import escape
from rich.table import Table

from hierarchy_embed_tool.core.errors import ConfigError, HierarchyEmbedError
from hierarchy_embed_tool.core.mapper import LossMode, TrainConfig
from hierarchy_embed_tool.core.schedules import Schedule

console = Console()
logger = logging.getLogger(__name__)

DEFAULT_SEED = 0

KEY_ALIASES = {"k": "cutoff", "lambda": "lam", "loss": "loss_mode", "batch": "batch_size"}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass
class RunConfig:
    """Resolved options of a single subcommand run.

    Built-in defaults are overridden by a ``--config`` file, which is in turn
    overridden by explicit command-line flags.
    """

    subcommand: str = ""
    hierarchy: Optional[Path] = None
    classes: Optional[Path] = None
    dataset: Optional[Path] = None
    embeddings: Optional[Path] = None
    model: Optional[Path] = None
    features: Optional[Path] = None
    out: Optional[Path] = None
    log: Optional[Path] = None
    out_curve: Optional[Path] = None
    out_summary: Optional[Path] = None
    similarity_out: Optional[Path] = None
    dims: Optional[int] = None
    cutoff: int = 250
    lam: float = 0.1
    lr: float = 0.5
    min_lr: float = 1e-6
    epochs: int = 100
    batch_size: int = 32
    seed: int = DEFAULT_SEED
    schedule: str = Schedule.COSINE.value
    cycle_len: int = 12
    cycle_mult: float = 2.0
    loss_mode: str = LossMode.CORR.value
    clip_norm: Optional[float] = 10.0
    treeify: bool = False
    normalize: bool = False
    verbose: bool = False

    def require_inputs(self, *names: str):
        """Check that the named input paths are set and point to existing files.

        Raises:
            ConfigError: A required path is missing or not a file.
        """
        for name in names:
            path = getattr(self, name)
            if path is None:
                raise ConfigError(f"missing required input: {name.replace('_', '-')}")
            if not Path(path).is_file():
                raise ConfigError(f"{name.replace('_', '-')} file not found: {path}")

    def to_train_config(self) -> TrainConfig:
        try:
            return TrainConfig(
                epochs=self.epochs,
                batch_size=self.batch_size,
                base_lr=self.lr,
                min_lr=self.min_lr,
                schedule=Schedule(self.schedule),
                cycle_len=self.cycle_len,
                cycle_mult=self.cycle_mult,
                lam=self.lam,
                seed=self.seed,
                loss_mode=LossMode(self.loss_mode),
                clip_norm=self.clip_norm,
            )
        except ValueError as e:
            raise ConfigError(str(e)) from e


_FIELD_TYPES = {
    **{name: "path" for name in (
        "hierarchy", "classes", "dataset", "embeddings", "model", "features",
        "out", "log", "out_curve", "out_summary", "similarity_out",
    )},
    **{name: "int" for name in ("dims", "cutoff", "epochs", "batch_size", "seed", "cycle_len")},
    **{name: "float" for name in ("lam", "lr", "min_lr", "cycle_mult", "clip_norm")},
    **{name: "bool" for name in ("treeify", "normalize", "verbose")},
    **{name: "str" for name in ("schedule", "loss_mode")},
}


def normalize_key(key: str) -> str:
    key = key.strip().lstrip("-").replace("-", "_").lower()
    return KEY_ALIASES.get(key, key)


def _convert(name: str, raw: str) -> Any:
    kind = _FIELD_TYPES[name]
    value = raw.strip()
    if name == "clip_norm" and value.lower() in {"none", "off"}:
        return None
    if kind == "path":
        return Path(value)
    if kind == "int":
        return int(value)
    if kind == "float":
        return float(value)
    if kind == "bool":
        if value.lower() in _TRUE:
            return True
        if value.lower() in _FALSE:
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    return value


class ConfigManager:
    """Load an optional ``key=value`` run-config file and resolve option precedence."""

    def __init__(self, config_file: Optional[Path] = None):
        """Initialize config manager.

        Args:
            config_file: Path of the run-config file. Without one, only
                flags and built-in defaults are used.
        """
        self.config_file = Path(config_file) if config_file else None

    def load_config(self) -> Dict[str, Any]:
        """Parse the run-config file into typed option values.

        Returns:
            Mapping from option name to value; empty without a config file.

        Raises:
            ConfigError: Unreadable file, malformed line, unknown key or bad value.
        """
        if self.config_file is None:
            return {}
        try:
            text = self.config_file.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config file {self.config_file}: {e}") from e

        values: Dict[str, Any] = {}
        for line_number, raw_line in enumerate(text.splitlines(), start=1):
            line = raw_line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"expected 'key=value', got {line!r}", line_number)
            key, raw_value = line.split("=", 1)
            name = normalize_key(key)
            if name not in _FIELD_TYPES:
                raise ConfigError(f"unknown config key '{key.strip()}'", line_number)
            try:
                values[name] = _convert(name, raw_value)
            except ValueError as e:
                raise ConfigError(f"invalid value for '{key.strip()}': {e}", line_number) from e
        logger.debug(f"Loaded {len(values)} option(s) from {self.config_file}")
        return values

    def get(self, key: str, default: Any = None) -> Any:
        return self.load_config().get(normalize_key(key), default)

    def resolve(self, subcommand: str, **flags: Any) -> RunConfig:
        """Merge defaults, config-file values and explicit flags (``None`` means not given)."""
        merged = self.load_config()
        merged.update({name: value for name, value in flags.items() if value is not None})
        known = {f.name for f in fields(RunConfig)}
        unknown = set(merged) - known
        if unknown:
            raise ConfigError(f"unknown option(s): {', '.join(sorted(unknown))}")
        return replace(RunConfig(), subcommand=subcommand, **merged)

    def display(self, run_config: RunConfig):
        """Print the resolved options as a table."""
        table = Table(title=f"Run configuration: {run_config.subcommand}", show_header=True, header_style="bold cyan")
        table.add_column("Option", style="cyan")
        table.add_column("Value", style="green")
        for f in fields(RunConfig):
            if f.name == "subcommand":
                continue
            value = getattr(run_config, f.name)
            if value is not None:
                table.add_row(f.name.replace("_", "-"), str(value))
        console.print(table)


def exit_on_error(command):
    """Report library errors in red and exit with status 1."""

    @wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except HierarchyEmbedError as e:
            logger.error(str(e))
            console.print(f"[red]Error: {escape(str(e))}[/red]")
            raise typer.Exit(1)

    return wrapper


def is_verbose(ctx: Optional[typer.Context]) -> bool:
    return bool(ctx is not None and ctx.obj and ctx.obj.get("verbose"))
