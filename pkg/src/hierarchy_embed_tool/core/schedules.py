"""Per-epoch learning rate schedules."""
import math
from enum import Enum

from hierarchy_embed_tool.core.errors import MapperError


class Schedule(str, Enum):
    CONSTANT = "constant"
    COSINE = "cosine"
    COSINE_RESTARTS = "cosine-restarts"


def cosine_annealing(step: float, period: float, base_lr: float, min_lr: float) -> float:
    """Anneal from ``base_lr`` at step 0 towards ``min_lr`` at ``step == period``."""
    return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + math.cos(math.pi * step / period))


def learning_rate(
    schedule: Schedule,
    epoch: int,
    total_epochs: int,
    base_lr: float,
    min_lr: float = 0.0,
    cycle_len: int = 12,
    multiplier: float = 2.0,
) -> float:
    """Learning rate for a 0-based ``epoch``.

    Args:
        schedule: Schedule kind.
        epoch: Current epoch.
        total_epochs: Length of the single cosine cycle.
        base_lr: Rate at the start of every cycle.
        min_lr: Floor of the cosine schedules.
        cycle_len: First cycle length for warm restarts.
        multiplier: Factor applied to the cycle length after each restart.
    """
    schedule = Schedule(schedule)
    if schedule is Schedule.CONSTANT:
        return base_lr
    if schedule is Schedule.COSINE:
        return cosine_annealing(epoch, max(total_epochs, 1), base_lr, min_lr)

    if cycle_len < 1 or multiplier < 1:
        raise MapperError("warm restarts need cycle_len >= 1 and multiplier >= 1")
    step = float(epoch)
    length = float(cycle_len)
    while step >= length:
        step -= length
        length *= multiplier
    return cosine_annealing(step, length, base_lr, min_lr)
