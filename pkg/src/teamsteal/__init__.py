"""Work-stealing task scheduler with deterministic team-building.

Tasks carry a thread requirement r; the runtime assembles teams of r
consecutive workers through a compare-and-exchange registration
protocol, executes team tasks simultaneously on every member, and
falls back to plain work-stealing (with zero registration overhead)
when all tasks are single-threaded.
"""

from .errors import TeamStealError
from .regword import RegistrationWord
from .scheduler import SchedulerConfig, run
from .topology import Topology

__all__ = [
    "RegistrationWord",
    "SchedulerConfig",
    "TeamStealError",
    "Topology",
    "run",
]

__version__ = "0.1.0"
