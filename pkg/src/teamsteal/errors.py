"""Exception types shared across the scheduler."""


class TeamStealError(Exception):
    """Base class for all scheduler errors."""


class EncodingOverflowError(TeamStealError):
    """A registration word field does not fit in 16 bits."""


class InfeasibleRequirementError(TeamStealError):
    """A task requires more threads than the machine provides."""


class IllegalDeregistrationError(TeamStealError):
    """Attempt to deregister a thread that is locked into a team."""


class NotReadyError(TeamStealError):
    """fix_team called before all required threads registered."""


class NotInTeamError(TeamStealError):
    """Local-id computation for a thread outside the team bounds."""


class ConfigurationError(TeamStealError):
    """Invalid scheduler or topology configuration."""


class SpawnMisuseError(TeamStealError):
    """spawn called from a team member other than local id 0."""


class LivelockSuspectError(TeamStealError):
    """Simulation step budget exhausted with tasks still pending."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class VerificationError(TeamStealError):
    """A benchmark run produced incorrect output."""


class ProtocolViolationError(TeamStealError):
    """A simulated execution violated a scheduler invariant."""

    def __init__(self, message, event=None, seed=None):
        super().__init__(message)
        self.event = event
        self.seed = seed
