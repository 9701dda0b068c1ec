"""Exception hierarchy shared by all thermolab modules.

Every error carries an ``exit_code`` so the command line driver can map
failure classes to process exit codes without inspecting messages:

    2  configuration problems
    3  convergence / statistical failures
    4  numeric domain violations (points outside the disk, bad steps, mesh)
    5  resource limits (element caps, iteration caps on enumeration)
"""


class ThermolabError(Exception):
    exit_code = 1


class ConfigError(ThermolabError):
    """Invalid or inconsistent experiment configuration."""

    exit_code = 2


class ConvergenceError(ThermolabError):
    """An iterative procedure stalled or failed to reach tolerance."""

    exit_code = 3


class BlowupError(ConvergenceError):
    """A Riccati solution escaped upward (conjugate-point behaviour)."""


class StatisticalError(ConvergenceError):
    """Monte Carlo standard error too large for the requested check."""


class DomainError(ThermolabError):
    """Numeric input outside the admissible domain (e.g. |z| >= 1)."""

    exit_code = 4


class StepError(DomainError):
    """An integration step left the admissible region before folding."""


class MeshError(DomainError):
    """Mesh construction or point location failed."""


class ResourceError(ThermolabError):
    """A configured cap (element count, memory budget) was exceeded."""

    exit_code = 5
