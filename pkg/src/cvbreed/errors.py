"""Exception types shared across the engine."""


class SimulationError(Exception):
    """Base class for engine-level failures."""


class GridError(SimulationError):
    """Grid construction or resolution precondition violated."""


class TailError(SimulationError):
    """State does not fit the grid (aliasing risk)."""


class GuardError(SimulationError):
    """A numerical guard tripped (infeasible plan, non-convergence, ...)."""
