"""Exception types shared across the package."""

from __future__ import annotations


class NetIqcError(Exception):
    """Base class for all package errors."""


class GraphError(NetIqcError, ValueError):
    """Invalid network graph or out-of-range graph index."""


class ModelError(NetIqcError, ValueError):
    """Invalid agent, multiplier, or link model."""


class SpecError(NetIqcError, ValueError):
    """Problem file failed validation; carries every error found, not just the first."""

    def __init__(self, errors: list[str], source: str = "<spec>"):
        self.errors = list(errors)
        self.source = source
        lines = "\n".join(f"  {e}" for e in self.errors)
        super().__init__(f"{source}: {len(self.errors)} validation error(s)\n{lines}")


class AlgebraicLoopError(NetIqcError, RuntimeError):
    """The static feedback loop is singular (ill-posed interconnection)."""


class NumericalError(NetIqcError, RuntimeError):
    """A numerical computation failed or fell below the trusted conditioning."""


class SimulationError(NetIqcError, RuntimeError):
    """Time stepping failed (non-finite state or unsupported loop structure)."""
