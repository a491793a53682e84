class NumericalError(RuntimeError):
    """A numerical routine failed to meet its contract (CLI exit code 3)."""


class TailError(NumericalError):
    """The truncated age domain is too short for the requested accuracy."""
