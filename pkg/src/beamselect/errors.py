"""Exception types shared across the package."""


class BeamselectError(Exception):
    pass


class ConfigurationError(BeamselectError, ValueError):
    """Invalid instance or solver configuration."""


class UsageError(BeamselectError, ValueError):
    """An operation was called outside its precondition."""


class ParseError(BeamselectError, ValueError):
    """Malformed instance, checkpoint or dataset file."""

    def __init__(self, message, line=None, offset=None):
        self.line = line
        self.offset = offset
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class DimensionMismatchError(ParseError):
    pass


class SolverError(BeamselectError, RuntimeError):
    """The conic backend failed numerically."""

    def __init__(self, message, node_id=None):
        self.node_id = node_id
        if node_id is not None:
            message = f"{message} [node {node_id}]"
        super().__init__(message)


class RefusalError(BeamselectError, ValueError):
    """A request exceeds a hard tractability guard."""


class DomainError(BeamselectError, ValueError):
    """A formula was evaluated outside its domain."""
