class FormatError(Exception):
    """Malformed or unsupported input file."""


class ConsistencyError(Exception):
    """Internal invariant violated; indicates corrupted state or a bug."""
