class ExtractError(Exception):
    """Extraction cannot proceed: bad checkpoint, dimension mismatch, or an
    embedding that violates the output container's invariants."""
