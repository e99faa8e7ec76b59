class ValidationError(ValueError):
    """Raised for malformed inputs: bad files, out-of-range metrics, empty groups."""
