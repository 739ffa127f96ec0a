"""Exception types shared across the package."""


class InvariantError(RuntimeError):
    """An internal contract was violated (broken invariant, fuse hit)."""
