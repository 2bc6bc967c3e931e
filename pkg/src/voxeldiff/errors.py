"""Exception types raised across the package."""


class VoxelDiffError(Exception):
    """Base class for all package errors."""


class BoundsError(VoxelDiffError, IndexError):
    pass


class DomainError(VoxelDiffError, ValueError):
    """A position lies outside the computational domain."""


class LayoutError(VoxelDiffError, ValueError):
    """Density data does not match the expected voxel/substrate layout."""


class StateError(VoxelDiffError, RuntimeError):
    """Solver state (workspace, agent cache) is inconsistent with the mesh."""


class ConfigError(VoxelDiffError, ValueError):
    """Invalid configuration. ``field`` names the offending setting."""

    def __init__(self, message, field=None):
        self.field = field
        self.reason = message
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class ConfigParseError(ConfigError):
    """Malformed XML. ``line`` is the 1-based line of the syntax error."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class LoadError(VoxelDiffError, ValueError):
    """Bad agent table. ``row`` is the 1-based data row (header excluded)."""

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
