"""Exception types shared across the package."""


class VoxelflowError(Exception):
    """Base class for all voxelflow-specific errors."""


class ShapeError(VoxelflowError, ValueError):
    """An array has the wrong rank, shape, or feature count."""


class AffineError(VoxelflowError, ValueError):
    """An affine matrix is malformed (bad shape, last row, or singular block)."""


class AlignmentError(VoxelflowError, ValueError):
    """Two samples do not sit on compatible voxel grids."""


class GraphError(VoxelflowError, ValueError):
    """A transformer graph is malformed (cycle, bad connection, empty request)."""


class ContractError(VoxelflowError, ValueError):
    """A node's declared contract was violated at evaluation time."""


class StateError(VoxelflowError, RuntimeError):
    """An operation was attempted in an invalid state (no identifier loaded,
    model not attached, stale evaluation handle)."""


class FormatError(VoxelflowError, ValueError):
    """A serialized file has an unknown version or cannot be parsed."""


class AdmissibilityError(VoxelflowError, ValueError):
    """An input size cannot flow through an architecture (non-divisible
    downsample or a non-positive intermediate size)."""


class Depleted(Exception):
    """Control-flow signal: an input node was asked to produce beyond its
    emission count.  Ends a generation; never an error."""
