"""Spatial value type flowing through every pipeline stage.

A :class:`Sample` couples a rank-5 tensor (batch, three spatial axes,
feature) with one homogeneous 4x4 voxel-to-world matrix per batch element.
All features of a batch element share that matrix.  Samples are immutable:
every pipeline stage builds new ones instead of mutating in place.

The constructor is strict about rank.  Arrays of lower rank must be lifted
with :func:`promote`, which requires an explicit statement of what each
existing axis means; silent axis guessing is not supported.
"""

from __future__ import annotations

import numpy as np

from .errors import AffineError, ShapeError

ROLES = ("batch", "s0", "s1", "s2", "feature")

AFFINE_TOL = 1e-5


def identity_affines(batch_size: int) -> np.ndarray:
    """Stack of ``batch_size`` 4x4 identity matrices."""
    return np.broadcast_to(np.eye(4), (batch_size, 4, 4)).copy()


def validate_affine_stack(affine: np.ndarray, batch_size: int) -> np.ndarray:
    """Check and normalize a voxel-to-world stack.

    Accepts a single (4, 4) matrix (tiled across the batch) or a full
    (batch_size, 4, 4) stack.  The last row must equal (0, 0, 0, 1) within
    ``AFFINE_TOL`` and is snapped to it exactly; the top-left 3x3 block must
    be invertible.
    """
    affine = np.asarray(affine, dtype=np.float64)
    if affine.shape == (4, 4):
        affine = np.broadcast_to(affine, (batch_size, 4, 4))
    if affine.shape != (batch_size, 4, 4):
        raise ShapeError(
            f"affine must have shape ({batch_size}, 4, 4) or (4, 4), got {affine.shape}"
        )
    affine = np.array(affine, dtype=np.float64)
    if not np.isfinite(affine).all():
        raise AffineError("affine contains non-finite values")
    expected = np.array([0.0, 0.0, 0.0, 1.0])
    if np.abs(affine[:, 3, :] - expected).max() > AFFINE_TOL:
        raise AffineError("affine last row must be (0, 0, 0, 1)")
    affine[:, 3, :] = expected
    if np.any(np.linalg.det(affine[:, :3, :3]) == 0.0):
        raise AffineError("affine 3x3 block is singular")
    return affine


class Sample:
    """Immutable rank-5 tensor with per-batch-element voxel-to-world affines.

    Parameters
    ----------
    data : array-like
        Exactly rank 5, laid out (batch, s0, s1, s2, feature).  Stored as
        float64.
    affine : array-like or None
        (batch, 4, 4) stack, or a single (4, 4) matrix applied to every
        batch element.  ``None`` means identity for every element.

    Raises
    ------
    ShapeError
        If ``data`` is not rank 5 or the affine batch dimension mismatches.
    AffineError
        If an affine's last row is not (0, 0, 0, 1) or its 3x3 block is
        singular.
    """

    __slots__ = ("_data", "_affine")

    def __init__(self, data, affine=None):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 5:
            raise ShapeError(
                f"sample data must have exactly rank 5, got rank {data.ndim}; "
                "use promote() with explicit axis roles to lift lower-rank arrays"
            )
        data = np.array(data, dtype=np.float64)
        batch = data.shape[0]
        if affine is None:
            affine = identity_affines(batch)
        else:
            affine = validate_affine_stack(affine, batch)
        data.flags.writeable = False
        affine.flags.writeable = False
        object.__setattr__(self, "_data", data)
        object.__setattr__(self, "_affine", affine)

    def __setattr__(self, name, value):
        raise AttributeError("Sample is immutable")

    @property
    def data(self) -> np.ndarray:
        """The rank-5 tensor (read-only view)."""
        return self._data

    @property
    def affine(self) -> np.ndarray:
        """The (batch, 4, 4) voxel-to-world stack (read-only view)."""
        return self._affine

    @property
    def shape(self):
        return self._data.shape

    @property
    def batch_size(self) -> int:
        return self._data.shape[0]

    @property
    def spatial_shape(self):
        return self._data.shape[1:4]

    @property
    def feature_count(self) -> int:
        return self._data.shape[4]

    def voxel_to_world(self, b: int, idx) -> np.ndarray:
        """World coordinate (mm) of voxel ``idx`` in batch element ``b``.

        ``idx`` is an integer triple inside the spatial bounds.
        """
        if not 0 <= b < self.batch_size:
            raise IndexError(f"batch index {b} out of range [0, {self.batch_size})")
        idx = tuple(int(i) for i in idx)
        if len(idx) != 3:
            raise IndexError(f"voxel index must be a triple, got {idx}")
        for axis, (i, size) in enumerate(zip(idx, self.spatial_shape)):
            if not 0 <= i < size:
                raise IndexError(f"voxel index {i} out of range [0, {size}) on axis {axis}")
        hom = np.array([idx[0], idx[1], idx[2], 1.0])
        return (self._affine[b] @ hom)[:3]

    def __repr__(self):
        return f"Sample(shape={self.shape})"


def promote(data, axis_roles=()) -> np.ndarray:
    """Lift an array of rank 0..5 to rank 5 under an explicit axis mapping.

    ``axis_roles`` names the role of each existing axis, in order, using the
    tokens ``"batch"``, ``"s0"``, ``"s1"``, ``"s2"``, ``"feature"``.  Roles
    not mentioned become singleton axes; output order is always
    (batch, s0, s1, s2, feature).

    >>> promote(np.zeros((100, 100)), ("s0", "s1")).shape
    (1, 100, 100, 1, 1)
    """
    data = np.asarray(data, dtype=np.float64)
    roles = tuple(axis_roles)
    if len(roles) != data.ndim:
        raise ValueError(
            f"axis_roles has {len(roles)} entries for a rank-{data.ndim} array"
        )
    for role in roles:
        if role not in ROLES:
            raise ValueError(f"unknown axis role {role!r}; valid roles: {ROLES}")
    if len(set(roles)) != len(roles):
        raise ValueError(f"duplicate axis role in {roles}")
    order = [roles.index(role) for role in ROLES if role in roles]
    out = np.transpose(data, order)
    full_shape = []
    src_axis = 0
    for role in ROLES:
        if role in roles:
            full_shape.append(out.shape[src_axis])
            src_axis += 1
        else:
            full_shape.append(1)
    return out.reshape(full_shape)


def compose_offset(affine: np.ndarray, offset) -> np.ndarray:
    """Right-compose an affine with a voxel-index translation.

    Returns ``affine @ T(offset)`` where ``T`` translates voxel indices by
    ``offset``; the world position of the new index (0, 0, 0) equals that of
    the old index ``offset``.  Works on a single (4, 4) matrix or a
    (batch, 4, 4) stack.
    """
    affine = np.asarray(affine, dtype=np.float64)
    shift = np.eye(4)
    shift[:3, 3] = offset
    return affine @ shift
