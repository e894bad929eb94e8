"""Concrete transformer kinds: inputs, structural, geometric, masking,
cropping, buffering, put-back, and the pluggable spatial model node.

Stochastic kinds draw one parameter set per emission and apply it to every
sample on every connected input, so paired inputs stay paired.  Crops keep
world bookkeeping exact by right-composing the source affine with their
integer voxel offset; the put-back node inverts that bookkeeping to paste
patches into a reference space.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.spatial.transform import Rotation

from .errors import AlignmentError, ContractError, Depleted, GraphError, ShapeError, StateError
from .graph import Connection, InputTransformer, Transformer, register_kind
from .sample import Sample, compose_offset
from .sampling import CatalogIdentifier, DirectIdentifier

_INTERP_ORDERS = {"linear": 1, "nearest": 0}


def _as_triple(value, name):
    triple = tuple(int(v) for v in value)
    if len(triple) != 3:
        raise ValueError(f"{name} must be a triple, got {value!r}")
    return triple


def _extract_block(data: np.ndarray, start, size, fill: float) -> np.ndarray:
    """Axis-aligned block of a (B, s0, s1, s2, F) array; out-of-bounds
    regions are filled."""
    batch, *dims, features = data.shape
    out = np.full((batch, *size, features), float(fill), dtype=np.float64)
    src = []
    dst = []
    for axis in range(3):
        s0 = max(start[axis], 0)
        s1 = min(start[axis] + size[axis], dims[axis])
        if s0 >= s1:
            return out
        src.append(slice(s0, s1))
        dst.append(slice(s0 - start[axis], s1 - start[axis]))
    out[(slice(None), *dst)] = data[(slice(None), *src)]
    return out


# ---- input nodes -----------------------------------------------------------


@register_kind
class CatalogInput(InputTransformer):
    """Loads the listed modalities of a catalog identifier's record, once per
    identifier, and emits that list ``n`` times."""

    def __init__(self, modality_ids, n=1, output_shapes=None):
        super().__init__(n=n, output_shapes=output_shapes)
        self.modality_ids = list(modality_ids)

    def _samples_from(self, identifier):
        if not isinstance(identifier, CatalogIdentifier):
            raise ContractError(
                f"CatalogInput needs a CatalogIdentifier, got {type(identifier).__name__}"
            )
        record = identifier.record()
        missing = [m for m in self.modality_ids if m not in record]
        if missing:
            raise KeyError(
                f"record {identifier.dataset_id}/{identifier.case_id}/"
                f"{identifier.record_id} lacks modalities {missing}"
            )
        return [record[m].load() for m in self.modality_ids]

    def get_config(self):
        return {"modality_ids": list(self.modality_ids), "n": self.n}


@register_kind
class DirectInput(InputTransformer):
    """Passes the samples of a direct identifier through, ``n`` times."""

    def __init__(self, n=1, output_shapes=None):
        super().__init__(n=n, output_shapes=output_shapes)

    def _samples_from(self, identifier):
        if not isinstance(identifier, DirectIdentifier):
            raise ContractError(
                f"DirectInput needs a DirectIdentifier, got {type(identifier).__name__}"
            )
        return list(identifier.samples)

    def get_config(self):
        return {"n": self.n}


# ---- structural nodes ------------------------------------------------------


class _Elementwise(Transformer):
    """One output slot per input connection; a shared parameter draw per
    emission."""

    def _generate(self, k):
        params = self._draw_params(k)
        return [
            self._transform_value(value, idx, params)
            for idx, value in enumerate(self._current_inputs)
        ]

    def _draw_params(self, k):
        return None

    def _transform_value(self, value, input_index, params):
        raise NotImplementedError


@register_kind
class Split(_Elementwise):
    """Selects entries of the incoming sample list, in the given order."""

    def __init__(self, indices, n=1):
        super().__init__(n=n)
        self.indices = tuple(int(i) for i in indices)

    def _transform_value(self, value, input_index, params):
        for i in self.indices:
            if not 0 <= i < len(value):
                raise IndexError(
                    f"split index {i} out of range for a value of {len(value)} sample(s)"
                )
        return [value[i] for i in self.indices]

    def get_config(self):
        return {"indices": list(self.indices), "n": self.n}

    @classmethod
    def from_config(cls, config):
        return cls(indices=config["indices"], n=config["n"])


@register_kind
class Group(Transformer):
    """Concatenates the sample lists of all input connections, in connection
    order, into one output."""

    collapses = True

    def _generate(self, k):
        return [[sample for value in self._current_inputs for sample in value]]


# ---- geometric nodes -------------------------------------------------------


@register_kind
class Flip(_Elementwise):
    """Random per-axis flips.  One Bernoulli draw per axis per emission,
    shared across all connected inputs.  Flipping reverses voxel order and
    right-composes the affine with the index-reversal map, so every voxel
    keeps its world coordinate."""

    def __init__(self, flip_probabilities=(0.5, 0.5, 0.5), n=1):
        super().__init__(n=n)
        probs = tuple(float(p) for p in flip_probabilities)
        if len(probs) != 3 or any(not 0.0 <= p <= 1.0 for p in probs):
            raise ValueError(f"flip probabilities must be three values in [0, 1], got {probs}")
        self.flip_probabilities = probs

    def _draw_params(self, k):
        return tuple(self._rng.random() < p for p in self.flip_probabilities)

    def _transform_value(self, value, input_index, flips):
        out = []
        for sample in value:
            data = sample.data
            reversal = np.eye(4)
            for axis, flip in enumerate(flips):
                if flip:
                    data = np.flip(data, axis=axis + 1)
                    reversal[axis, axis] = -1.0
                    reversal[axis, 3] = sample.spatial_shape[axis] - 1
            out.append(Sample(data, affine=sample.affine @ reversal))
        return out

    def get_config(self):
        return {"flip_probabilities": list(self.flip_probabilities), "n": self.n}

    @classmethod
    def from_config(cls, config):
        return cls(flip_probabilities=config["flip_probabilities"], n=config["n"])


def apply_world_transform(sample: Sample, world_matrix: np.ndarray,
                          interpolation: str = "linear", fill: float = 0.0) -> Sample:
    """Resample a sample onto its own voxel grid through a world-space map.

    ``world_matrix`` moves content in world coordinates; the output keeps the
    input's shape and affine, reading each output voxel from the inverse-
    mapped source position.  Out-of-volume reads yield ``fill``.
    """
    order = _INTERP_ORDERS[interpolation]
    inverse = np.linalg.inv(world_matrix)
    out = np.empty_like(sample.data)
    for b in range(sample.batch_size):
        voxel_map = np.linalg.inv(sample.affine[b]) @ inverse @ sample.affine[b]
        matrix = voxel_map[:3, :3]
        offset = voxel_map[:3, 3]
        for f in range(sample.feature_count):
            out[b, ..., f] = ndimage.affine_transform(
                sample.data[b, ..., f], matrix, offset=offset,
                order=order, mode="constant", cval=float(fill),
            )
    return Sample(out, affine=sample.affine)


@register_kind
class AffineDeformation(_Elementwise):
    """Random rigid (plus optional scaling) deformation about the reference
    sample's world center.

    Each emission draws one parameter set, every component uniform in
    [-width/2, +width/2] (scale factors centered on 1), builds the world map,
    and resamples every connected sample onto its own original grid.  Shape
    and affine are unchanged; only content moves.
    """

    def __init__(self, reference, rotation_window_width=(0.0, 0.0, 0.0),
                 translation_window_width=(0.0, 0.0, 0.0),
                 scaling_window_width=None, interpolation="linear",
                 fill=0.0, n=1):
        super().__init__(n=n)
        if reference is not None:
            if not isinstance(reference, Connection):
                raise GraphError("reference must be a Connection")
            self.extra_inputs = [reference]
        self.rotation_window_width = tuple(float(w) for w in rotation_window_width)
        self.translation_window_width = tuple(float(w) for w in translation_window_width)
        self.scaling_window_width = (
            None if scaling_window_width is None
            else tuple(float(w) for w in scaling_window_width)
        )
        self.interpolation = interpolation
        self.fill = float(fill)

    def _interp_for(self, input_index):
        if isinstance(self.interpolation, str):
            name = self.interpolation
        else:
            name = self.interpolation[input_index]
        if name not in _INTERP_ORDERS:
            raise ValueError(f"unknown interpolation {name!r}")
        return name

    def _prepare(self):
        if not self.extra_inputs:
            raise GraphError("AffineDeformation has no reference connection")
        reference = self._current_extras[0]
        if len(reference) != 1:
            raise ContractError(
                f"reference must yield exactly one sample, got {len(reference)}"
            )

    def _draw_params(self, k):
        half = lambda w: self._rng.uniform(-w / 2.0, w / 2.0) if w else 0.0
        rotation = [half(w) for w in self.rotation_window_width]
        translation = [half(w) for w in self.translation_window_width]
        if self.scaling_window_width is None:
            scaling = [1.0, 1.0, 1.0]
        else:
            scaling = [1.0 + half(w) for w in self.scaling_window_width]

        reference = self._current_extras[0][0]
        center_voxel = (np.array(reference.spatial_shape) - 1) / 2.0
        center = (reference.affine[0] @ np.array([*center_voxel, 1.0]))[:3]

        rotate = np.eye(4)
        rotate[:3, :3] = Rotation.from_euler("xyz", rotation).as_matrix()
        scale = np.diag([*scaling, 1.0])
        to_center = np.eye(4)
        to_center[:3, 3] = center
        from_center = np.eye(4)
        from_center[:3, 3] = -center
        translate = np.eye(4)
        translate[:3, 3] = translation
        return translate @ to_center @ rotate @ scale @ from_center

    def _transform_value(self, value, input_index, world_matrix):
        interpolation = self._interp_for(input_index)
        return [
            apply_world_transform(s, world_matrix, interpolation, self.fill)
            for s in value
        ]

    def get_config(self):
        return {
            "rotation_window_width": list(self.rotation_window_width),
            "translation_window_width": list(self.translation_window_width),
            "scaling_window_width": (
                None if self.scaling_window_width is None
                else list(self.scaling_window_width)
            ),
            "interpolation": (
                self.interpolation if isinstance(self.interpolation, str)
                else list(self.interpolation)
            ),
            "fill": self.fill,
            "n": self.n,
        }

    @classmethod
    def from_config(cls, config):
        return cls(None, **config)


@register_kind
class Threshold(_Elementwise):
    """Binarizes: 1 where value > lower (and <= upper when given), else 0."""

    def __init__(self, lower_threshold=0.0, upper_threshold=None, n=1):
        super().__init__(n=n)
        self.lower_threshold = float(lower_threshold)
        self.upper_threshold = None if upper_threshold is None else float(upper_threshold)

    def _transform_value(self, value, input_index, params):
        out = []
        for sample in value:
            mask = sample.data > self.lower_threshold
            if self.upper_threshold is not None:
                mask &= sample.data <= self.upper_threshold
            out.append(Sample(mask.astype(np.float64), affine=sample.affine))
        return out

    def get_config(self):
        return {
            "lower_threshold": self.lower_threshold,
            "upper_threshold": self.upper_threshold,
            "n": self.n,
        }


# ---- cropping nodes --------------------------------------------------------


class _CropBase(_Elementwise):
    """Shared center-to-block logic: every input connection gets its own
    crop size around one shared center voxel."""

    def __init__(self, sizes, fill=0.0, n=1):
        super().__init__(n=n)
        sizes = list(sizes)
        if sizes and isinstance(sizes[0], (int, np.integer)):
            self._shared_size = _as_triple(sizes, "size")
            self._per_input_sizes = None
        else:
            self._shared_size = None
            self._per_input_sizes = [_as_triple(s, "size") for s in sizes]
        self.fill = float(fill)

    def size_for(self, input_index):
        if self._per_input_sizes is None:
            return self._shared_size
        if input_index >= len(self._per_input_sizes):
            raise GraphError(
                f"{type(self).__name__} got {len(self.inputs)} input connection(s) "
                f"but only {len(self._per_input_sizes)} size(s)"
            )
        return self._per_input_sizes[input_index]

    def _sizes_config(self):
        if self._per_input_sizes is None:
            return list(self._shared_size)
        return [list(s) for s in self._per_input_sizes]

    def _crop_value(self, value, input_index, center):
        size = self.size_for(input_index)
        out = []
        for sample in value:
            start = tuple(int(c) - s // 2 for c, s in zip(center, size))
            data = _extract_block(sample.data, start, size, self.fill)
            out.append(Sample(data, affine=compose_offset(sample.affine, start)))
        return out


@register_kind
class RandomCrop(_CropBase):
    """Crops around a randomly drawn center voxel, uniform over the positive
    voxels of the mask reference when ``nonzero`` is set, else uniform over
    all mask voxels.  All inputs share the center; each gets its own size.

    The drawn center is clamped so the first input's crop stays inside its
    volume whenever it fits (a full-volume crop therefore reproduces the
    volume exactly); oversized crops are placed centered, padded with
    ``fill``.  Clamping moves the center for every connected input alike,
    so differently sized crops stay concentric.
    """

    def __init__(self, mask_reference, sizes, nonzero=False, n=1, fill=0.0):
        super().__init__(sizes, fill=fill, n=n)
        if mask_reference is not None:
            if not isinstance(mask_reference, Connection):
                raise GraphError("mask_reference must be a Connection")
            self.extra_inputs = [mask_reference]
        self.nonzero = bool(nonzero)
        self._candidates = None

    def _prepare(self):
        if not self.extra_inputs:
            raise GraphError("RandomCrop has no mask reference connection")
        mask_value = self._current_extras[0]
        if len(mask_value) != 1:
            raise ContractError(
                f"mask reference must yield exactly one sample, got {len(mask_value)}"
            )
        mask = mask_value[0]
        from .sample import AFFINE_TOL

        for value in self._current_inputs:
            for sample in value:
                if np.abs(sample.affine - mask.affine[0]).max() > AFFINE_TOL:
                    raise AlignmentError(
                        "cropped inputs must share the mask reference's affine"
                    )
        self._mask_shape = mask.spatial_shape
        if self.nonzero:
            candidates = np.argwhere(np.any(mask.data > 0, axis=(0, 4)))
            if len(candidates) == 0:
                raise ValueError("nonzero RandomCrop over an all-zero mask")
            self._candidates = candidates
        else:
            self._candidates = None

    def _draw_params(self, k):
        if self.nonzero:
            center = tuple(
                int(v) for v in
                self._candidates[int(self._rng.integers(len(self._candidates)))]
            )
        else:
            center = tuple(int(self._rng.integers(dim)) for dim in self._mask_shape)
        return self._clamp_center(center)

    def _clamp_center(self, center):
        size = self.size_for(0)
        dims = self._current_inputs[0][0].spatial_shape
        clamped = []
        for c, s, dim in zip(center, size, dims):
            lo = s // 2
            hi = dim - s + s // 2
            if lo <= hi:
                clamped.append(min(max(c, lo), hi))
            else:  # crop larger than the volume: place it centered
                clamped.append((dim - s) // 2 + s // 2)
        return tuple(clamped)

    def _transform_value(self, value, input_index, center):
        return self._crop_value(value, input_index, center)

    def get_config(self):
        return {
            "sizes": self._sizes_config(),
            "nonzero": self.nonzero,
            "fill": self.fill,
            "n": self.n,
        }

    @classmethod
    def from_config(cls, config):
        return cls(None, **config)


@register_kind
class GridCrop(_CropBase):
    """Emits every tile of a regular grid over the first input, stride
    ``size - overlap``, raster order, with the last tile per axis clamped
    inward so the union covers the volume exactly.  Emission count is the
    tile count (data-dependent)."""

    def __init__(self, sizes, overlap=(0, 0, 0), fill=0.0):
        super().__init__(sizes, fill=fill, n=1)
        self.overlap = _as_triple(overlap, "overlap")
        size0 = self.size_for(0)
        for axis in range(3):
            if self.overlap[axis] < 0 or self.overlap[axis] >= size0[axis]:
                raise ValueError(
                    f"overlap must satisfy 0 <= overlap < size, got "
                    f"{self.overlap[axis]} for size {size0[axis]} on axis {axis}"
                )
        self._tiles = []

    def _n_label(self):
        return "tiles"

    def _prepare(self):
        first = self._current_inputs[0]
        if not first:
            raise ShapeError("GridCrop input value holds no samples")
        dims = first[0].spatial_shape
        size = self.size_for(0)
        axis_starts = []
        for axis in range(3):
            stride = size[axis] - self.overlap[axis]
            last = max(dims[axis] - size[axis], 0)
            starts = list(range(0, last + 1, stride))
            if starts[-1] != last:
                starts.append(last)
            axis_starts.append(starts)
        self._tiles = [
            (i, j, k)
            for i in axis_starts[0]
            for j in axis_starts[1]
            for k in axis_starts[2]
        ]

    def _input_multiplicity(self):
        return len(self._tiles)

    def _generate(self, k):
        start = self._tiles[k]
        size0 = self.size_for(0)
        center = tuple(s + d // 2 for s, d in zip(start, size0))
        return [
            self._crop_value(value, idx, center)
            for idx, value in enumerate(self._current_inputs)
        ]

    def get_config(self):
        return {
            "sizes": self._sizes_config(),
            "overlap": list(self.overlap),
            "fill": self.fill,
        }


@register_kind
class CenterCrop(_Elementwise):
    """Deterministic centered crop to a fixed size, floor offsets."""

    def __init__(self, size, n=1):
        super().__init__(n=n)
        self.size = _as_triple(size, "size")

    def _transform_value(self, value, input_index, params):
        out = []
        for sample in value:
            dims = sample.spatial_shape
            for axis in range(3):
                if self.size[axis] > dims[axis]:
                    raise ShapeError(
                        f"center crop size {self.size[axis]} exceeds input size "
                        f"{dims[axis]} on axis {axis}"
                    )
            offset = tuple((d - s) // 2 for d, s in zip(dims, self.size))
            region = tuple(
                slice(o, o + s) for o, s in zip(offset, self.size)
            )
            data = sample.data[(slice(None), *region)]
            out.append(Sample(data, affine=compose_offset(sample.affine, offset)))
        return out

    def get_config(self):
        return {"size": list(self.size), "n": self.n}


# ---- buffering and put-back --------------------------------------------------


@register_kind
class Buffer(Transformer):
    """Drains its upstream within one pull and emits the collected samples
    concatenated along the batch axis (affines stacked).

    Unbounded buffers drain until upstream depletion; bounded ones stop at
    ``buffer_size`` items.  A pull after an exhausting drain propagates the
    depletion.
    """

    data_arity = 1

    def __init__(self, buffer_size=None):
        super().__init__(n=1)
        if buffer_size is not None and int(buffer_size) < 1:
            raise ValueError(f"buffer_size must be positive or None, got {buffer_size}")
        self.buffer_size = None if buffer_size is None else int(buffer_size)

    def _n_label(self):
        return "drain"

    def _advance(self):
        if not self.inputs:
            raise GraphError("Buffer has no input connection")
        conn = self.inputs[0]
        key = id(conn.node)
        collected = []
        while self.buffer_size is None or len(collected) < self.buffer_size:
            try:
                outputs = conn.node.pull(self._consumed_seq.get(key, 0) + 1)
            except Depleted:
                break
            self._consumed_seq[key] = conn.node._seq
            collected.append(outputs[conn.slot])
        if not collected:
            raise Depleted("Buffer")
        self._outputs = [self._concatenate(collected)]
        self._seq += 1

    @staticmethod
    def _concatenate(collected):
        lengths = {len(value) for value in collected}
        if len(lengths) != 1:
            raise ShapeError("buffered values hold differing sample counts")
        merged = []
        for position in range(lengths.pop()):
            samples = [value[position] for value in collected]
            shapes = {s.data.shape[1:] for s in samples}
            if len(shapes) != 1:
                raise ShapeError(
                    f"buffered samples disagree in shape: {sorted(shapes)}"
                )
            merged.append(
                Sample(
                    np.concatenate([s.data for s in samples], axis=0),
                    affine=np.concatenate([s.affine for s in samples], axis=0),
                )
            )
        return merged

    def get_config(self):
        return {"buffer_size": self.buffer_size}

    @classmethod
    def from_config(cls, config):
        return cls(buffer_size=config["buffer_size"])


@register_kind
class Put(Transformer):
    """Pastes every incoming batch element into a reference-shaped canvas at
    its integer voxel offset, recovered from the affines.

    ``average`` divides each voxel by its contribution count (untouched
    voxels keep ``fill``); ``overwrite`` lets later contributions win.
    """

    data_arity = 1
    VOXEL_TOL = 1e-3

    def __init__(self, reference_connection, aggregation="average", fill=0.0, n=1):
        super().__init__(n=n)
        if reference_connection is not None:
            if not isinstance(reference_connection, Connection):
                raise GraphError("reference_connection must be a Connection")
            self.extra_inputs = [reference_connection]
        if aggregation not in ("average", "overwrite"):
            raise ValueError(f"aggregation must be 'average' or 'overwrite', got {aggregation!r}")
        self.aggregation = aggregation
        self.fill = float(fill)

    def _prepare(self):
        if not self.extra_inputs:
            raise GraphError("Put has no reference connection")
        reference = self._current_extras[0]
        if len(reference) != 1:
            raise ContractError(
                f"reference must yield exactly one sample, got {len(reference)}"
            )

    def _generate(self, k):
        reference = self._current_extras[0][0]
        incoming = self._current_inputs[0]
        if not incoming:
            raise ShapeError("Put received an empty sample list")
        features = incoming[0].feature_count
        for sample in incoming:
            if sample.feature_count != features:
                raise ShapeError(
                    "put contributions disagree in feature count: "
                    f"{sample.feature_count} vs {features}"
                )
        dims = reference.spatial_shape
        canvas = np.zeros((1, *dims, features), dtype=np.float64)
        counts = np.zeros((1, *dims, 1), dtype=np.float64)
        ref_inverse = np.linalg.inv(reference.affine[0])
        for sample in incoming:
            for b in range(sample.batch_size):
                relative = ref_inverse @ sample.affine[b]
                if np.abs(relative[:3, :3] - np.eye(3)).max() > self.VOXEL_TOL:
                    raise AlignmentError(
                        "put contribution is rotated or scaled relative to the reference"
                    )
                shift = relative[:3, 3]
                offset = np.round(shift).astype(int)
                if np.abs(shift - offset).max() > self.VOXEL_TOL:
                    raise AlignmentError(
                        f"put contribution offset {shift} is not integer within "
                        f"{self.VOXEL_TOL} voxels"
                    )
                self._paste(canvas, counts, sample.data[b], offset)
        if self.aggregation == "average":
            touched = counts > 0
            out = np.full_like(canvas, self.fill)
            np.divide(canvas, counts, out=out, where=touched)
        else:
            out = np.where(counts > 0, canvas, self.fill)
        return [[Sample(out, affine=reference.affine[:1])]]

    def _paste(self, canvas, counts, patch, offset):
        dims = canvas.shape[1:4]
        src = []
        dst = []
        for axis in range(3):
            d0 = max(offset[axis], 0)
            d1 = min(offset[axis] + patch.shape[axis], dims[axis])
            if d0 >= d1:
                return
            dst.append(slice(d0, d1))
            src.append(slice(d0 - offset[axis], d1 - offset[axis]))
        if self.aggregation == "average":
            canvas[(0, *dst)] += patch[tuple(src)]
            counts[(0, *dst, 0)] += 1.0
        else:
            canvas[(0, *dst)] = patch[tuple(src)]
            counts[(0, *dst, 0)] = 1.0

    def get_config(self):
        return {"aggregation": self.aggregation, "fill": self.fill, "n": self.n}

    @classmethod
    def from_config(cls, config):
        return cls(None, **config)


# ---- the pluggable model node --------------------------------------------------


class SpatialModel:
    """A black-box tensor function with a declared spatial contract.

    ``fn`` maps a list of rank-5 arrays to a list of rank-5 arrays.
    ``output_size_fn`` maps the input spatial sizes to the output spatial
    sizes; ``output_features`` fixes the feature count per output.  By
    default each output sits at unit scale, spatially centered in the first
    input; ``output_to_input`` overrides that with explicit 4x4 voxel maps
    into the first input's grid.

    Bundle files store models by value, so ``fn`` and ``output_size_fn``
    must be picklable (module-level functions or picklable callables).
    Bare creator files store only a (name, content hash) reference.
    """

    def __init__(self, name, fn, output_size_fn, output_features,
                 output_to_input=None, weights_path=None):
        self.name = str(name)
        self.fn = fn
        self.output_size_fn = output_size_fn
        self.output_features = list(output_features)
        self.output_to_input = output_to_input
        self.weights_path = None if weights_path is None else str(weights_path)

    def content_hash(self) -> str:
        if self.weights_path and Path(self.weights_path).exists():
            return hashlib.sha256(Path(self.weights_path).read_bytes()).hexdigest()
        return hashlib.sha256(self.name.encode()).hexdigest()


@register_kind
class ApplyModel(Transformer):
    """Wraps a :class:`SpatialModel` as a graph node.

    Output samples inherit the first input's world frame through the model's
    output-to-input voxel map (default: centered at unit scale, offset
    ``(in - out) // 2``).  Serialized graphs keep only a model reference
    (name and content hash); after loading, attach the model again before
    evaluating.
    """

    data_arity = 1

    def __init__(self, model=None, model_name=None, content_hash=None, n=1):
        super().__init__(n=n)
        self.model = model
        self.model_name = model.name if model is not None else model_name
        self.content_hash = (
            model.content_hash() if model is not None else content_hash
        )

    def attach(self, model: SpatialModel):
        if self.model_name is not None and model.name != self.model_name:
            raise ContractError(
                f"attached model {model.name!r} does not match reference "
                f"{self.model_name!r}"
            )
        self.model = model
        self.model_name = model.name
        self.content_hash = model.content_hash()

    def _generate(self, k):
        if self.model is None:
            raise StateError(
                f"model {self.model_name!r} is not attached; call attach_models() "
                "before evaluating"
            )
        value = self._current_inputs[0]
        if not value:
            raise ShapeError("model node received an empty sample list")
        tensors = [s.data for s in value]
        produced = self.model.fn(tensors)
        expected_sizes = self.model.output_size_fn([s.spatial_shape for s in value])
        if len(produced) != len(expected_sizes) or len(produced) != len(self.model.output_features):
            raise ContractError(
                f"model {self.model.name!r} produced {len(produced)} output(s), "
                f"contract declares {len(expected_sizes)}"
            )
        first = value[0]
        out = []
        for i, tensor in enumerate(produced):
            tensor = np.asarray(tensor, dtype=np.float64)
            expected = (
                first.batch_size,
                *tuple(int(v) for v in expected_sizes[i]),
                self.model.output_features[i],
            )
            if tensor.shape != expected:
                raise ContractError(
                    f"model {self.model.name!r} output {i} has shape {tensor.shape}, "
                    f"contract declares {expected}"
                )
            if self.model.output_to_input is not None:
                voxel_map = np.asarray(self.model.output_to_input[i], dtype=np.float64)
                affine = first.affine @ voxel_map
            else:
                offset = tuple(
                    (d - s) // 2 for d, s in zip(first.spatial_shape, expected_sizes[i])
                )
                affine = compose_offset(first.affine, offset)
            out.append(Sample(tensor, affine=affine))
        return [out]

    def get_config(self):
        return {
            "model_name": self.model_name,
            "content_hash": self.content_hash,
            "n": self.n,
        }

    @classmethod
    def from_config(cls, config):
        return cls(
            model=None,
            model_name=config["model_name"],
            content_hash=config.get("content_hash"),
            n=config["n"],
        )
