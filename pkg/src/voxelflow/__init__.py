"""Spatially-aware pull-based dataflow pipelines for volumetric image data."""

from .sample import Sample, compose_offset, promote
from .catalog import (
    ArrayModality,
    Case,
    Dataset,
    ImageFileModality,
    Mirc,
    Record,
    VolumeFileModality,
    VolumeModality,
    load_catalog_file,
)
from .sampling import CatalogIdentifier, CatalogSampler, DirectIdentifier, Sampler
from .graph import Connection, Creator
from .transformers import (
    AffineDeformation,
    ApplyModel,
    Buffer,
    CatalogInput,
    CenterCrop,
    DirectInput,
    Flip,
    GridCrop,
    Group,
    Put,
    RandomCrop,
    SpatialModel,
    Split,
    Threshold,
)
from .batching import BatchIterator, PipelineBundle
from .netshape import (
    ArchConfig,
    Pathway,
    admissible_input_sizes,
    load_arch_file,
    load_preset,
    output_size,
    receptive_field,
)
from .pipeline_file import load_pipeline_file

__version__ = "0.1.0"

__all__ = [
    "Sample",
    "promote",
    "compose_offset",
    "Mirc",
    "Dataset",
    "Case",
    "Record",
    "VolumeFileModality",
    "VolumeModality",
    "ArrayModality",
    "ImageFileModality",
    "load_catalog_file",
    "Sampler",
    "CatalogSampler",
    "CatalogIdentifier",
    "DirectIdentifier",
    "Connection",
    "Creator",
    "CatalogInput",
    "DirectInput",
    "Split",
    "Group",
    "AffineDeformation",
    "Flip",
    "Threshold",
    "RandomCrop",
    "GridCrop",
    "CenterCrop",
    "Buffer",
    "Put",
    "ApplyModel",
    "SpatialModel",
    "BatchIterator",
    "PipelineBundle",
    "ArchConfig",
    "Pathway",
    "output_size",
    "receptive_field",
    "admissible_input_sizes",
    "load_arch_file",
    "load_preset",
    "load_pipeline_file",
    "__version__",
]
