"""Static shape and receptive-field calculus for multi-pathway
encoder-decoder architectures.

No layers are built here.  An architecture is a stack of pathways, outer to
inner: each pathway runs its down-stage convolutions, hands the result to
the next (subsampled) pathway, receives it back upsampled, center-crops the
skip connection to match, and runs its up-stage convolutions.  All
arithmetic is per axis and independent across axes.

With valid padding a convolution of kernel ``k`` shrinks an axis by
``k - 1``; entering a deeper pathway divides by the relative subsample
factor (exactly), leaving multiplies by it.  With same padding sizes pass
through convolutions unchanged, but divisibility still applies.

The receptive field composes ``rf += (k - 1) * jump`` per convolution, with
``jump`` scaled by the subsample factor while inside a deeper pathway.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import yaml

from .errors import AdmissibilityError, FormatError


def _triple(value, name):
    out = tuple(int(v) for v in value)
    if len(out) != 3:
        raise FormatError(f"{name} must be a triple, got {value!r}")
    return out


@dataclass(frozen=True)
class Pathway:
    """One resolution level: absolute subsample factors plus its down-stage
    and up-stage kernel lists (per-axis triples)."""

    subsample_factors: tuple
    down_kernels: tuple
    up_kernels: tuple
    down_features: tuple = ()
    up_features: tuple = ()


@dataclass(frozen=True)
class ArchConfig:
    pathways: tuple
    padding: str = "valid"
    output_size: tuple | None = None

    def __post_init__(self):
        if self.padding not in ("valid", "same"):
            raise FormatError(f"padding must be 'valid' or 'same', got {self.padding!r}")
        if not self.pathways:
            raise FormatError("an architecture needs at least one pathway")
        for pathway in self.pathways:
            if any(f < 1 for f in pathway.subsample_factors):
                raise FormatError("subsample factors must be >= 1")
            for kernel in (*pathway.down_kernels, *pathway.up_kernels):
                if any(k % 2 == 0 or k < 1 for k in kernel):
                    raise FormatError(f"kernels must be odd per axis, got {kernel}")

    def relative_factor(self, p: int, axis: int) -> int:
        """Subsample factor of pathway ``p`` relative to pathway ``p - 1``."""
        outer = self.pathways[p - 1].subsample_factors[axis] if p > 0 else 1
        inner = self.pathways[p].subsample_factors[axis]
        if inner % outer != 0:
            raise FormatError(
                f"pathway {p} factor {inner} is not a multiple of outer factor {outer}"
            )
        return inner // outer


def _axis_output(cfg: ArchConfig, axis: int, size: int, pathway: int = 0) -> int:
    shrink = cfg.padding == "valid"

    def convolve(s, kernel, stage):
        if shrink:
            s -= kernel[axis] - 1
        if s < 1:
            raise AdmissibilityError(
                f"axis {axis}: size became {s} at pathway {pathway} {stage} "
                f"conv {kernel[axis]}"
            )
        return s

    p = cfg.pathways[pathway]
    for kernel in p.down_kernels:
        size = convolve(size, kernel, "down")
    if pathway + 1 < len(cfg.pathways):
        factor = cfg.relative_factor(pathway + 1, axis)
        if size % factor != 0:
            raise AdmissibilityError(
                f"axis {axis}: size {size} not divisible by factor {factor} "
                f"entering pathway {pathway + 1}"
            )
        inner = _axis_output(cfg, axis, size // factor, pathway + 1)
        upsampled = inner * factor
        if upsampled > size:
            raise AdmissibilityError(
                f"axis {axis}: upsampled size {upsampled} exceeds the skip size "
                f"{size} at pathway {pathway}"
            )
        size = upsampled
    for kernel in p.up_kernels:
        size = convolve(size, kernel, "up")
    return size


def output_size(cfg: ArchConfig, input_size) -> tuple:
    """Spatial output size for a given input size; raises
    AdmissibilityError naming the failing stage otherwise."""
    input_size = _triple(input_size, "input_size")
    return tuple(_axis_output(cfg, axis, input_size[axis]) for axis in range(3))


def _axis_receptive_field(cfg: ArchConfig, axis: int, pathway: int = 0,
                          rf: int = 1, jump: int = 1) -> int:
    p = cfg.pathways[pathway]
    for kernel in p.down_kernels:
        rf += (kernel[axis] - 1) * jump
    if pathway + 1 < len(cfg.pathways):
        factor = cfg.relative_factor(pathway + 1, axis)
        rf = _axis_receptive_field(cfg, axis, pathway + 1, rf, jump * factor)
    for kernel in p.up_kernels:
        rf += (kernel[axis] - 1) * jump
    return rf


def receptive_field(cfg: ArchConfig) -> tuple:
    """Input extent influencing one output voxel, per axis."""
    return tuple(_axis_receptive_field(cfg, axis) for axis in range(3))


def admissible_input_sizes(cfg: ArchConfig, size_range) -> list:
    """All cubic input sizes in ``range(lo, hi + 1)`` that flow through the
    architecture, paired with their outputs."""
    lo, hi = (int(v) for v in size_range)
    pairs = []
    for size in range(lo, hi + 1):
        try:
            out = output_size(cfg, (size, size, size))
        except AdmissibilityError:
            continue
        pairs.append(((size, size, size), out))
    return pairs


# ---- config files ------------------------------------------------------------


def arch_from_dict(document: dict) -> ArchConfig:
    """Build an ArchConfig from constructor-style keys.

    Expected keys: ``subsample_factors_per_pathway``,
    ``kernel_sizes_per_pathway`` (per pathway: [down kernels, up kernels]),
    optional ``number_features_per_pathway``, ``padding``, ``output_size``.
    """
    try:
        factors = document["subsample_factors_per_pathway"]
        kernel_sizes = document["kernel_sizes_per_pathway"]
    except KeyError as exc:
        raise FormatError(f"architecture config is missing {exc.args[0]!r}") from exc
    if len(factors) != len(kernel_sizes):
        raise FormatError(
            "subsample_factors_per_pathway and kernel_sizes_per_pathway disagree "
            "in pathway count"
        )
    features = document.get("number_features_per_pathway")
    if features is not None and len(features) != len(factors):
        raise FormatError("number_features_per_pathway disagrees in pathway count")

    pathways = []
    for p, (factor, stages) in enumerate(zip(factors, kernel_sizes)):
        if len(stages) != 2:
            raise FormatError(
                f"pathway {p}: kernel sizes must be [down kernels, up kernels]"
            )
        down, up = stages
        feat = features[p] if features is not None else ([], [])
        pathways.append(
            Pathway(
                subsample_factors=_triple(factor, f"pathway {p} factors"),
                down_kernels=tuple(_triple(k, f"pathway {p} down kernel") for k in down),
                up_kernels=tuple(_triple(k, f"pathway {p} up kernel") for k in up),
                down_features=tuple(int(f) for f in feat[0]),
                up_features=tuple(int(f) for f in feat[1]),
            )
        )
    out_size = document.get("output_size")
    return ArchConfig(
        pathways=tuple(pathways),
        padding=document.get("padding", "valid"),
        output_size=None if out_size is None else _triple(out_size, "output_size"),
    )


def load_arch_file(path) -> ArchConfig:
    path = Path(path)
    try:
        document = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise FormatError(f"{path}: not valid YAML: {exc}") from exc
    if not isinstance(document, dict):
        raise FormatError(f"{path}: architecture config must be a mapping")
    return arch_from_dict(document)


def load_preset(name: str) -> ArchConfig:
    """A named architecture preset shipped with the package."""
    ref = resources.files("voxelflow") / "presets" / f"{name}.yaml"
    if not ref.is_file():
        raise KeyError(f"unknown preset {name!r}")
    return arch_from_dict(yaml.safe_load(ref.read_text()))
