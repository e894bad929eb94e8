"""Hierarchical organization of native data.

A :class:`Mirc` groups datasets, a dataset groups cases, a case groups
records, and a record groups modalities.  Every level is an id-keyed,
insertion-ordered collection.  Modalities load lazily: nothing touches the
filesystem until ``load()`` is called, and repeated loads of the same
modality yield equal samples.

Catalogs can also be declared in a versioned YAML file; see
``docs/file_formats.md`` for the schema and :func:`load_catalog_file`.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import FormatError, ShapeError
from .nifti import NiftiVolume, read_nifti
from .sample import AFFINE_TOL, Sample, promote


def _volume_to_sample(data: np.ndarray, affine: np.ndarray) -> Sample:
    """Lift a stored volume array (rank 3 or 4) into a batch-1 sample.

    Rank 3 gets a singleton feature axis; for rank 4 the trailing axis is
    taken as the feature axis.  Anything else must go through promote().
    """
    if data.ndim == 3:
        data = promote(data, ("s0", "s1", "s2"))
    elif data.ndim == 4:
        data = promote(data, ("s0", "s1", "s2", "feature"))
    else:
        raise ShapeError(
            f"cannot infer axes of a rank-{data.ndim} volume; use promote() explicitly"
        )
    return Sample(data, affine=affine[None, ...])


class Modality:
    """Something that yields a Sample when ``load()`` is called."""

    def __init__(self, modality_id: str):
        self.id = modality_id

    def load(self) -> Sample:
        raise NotImplementedError


class VolumeFileModality(Modality):
    """A NIfTI volume on disk; affine comes from the file header."""

    def __init__(self, modality_id: str, path):
        super().__init__(modality_id)
        self.path = Path(path)

    def load(self) -> Sample:
        volume = read_nifti(self.path)
        return _volume_to_sample(volume.data, volume.affine)


class VolumeModality(Modality):
    """An already-parsed volume object (data plus 4x4 affine)."""

    def __init__(self, modality_id: str, volume: NiftiVolume):
        super().__init__(modality_id)
        self.volume = volume

    def load(self) -> Sample:
        return _volume_to_sample(self.volume.data, self.volume.affine)


class ArrayModality(Modality):
    """An in-memory array (scalar, rank-3 volume, rank-4 volume+features, or
    full rank 5) with an optional affine."""

    def __init__(self, modality_id: str, array, affine=None):
        super().__init__(modality_id)
        self.array = np.asarray(array, dtype=np.float64)
        self.affine = None if affine is None else np.asarray(affine, dtype=np.float64)

    def load(self) -> Sample:
        data = self.array
        if data.ndim == 0:
            data = promote(data, ())
        elif data.ndim == 3:
            data = promote(data, ("s0", "s1", "s2"))
        elif data.ndim == 4:
            data = promote(data, ("s0", "s1", "s2", "feature"))
        elif data.ndim != 5:
            raise ShapeError(
                f"cannot infer axes of a rank-{data.ndim} array; pass a rank-5 array "
                "or use promote() explicitly"
            )
        affine = self.affine
        if affine is not None and affine.ndim == 2:
            affine = affine[None, ...]
        return Sample(data, affine=affine)


class ImageFileModality(Modality):
    """One or more 2-D image files (PNG/JPG); the third spatial axis is a
    singleton and color channels land on the feature axis.  Multiple paths
    are stacked along the feature axis and must agree in size."""

    def __init__(self, modality_id: str, paths):
        super().__init__(modality_id)
        if isinstance(paths, (str, Path)):
            paths = [paths]
        self.paths = [Path(p) for p in paths]

    def load(self) -> Sample:
        from PIL import Image

        planes = []
        for path in self.paths:
            with Image.open(path) as img:
                arr = np.asarray(img, dtype=np.float64)
            if arr.ndim == 2:
                arr = arr[:, :, None]
            planes.append(arr)
        if len({p.shape[:2] for p in planes}) != 1:
            raise ShapeError("image files in one modality must share height and width")
        stacked = np.concatenate(planes, axis=2)
        return Sample(promote(stacked, ("s0", "s1", "feature")))


class _IdCollection:
    """Insertion-ordered, id-keyed container shared by all catalog levels."""

    child_name = "child"

    def __init__(self, own_id: str):
        self.id = own_id
        self._children: dict[str, object] = {}

    def add(self, child):
        if child.id in self._children:
            raise ValueError(f"duplicate {self.child_name} id {child.id!r} in {self.id!r}")
        self._children[child.id] = child
        return self

    def __getitem__(self, child_id):
        return self._children[child_id]

    def __contains__(self, child_id):
        return child_id in self._children

    def __iter__(self):
        return iter(self._children)

    def __len__(self):
        return len(self._children)

    def values(self):
        return self._children.values()


class Record(_IdCollection):
    child_name = "modality"


class Case(_IdCollection):
    child_name = "record"


class Dataset(_IdCollection):
    child_name = "case"


@dataclass
class ModalityInfo:
    """Spatial facts about one loaded modality."""

    spatial_shape: tuple
    voxel_size: tuple
    affine: np.ndarray


@dataclass
class RecordInspection:
    dataset_id: str
    case_id: str
    record_id: str
    modalities: dict  # modality id -> ModalityInfo, or None when missing


@dataclass
class InspectionReport:
    """Per-record spatial facts, consistency flags, and voxel-size stats."""

    entries: list = field(default_factory=list)
    flags: list = field(default_factory=list)  # (dataset, case, record, reason)
    voxel_size_stats: dict = field(default_factory=dict)  # axis -> {min, median, max}

    @property
    def consistent(self) -> bool:
        return not self.flags

    def to_dict(self) -> dict:
        return {
            "consistent": self.consistent,
            "flags": [
                {"dataset_id": d, "case_id": c, "record_id": r, "reason": reason}
                for d, c, r, reason in self.flags
            ],
            "records": [
                {
                    "dataset_id": e.dataset_id,
                    "case_id": e.case_id,
                    "record_id": e.record_id,
                    "modalities": {
                        mid: (
                            None
                            if info is None
                            else {
                                "spatial_shape": list(info.spatial_shape),
                                "voxel_size": list(info.voxel_size),
                                "affine": np.asarray(info.affine).tolist(),
                            }
                        )
                        for mid, info in e.modalities.items()
                    },
                }
                for e in self.entries
            ],
            "voxel_size_stats": self.voxel_size_stats,
        }

    def format(self) -> str:
        lines = []
        for e in self.entries:
            lines.append(f"{e.dataset_id}/{e.case_id}/{e.record_id}:")
            for mid, info in e.modalities.items():
                if info is None:
                    lines.append(f"  {mid}: missing")
                else:
                    vs = ", ".join(f"{v:.4g}" for v in info.voxel_size)
                    lines.append(f"  {mid}: shape {info.spatial_shape}, voxel size ({vs}) mm")
        for axis in sorted(self.voxel_size_stats):
            s = self.voxel_size_stats[axis]
            lines.append(
                f"voxel size axis {axis}: min {s['min']:.4g}, "
                f"median {s['median']:.4g}, max {s['max']:.4g}"
            )
        if self.flags:
            for d, c, r, reason in self.flags:
                lines.append(f"INCONSISTENT {d}/{c}/{r}: {reason}")
        else:
            lines.append("all records consistent")
        return "\n".join(lines)


class Mirc:
    """Top-level grouping of datasets with catalog-wide queries."""

    def __init__(self, *datasets: Dataset):
        self._datasets: dict[str, Dataset] = {}
        for dataset in datasets:
            self.add(dataset)

    def add(self, dataset: Dataset):
        if dataset.id in self._datasets:
            raise ValueError(f"duplicate dataset id {dataset.id!r}")
        self._datasets[dataset.id] = dataset
        return self

    def __getitem__(self, dataset_id) -> Dataset:
        return self._datasets[dataset_id]

    def __contains__(self, dataset_id):
        return dataset_id in self._datasets

    def __iter__(self):
        return iter(self._datasets)

    def __len__(self):
        return len(self._datasets)

    def datasets(self):
        return self._datasets.values()

    def walk_records(self):
        """Yield (dataset, case, record) in insertion order at every level."""
        for dataset in self._datasets.values():
            for case in dataset.values():
                for record in case.values():
                    yield dataset, case, record

    # ---- id queries ------------------------------------------------------

    def dataset_ids(self):
        return list(self._datasets)

    def case_ids(self):
        ids = {}
        for dataset in self._datasets.values():
            for case_id in dataset:
                ids[case_id] = None
        return list(ids)

    def record_ids(self):
        ids = {}
        for _, _, record in self.walk_records():
            ids[record.id] = None
        return list(ids)

    def modality_ids(self):
        ids = {}
        for _, _, record in self.walk_records():
            for modality_id in record:
                ids[modality_id] = None
        return list(ids)

    def ids_at_level(self, level: str):
        """Distinct ids at one of {dataset, case, record, modality}, in
        deterministic traversal order."""
        accessor = {
            "dataset": self.dataset_ids,
            "case": self.case_ids,
            "record": self.record_ids,
            "modality": self.modality_ids,
        }.get(level)
        if accessor is None:
            raise ValueError(f"unknown level {level!r}")
        return accessor()

    # ---- statistics ------------------------------------------------------

    def mean_and_std(self, modality_id: str, n: int | None = None):
        """Mean and population standard deviation over all voxels of the
        first ``n`` records carrying the modality (all records when ``n`` is
        None)."""
        total = 0.0
        total_sq = 0.0
        count = 0
        used = 0
        for _, _, record in self.walk_records():
            if modality_id not in record:
                continue
            if n is not None and used >= n:
                break
            values = record[modality_id].load().data
            total += float(values.sum())
            total_sq += float(np.square(values).sum())
            count += values.size
            used += 1
        if used == 0:
            raise KeyError(f"modality {modality_id!r} not present in any record")
        mean = total / count
        variance = max(total_sq / count - mean * mean, 0.0)
        return mean, float(np.sqrt(variance))

    def inspect(self, modality_ids, ns=None) -> InspectionReport:
        """Collect spatial facts for the listed modalities and flag records
        whose modalities disagree in shape or affine."""
        modality_ids = list(modality_ids)
        if ns is None:
            ns = [None] * len(modality_ids)
        ns = list(ns)
        if len(ns) != len(modality_ids):
            raise ValueError("modality_ids and ns must have the same length")

        report = InspectionReport()
        seen = {mid: 0 for mid in modality_ids}
        voxel_sizes = {0: [], 1: [], 2: []}
        for dataset, case, record in self.walk_records():
            row = {}
            for mid, limit in zip(modality_ids, ns):
                if mid not in record:
                    row[mid] = None
                    continue
                if limit is not None and seen[mid] >= limit:
                    continue
                seen[mid] += 1
                sample = record[mid].load()
                affine = sample.affine[0]
                voxel_size = tuple(np.linalg.norm(affine[:3, :3], axis=0))
                row[mid] = ModalityInfo(
                    spatial_shape=tuple(sample.spatial_shape),
                    voxel_size=voxel_size,
                    affine=affine,
                )
                for axis in range(3):
                    voxel_sizes[axis].append(voxel_size[axis])
            if not row:
                continue
            report.entries.append(
                RecordInspection(dataset.id, case.id, record.id, row)
            )
            present = [info for info in row.values() if info is not None]
            if len(present) > 1:
                shapes = {info.spatial_shape for info in present}
                if len(shapes) > 1:
                    report.flags.append(
                        (dataset.id, case.id, record.id, f"shape mismatch: {sorted(shapes)}")
                    )
                else:
                    base = present[0].affine
                    for info in present[1:]:
                        if np.abs(info.affine - base).max() > AFFINE_TOL:
                            report.flags.append(
                                (dataset.id, case.id, record.id, "affine mismatch")
                            )
                            break
        for axis in range(3):
            values = voxel_sizes[axis]
            if values:
                report.voxel_size_stats[axis] = {
                    "min": min(values),
                    "median": statistics.median(values),
                    "max": max(values),
                }
        return report

    def scalar_table(self, modality_id: str):
        """One (dataset_id, case_id, record_id, value) row per record whose
        modality loads to a single-element sample; records lacking the
        modality are skipped."""
        rows = []
        for dataset, case, record in self.walk_records():
            if modality_id not in record:
                continue
            sample = record[modality_id].load()
            if sample.data.size != 1:
                raise ShapeError(
                    f"modality {modality_id!r} in {dataset.id}/{case.id}/{record.id} "
                    f"is not scalar (shape {sample.shape})"
                )
            rows.append((dataset.id, case.id, record.id, float(sample.data.reshape(()))))
        return rows


# ---- catalog spec files ---------------------------------------------------

CATALOG_FORMAT_VERSION = 1


def load_catalog_file(path) -> Mirc:
    """Build a Mirc from a versioned YAML declaration.

    Modality ``path`` entries are resolved relative to the catalog file's
    directory.  See ``docs/file_formats.md`` for the schema.
    """
    path = Path(path)
    try:
        document = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise FormatError(f"{path}: not valid YAML: {exc}") from exc
    if not isinstance(document, dict):
        raise FormatError(f"{path}: catalog file must be a mapping")
    version = document.get("version")
    if version != CATALOG_FORMAT_VERSION:
        raise FormatError(
            f"{path}: unsupported catalog version {version!r} "
            f"(expected {CATALOG_FORMAT_VERSION})"
        )
    base = path.parent
    mirc = Mirc()
    for dataset_doc in _require(document, "datasets", path):
        dataset = Dataset(_require_id(dataset_doc, "dataset", path))
        for case_doc in _require(dataset_doc, "cases", path):
            case = Case(_require_id(case_doc, "case", path))
            for record_doc in _require(case_doc, "records", path):
                record = Record(_require_id(record_doc, "record", path))
                for modality_doc in _require(record_doc, "modalities", path):
                    record.add(_build_modality(modality_doc, base, path))
                case.add(record)
            dataset.add(case)
        mirc.add(dataset)
    return mirc


def _require(doc, key, path):
    value = doc.get(key)
    if not isinstance(value, list):
        raise FormatError(f"{path}: expected a list under {key!r}")
    return value


def _require_id(doc, what, path):
    if not isinstance(doc, dict) or "id" not in doc:
        raise FormatError(f"{path}: every {what} needs an 'id' field")
    return str(doc["id"])


def _build_modality(doc, base: Path, path) -> Modality:
    modality_id = _require_id(doc, "modality", path)
    kind = doc.get("kind")
    if kind == "volume":
        if "path" not in doc:
            raise FormatError(f"{path}: volume modality {modality_id!r} needs 'path'")
        return VolumeFileModality(modality_id, base / doc["path"])
    if kind == "image":
        if "path" in doc:
            paths = [base / doc["path"]]
        elif "paths" in doc:
            paths = [base / p for p in doc["paths"]]
        else:
            raise FormatError(f"{path}: image modality {modality_id!r} needs 'path' or 'paths'")
        return ImageFileModality(modality_id, paths)
    if kind == "scalar":
        if "value" not in doc:
            raise FormatError(f"{path}: scalar modality {modality_id!r} needs 'value'")
        return ArrayModality(modality_id, float(doc["value"]))
    raise FormatError(
        f"{path}: modality {modality_id!r} has unknown kind {kind!r} "
        "(expected volume, image, or scalar)"
    )
