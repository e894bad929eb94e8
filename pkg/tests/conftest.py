import numpy as np
import pytest
import yaml

from voxelflow import ArrayModality, Case, Dataset, Mirc, Record, Sample
from voxelflow.nifti import write_nifti


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def random_affine(rng, max_spacing=3.0):
    """A well-conditioned random voxel-to-world matrix."""
    from scipy.spatial.transform import Rotation

    affine = np.eye(4)
    rotation = Rotation.from_euler("xyz", rng.uniform(-np.pi, np.pi, 3)).as_matrix()
    spacing = rng.uniform(0.5, max_spacing, 3)
    affine[:3, :3] = rotation @ np.diag(spacing)
    affine[:3, 3] = rng.uniform(-50.0, 50.0, 3)
    return affine


def make_sample(rng, shape=(1, 16, 16, 16, 1), affine=None, binary=False):
    data = rng.random(shape)
    if binary:
        data = (data > 0.5).astype(np.float64)
    return Sample(data, affine=affine)


def build_mirc(rng, n_cases=2, records_per_case=1, shape=(12, 10, 8),
               dataset_id="train", with_age=True):
    """In-memory catalog: per record a 'vol', a binary 'gt', and an 'age'."""
    dataset = Dataset(dataset_id)
    for c in range(n_cases):
        case = Case(f"subject_{c}")
        for r in range(records_per_case):
            record = Record(f"obs_{r}")
            affine = np.eye(4)
            affine[:3, 3] = (c, r, 0)
            record.add(ArrayModality("vol", rng.random(shape), affine=affine))
            record.add(ArrayModality("gt", (rng.random(shape) > 0.4).astype(float), affine=affine))
            if with_age:
                record.add(ArrayModality("age", 20.0 + 10 * c + r))
            case.add(record)
        dataset.add(case)
    return Mirc(dataset)


def write_catalog(tmp_path, rng, n_cases=2, shape=(12, 10, 8), affine=None,
                  gt_affine=None, gt_shape=None):
    """A file-backed catalog: NIfTI vol/gt plus a scalar age per case."""
    if affine is None:
        affine = np.eye(4)
        affine[0, 0] = 2.0
        affine[:3, 3] = (1.0, -2.0, 3.5)
    cases = []
    for c in range(n_cases):
        case_dir = tmp_path / f"case_{c}"
        case_dir.mkdir(exist_ok=True)
        write_nifti(case_dir / "vol.nii.gz", rng.random(shape), affine)
        write_nifti(
            case_dir / "gt.nii.gz",
            (rng.random(gt_shape or shape) > 0.4).astype(float),
            gt_affine if gt_affine is not None else affine,
        )
        cases.append(
            {
                "id": f"subject_{c}",
                "records": [
                    {
                        "id": "obs_0",
                        "modalities": [
                            {"id": "vol", "kind": "volume", "path": f"case_{c}/vol.nii.gz"},
                            {"id": "gt", "kind": "volume", "path": f"case_{c}/gt.nii.gz"},
                            {"id": "age", "kind": "scalar", "value": 40 + c},
                        ],
                    }
                ],
            }
        )
    document = {"version": 1, "datasets": [{"id": "train", "cases": cases}]}
    path = tmp_path / "catalog.yaml"
    path.write_text(yaml.safe_dump(document))
    return path


RECON_PIPELINE = """\
version: 1
seed: 0
nodes:
  - {name: vol, kind: catalog_input, modalities: [vol], n: 1}
  - {name: tiles, kind: grid_crop, sizes: [5, 4, 3], overlap: [1, 1, 0], inputs: [vol]}
  - {name: buf, kind: buffer, inputs: [tiles]}
  - {name: recon, kind: put, reference: vol, inputs: [buf]}
outputs:
  full: [recon]
"""

TRAIN_PIPELINE = """\
version: 1
seed: 7
nodes:
  - {name: xy, kind: catalog_input, modalities: [vol, gt], n: 1}
  - {name: x, kind: split, indices: [0], inputs: [xy]}
  - name: warp
    kind: affine_deformation
    reference: x
    rotation_window_width: [1, 0, 0]
    translation_window_width: [10, 10, 0]
    inputs: [xy]
  - {name: flipped, kind: flip, flip_probabilities: [0.5, 0, 0], n: 2, inputs: [warp]}
  - {name: xflip, kind: split, indices: [0], inputs: [flipped]}
  - {name: mask, kind: threshold, lower_threshold: -1.0, inputs: [xflip]}
  - {name: crop, kind: random_crop, mask: mask, sizes: [6, 6, 6], nonzero: true, n: 4, inputs: [flipped]}
outputs:
  train: [crop]
"""

MODEL_PIPELINE = """\
version: 1
seed: 0
nodes:
  - {name: x, kind: catalog_input, modalities: [vol], n: 1}
  - {name: pred, kind: model, model_name: mynet, inputs: [x]}
outputs:
  predict: [pred]
"""


def write_pipeline(tmp_path, text, name="pipeline.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def build_random_dag(dag_rng):
    """A random small DAG built twice over: an abstract spec for the step
    simulator and the same topology as live transformer nodes.

    Returns (spec, requested_connections, requested_names).
    """
    from voxelflow import DirectInput, Group, Split

    spec = {}
    conns = {}
    for i in range(int(dag_rng.integers(1, 3))):
        name = f"in{i}"
        n = int(dag_rng.integers(1, 5))
        spec[name] = {"kind": "input", "n": n, "inputs": []}
        conns[name] = DirectInput(n=n)()
    names = list(spec)
    for t in range(int(dag_rng.integers(1, 7))):
        name = f"t{t}"
        n = int(dag_rng.integers(1, 5))
        k = int(dag_rng.integers(1, min(3, len(names)) + 1))
        parents = [names[j] for j in dag_rng.choice(len(names), size=k, replace=False)]
        spec[name] = {"kind": "transform", "n": n, "inputs": parents}
        if len(parents) == 1:
            conns[name] = Split((0,), n=n)(conns[parents[0]])
        else:
            conns[name] = Group(n=n)(*[conns[p] for p in parents])
        names.append(name)
    n_req = int(dag_rng.integers(1, min(3, len(names)) + 1))
    requested = [names[j] for j in dag_rng.choice(len(names), size=n_req, replace=False)]
    return spec, [conns[r] for r in requested], requested
