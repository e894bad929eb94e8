"""Declarative pipeline files: a versioned YAML mirror of programmatic graph
construction.

Nodes are declared in order and may only reference earlier nodes, so every
document parses to a DAG.  A node's outputs are addressed as ``name`` (its
first output slot) or ``name.k``.  See ``docs/file_formats.md``.
"""

from __future__ import annotations

import re
from pathlib import Path

import yaml

from .batching import PipelineBundle
from .errors import FormatError
from . import transformers as tf

PIPELINE_FORMAT_VERSION = 1

_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def _resolve(ref, outputs_by_name, path):
    if not isinstance(ref, str):
        raise FormatError(f"{path}: connection reference must be a string, got {ref!r}")
    name, _, slot = ref.partition(".")
    if name not in outputs_by_name:
        raise FormatError(f"{path}: reference to undefined node {name!r}")
    conns = outputs_by_name[name]
    index = int(slot) if slot else 0
    if not 0 <= index < len(conns):
        raise FormatError(
            f"{path}: node {name!r} has {len(conns)} output(s), no slot {index}"
        )
    return conns[index]


def _pop(doc, key, path, default=None, required=False):
    if required and key not in doc:
        raise FormatError(f"{path}: node {doc.get('name')!r} needs {key!r}")
    return doc.pop(key, default)


def load_pipeline_file(path, seed=None) -> PipelineBundle:
    """Build a :class:`PipelineBundle` from a pipeline document.

    ``seed`` overrides the document's master seed when given.
    """
    path = Path(path)
    try:
        document = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise FormatError(f"{path}: not valid YAML: {exc}") from exc
    if not isinstance(document, dict):
        raise FormatError(f"{path}: pipeline file must be a mapping")
    version = document.get("version")
    if version != PIPELINE_FORMAT_VERSION:
        raise FormatError(
            f"{path}: unsupported pipeline version {version!r} "
            f"(expected {PIPELINE_FORMAT_VERSION})"
        )
    if seed is None:
        seed = int(document.get("seed", 0))

    outputs_by_name: dict[str, list] = {}
    nodes = document.get("nodes")
    if not isinstance(nodes, list) or not nodes:
        raise FormatError(f"{path}: pipeline file needs a non-empty 'nodes' list")
    for doc in nodes:
        if not isinstance(doc, dict):
            raise FormatError(f"{path}: every node must be a mapping")
        doc = dict(doc)
        name = _pop(doc, "name", path, required=True)
        if not isinstance(name, str) or not _NAME_RE.match(name):
            raise FormatError(f"{path}: invalid node name {name!r}")
        if name in outputs_by_name:
            raise FormatError(f"{path}: duplicate node name {name!r}")
        kind = _pop(doc, "kind", path, required=True)
        input_refs = _pop(doc, "inputs", path, default=[])
        inputs = [_resolve(ref, outputs_by_name, path) for ref in input_refs]
        try:
            conns = _build_node(kind, doc, inputs, outputs_by_name, path)
        except (TypeError, ValueError) as exc:
            raise FormatError(f"{path}: node {name!r}: {exc}") from exc
        outputs_by_name[name] = conns

    sets_doc = document.get("outputs")
    if not isinstance(sets_doc, dict) or not sets_doc:
        raise FormatError(f"{path}: pipeline file needs a non-empty 'outputs' mapping")
    output_sets = {
        str(key): [_resolve(ref, outputs_by_name, path) for ref in refs]
        for key, refs in sets_doc.items()
    }
    return PipelineBundle(output_sets, seed=seed)


def _build_node(kind, doc, inputs, outputs_by_name, path):
    def reference(key):
        ref = _pop(doc, key, path, required=True)
        return _resolve(ref, outputs_by_name, path)

    if kind == "catalog_input":
        node = tf.CatalogInput(
            _pop(doc, "modalities", path, required=True),
            n=_pop(doc, "n", path, default=1),
            output_shapes=_pop(doc, "output_shapes", path),
        )
        result = node()
    elif kind == "direct_input":
        node = tf.DirectInput(
            n=_pop(doc, "n", path, default=1),
            output_shapes=_pop(doc, "output_shapes", path),
        )
        result = node()
    elif kind == "split":
        result = tf.Split(
            indices=_pop(doc, "indices", path, required=True),
            n=_pop(doc, "n", path, default=1),
        )(*inputs)
    elif kind == "group":
        result = tf.Group(n=_pop(doc, "n", path, default=1))(*inputs)
    elif kind == "flip":
        result = tf.Flip(
            flip_probabilities=_pop(doc, "flip_probabilities", path, required=True),
            n=_pop(doc, "n", path, default=1),
        )(*inputs)
    elif kind == "affine_deformation":
        result = tf.AffineDeformation(
            reference(key="reference"),
            rotation_window_width=_pop(doc, "rotation_window_width", path, default=(0, 0, 0)),
            translation_window_width=_pop(doc, "translation_window_width", path, default=(0, 0, 0)),
            scaling_window_width=_pop(doc, "scaling_window_width", path),
            interpolation=_pop(doc, "interpolation", path, default="linear"),
            fill=_pop(doc, "fill", path, default=0.0),
            n=_pop(doc, "n", path, default=1),
        )(*inputs)
    elif kind == "threshold":
        result = tf.Threshold(
            lower_threshold=_pop(doc, "lower_threshold", path, default=0.0),
            upper_threshold=_pop(doc, "upper_threshold", path),
            n=_pop(doc, "n", path, default=1),
        )(*inputs)
    elif kind == "random_crop":
        result = tf.RandomCrop(
            reference(key="mask"),
            sizes=_pop(doc, "sizes", path, required=True),
            nonzero=_pop(doc, "nonzero", path, default=False),
            n=_pop(doc, "n", path, default=1),
            fill=_pop(doc, "fill", path, default=0.0),
        )(*inputs)
    elif kind == "grid_crop":
        result = tf.GridCrop(
            sizes=_pop(doc, "sizes", path, required=True),
            overlap=_pop(doc, "overlap", path, default=(0, 0, 0)),
            fill=_pop(doc, "fill", path, default=0.0),
        )(*inputs)
    elif kind == "center_crop":
        result = tf.CenterCrop(
            size=_pop(doc, "size", path, required=True),
            n=_pop(doc, "n", path, default=1),
        )(*inputs)
    elif kind == "buffer":
        result = tf.Buffer(buffer_size=_pop(doc, "buffer_size", path))(*inputs)
    elif kind == "put":
        result = tf.Put(
            reference(key="reference"),
            aggregation=_pop(doc, "aggregation", path, default="average"),
            fill=_pop(doc, "fill", path, default=0.0),
            n=_pop(doc, "n", path, default=1),
        )(*inputs)
    elif kind == "model":
        result = tf.ApplyModel(
            model=None,
            model_name=_pop(doc, "model_name", path, required=True),
            n=_pop(doc, "n", path, default=1),
        )(*inputs)
    else:
        raise FormatError(f"{path}: unknown node kind {kind!r}")
    if doc:
        raise FormatError(
            f"{path}: unknown option(s) {sorted(doc)} for kind {kind!r}"
        )
    return list(result) if isinstance(result, tuple) else [result]
