"""Batched streams over (creator, sampler) pairs, and named output bundles.

One iteration makes a single pass over the sampler, running the creator to
depletion per identifier, optionally routing elements through a bounded
shuffle reservoir and a background prefetch worker, then concatenating
``batch_size`` consecutive elements along the batch axis.  The short final
batch is emitted, never dropped.  Re-randomizing the sampler between passes
is the caller's job.
"""

from __future__ import annotations

import pickle
import queue
import threading
from pathlib import Path

import numpy as np

from .errors import FormatError, GraphError
from .graph import Connection, Creator, check_envelope, rebuild_nodes
from .sample import Sample

BUNDLE_FORMAT = "voxelflow-bundle"
BUNDLE_FORMAT_VERSION = 1

_STOP = object()


def _concat_samples(samples):
    return Sample(
        np.concatenate([s.data for s in samples], axis=0),
        affine=np.concatenate([s.affine for s in samples], axis=0),
    )


def _batch_elements(elements):
    """Concatenate per-connection, per-position samples along the batch axis."""
    first = elements[0]
    batched = []
    for conn_index in range(len(first)):
        values = [element[conn_index] for element in elements]
        lengths = {len(v) for v in values}
        if len(lengths) != 1:
            raise GraphError("stream elements disagree in sample count")
        batched.append(
            [
                _concat_samples([v[pos] for v in values])
                for pos in range(lengths.pop())
            ]
        )
    return batched


class BatchIterator:
    """Finite stream of batched creator outputs over one sampler pass.

    ``shuffle_samples`` is the shuffle-reservoir capacity (0 disables it);
    ``prefetch_size`` is the background queue capacity (0 runs synchronous).
    """

    def __init__(self, creator: Creator, sampler, batch_size: int = 1,
                 shuffle_samples: int = 0, prefetch_size: int = 0, seed=None):
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        if shuffle_samples < 0 or prefetch_size < 0:
            raise ValueError("shuffle_samples and prefetch_size must be >= 0")
        self.creator = creator
        self.sampler = sampler
        self.batch_size = int(batch_size)
        self.shuffle_samples = int(shuffle_samples)
        self.prefetch_size = int(prefetch_size)
        self.seed = seed

    def _elements(self):
        for i in range(len(self.sampler)):
            yield from self.creator.eval(self.sampler[i])

    def _shuffled(self, elements):
        if self.shuffle_samples == 0:
            yield from elements
            return
        rng = np.random.default_rng(self.seed)
        reservoir = []
        for element in elements:
            if len(reservoir) < self.shuffle_samples:
                reservoir.append(element)
                continue
            j = int(rng.integers(self.shuffle_samples))
            yield reservoir[j]
            reservoir[j] = element
        while reservoir:
            j = int(rng.integers(len(reservoir)))
            reservoir[j], reservoir[-1] = reservoir[-1], reservoir[j]
            yield reservoir.pop()

    def _batched(self, elements):
        pending = []
        for element in elements:
            pending.append(element)
            if len(pending) == self.batch_size:
                yield _batch_elements(pending)
                pending = []
        if pending:
            yield _batch_elements(pending)

    def _prefetched(self, batches):
        if self.prefetch_size == 0:
            yield from batches
            return
        out: queue.Queue = queue.Queue(maxsize=self.prefetch_size)
        stop = threading.Event()

        def worker():
            try:
                for batch in batches:
                    while not stop.is_set():
                        try:
                            out.put(batch, timeout=0.1)
                            break
                        except queue.Full:
                            continue
                    if stop.is_set():
                        return
                out.put(_STOP)
            except BaseException as exc:  # propagate into the consumer
                out.put(exc)

        thread = threading.Thread(target=worker, daemon=True)
        thread.start()
        try:
            while True:
                item = out.get()
                if item is _STOP:
                    break
                if isinstance(item, BaseException):
                    raise item
                yield item
        finally:
            stop.set()
            while True:
                try:
                    out.get_nowait()
                except queue.Empty:
                    break
            thread.join(timeout=5.0)

    def __iter__(self):
        return self._prefetched(self._batched(self._shuffled(self._elements())))


class PipelineBundle:
    """Named output sets over one shared transformer graph.

    Every set is served by its own creator, but shared nodes are physically
    shared, so one graph backs all keys.  Unlike a bare creator file, a
    saved bundle carries its spatial models and re-attaches them on load.
    """

    def __init__(self, output_sets: dict, seed: int = 0):
        if not output_sets:
            raise GraphError("a bundle needs at least one named output set")
        for key, conns in output_sets.items():
            if not conns:
                raise GraphError(f"output set {key!r} is empty")
        self.output_sets = {key: list(conns) for key, conns in output_sets.items()}
        self.seed = int(seed)
        self._creators: dict[str, Creator] = {}

    def keys(self):
        return list(self.output_sets)

    def creator(self, key: str) -> Creator:
        """The creator serving one named set; trace-back applies per key."""
        if key not in self.output_sets:
            raise KeyError(f"unknown output set {key!r}; have {self.keys()}")
        if key not in self._creators:
            self._creators[key] = Creator(self.output_sets[key], seed=self.seed)
        return self._creators[key]

    def whole_creator(self) -> Creator:
        """A creator over the union of all named sets (the whole graph)."""
        union = []
        for conns in self.output_sets.values():
            union.extend(conns)
        return Creator(union, seed=self.seed)

    def save(self, path) -> None:
        from .transformers import ApplyModel

        whole = self.whole_creator()
        models = {}
        for node in whole.nodes:
            if isinstance(node, ApplyModel):
                if node.model is None:
                    raise FormatError(
                        f"cannot save a bundle with unattached model {node.model_name!r}"
                    )
                models[node.model_name] = node.model
        envelope = {
            "format": BUNDLE_FORMAT,
            "version": BUNDLE_FORMAT_VERSION,
            "seed": self.seed,
            "nodes": whole.node_table(),
            "sets": {
                key: [[whole.name_of(c.node), c.slot] for c in conns]
                for key, conns in self.output_sets.items()
            },
            "models": models,
        }
        Path(path).write_bytes(pickle.dumps(envelope))

    @classmethod
    def load(cls, path) -> "PipelineBundle":
        envelope = pickle.loads(Path(path).read_bytes())
        check_envelope(envelope, BUNDLE_FORMAT, BUNDLE_FORMAT_VERSION)
        by_name = rebuild_nodes(envelope["nodes"])
        sets = {
            key: [Connection(by_name[name], slot) for name, slot in conns]
            for key, conns in envelope["sets"].items()
        }
        bundle = cls(sets, seed=envelope["seed"])
        models = envelope.get("models", {})
        for node in by_name.values():
            from .transformers import ApplyModel

            if isinstance(node, ApplyModel) and node.model is None:
                model = models.get(node.model_name)
                if model is not None:
                    node.attach(model)
        return bundle
