"""Pull-based transformer graph and its Creator wrapper.

Evaluation is demand driven.  Each node counts its emissions within an
evaluation (a sequence number); a consumer remembers the last sequence it
consumed per upstream node and pulls "something newer than what I saw".
A node satisfies a pull either from its memoized current emission (another
consumer already advanced it this step) or by advancing: emitting the next
of its ``n`` outputs for its current input, or, when exhausted, recursively
pulling fresh values from all of its input connections first.

An input node asked to advance beyond its ``n`` raises :class:`Depleted`,
which ends the whole generation.  That is the normal end of a stream, not
a failure.  Buffers are the one deliberate exception to one-advance-per-
step: a buffer drains its upstream inside a single pull, consuming many
upstream emissions to emit one batched value.
"""

from __future__ import annotations

import hashlib
import pickle
from pathlib import Path

import numpy as np

from .errors import ContractError, Depleted, FormatError, GraphError, StateError

CREATOR_FORMAT = "voxelflow-creator"
CREATOR_FORMAT_VERSION = 1

KINDS: dict[str, type] = {}


def register_kind(cls):
    """Make a transformer class reconstructible from serialized graphs."""
    KINDS[cls.__name__] = cls
    return cls


def node_rng(master_seed: int, name: str) -> np.random.Generator:
    """Derive a node's random stream from the creator seed and node name."""
    digest = hashlib.blake2s(
        f"{master_seed}/{name}".encode(), digest_size=16
    ).digest()
    return np.random.default_rng(int.from_bytes(digest, "little"))


class Connection:
    """A handle to one output slot of one node."""

    __slots__ = ("node", "slot")

    def __init__(self, node, slot: int):
        self.node = node
        self.slot = slot

    def __repr__(self):
        return f"Connection({type(self.node).__name__}, slot={self.slot})"


class Transformer:
    """Base graph node: consumes lists of samples, emits lists of samples.

    Subclasses implement :meth:`_generate` (and optionally :meth:`_prepare`
    for per-input setup).  ``n`` is the number of outputs emitted per
    consumed input; data-dependent kinds override ``_input_multiplicity``.
    """

    data_arity: int | None = None  # None: any number of data connections
    collapses = False  # True: all inputs feed one output slot (Group)

    def __init__(self, n: int = 1):
        if int(n) < 1:
            raise ValueError(f"n must be a positive integer, got {n}")
        self.n = int(n)
        self.inputs: list[Connection] = []
        self.extra_inputs: list[Connection] = []
        self.output_shapes = None
        self._rng = np.random.default_rng(0)
        self.reset()

    # ---- graph construction ------------------------------------------------

    def __call__(self, *connections):
        if len(connections) == 1 and isinstance(connections[0], (list, tuple)):
            connections = tuple(connections[0])
        if not connections:
            raise GraphError(f"{type(self).__name__} called with no connections")
        for conn in connections:
            if not isinstance(conn, Connection):
                raise GraphError(f"expected a Connection, got {type(conn).__name__}")
        start = len(self.inputs)
        self.inputs.extend(connections)
        if self.data_arity is not None and len(self.inputs) > self.data_arity:
            raise GraphError(
                f"{type(self).__name__} accepts at most {self.data_arity} input connection(s)"
            )
        if self.collapses:
            return Connection(self, 0)
        outs = tuple(Connection(self, start + i) for i in range(len(connections)))
        return outs[0] if len(outs) == 1 else outs

    def upstream_connections(self):
        return list(self.inputs) + list(self.extra_inputs)

    @property
    def output_arity(self) -> int:
        if self.collapses:
            return 1
        return max(len(self.inputs), 1)

    # ---- evaluation state ----------------------------------------------------

    def reset(self):
        self._seq = 0
        self._outputs = None
        self._produced = 0
        self._n_current = self.n
        self._has_input = False
        self._consumed_seq: dict[int, int] = {}
        self._current_inputs: list = []
        self._current_extras: list = []
        self._reset_extra()

    def _reset_extra(self):
        pass

    def pull(self, min_seq: int):
        """Return this node's outputs with sequence >= ``min_seq``, advancing
        at most once."""
        if self._seq < min_seq:
            self._advance()
        return self._outputs

    def _advance(self):
        if not self._has_input or self._produced >= self._n_current:
            self._consume_fresh()
            self._produced = 0
        self._outputs = self._generate(self._produced)
        self._produced += 1
        self._seq += 1

    def _consume_fresh(self):
        if not self.inputs:
            raise GraphError(f"{type(self).__name__} has no input connections")
        fresh: dict[int, list] = {}
        for conn in self.upstream_connections():
            key = id(conn.node)
            if key not in fresh:
                fresh[key] = conn.node.pull(self._consumed_seq.get(key, 0) + 1)
                self._consumed_seq[key] = conn.node._seq
        self._current_inputs = [fresh[id(c.node)][c.slot] for c in self.inputs]
        self._current_extras = [fresh[id(c.node)][c.slot] for c in self.extra_inputs]
        self._has_input = True
        self._prepare()
        self._n_current = self._input_multiplicity()

    def _prepare(self):
        """Per-input hook: validate inputs, cache derived data."""

    def _input_multiplicity(self) -> int:
        """Outputs to emit for the current input; data-dependent kinds override."""
        return self.n

    def _generate(self, k: int):
        """Produce the list of slot values for emission ``k`` of the current
        input."""
        raise NotImplementedError

    def _n_label(self) -> str:
        return str(self.n)

    # ---- serialization -------------------------------------------------------

    def get_config(self) -> dict:
        return {"n": self.n}

    @classmethod
    def from_config(cls, config: dict):
        return cls(**config)


class InputTransformer(Transformer):
    """Start of a graph: converts a loaded identifier into sample lists and
    emits it ``n`` times before depleting."""

    data_arity = 0

    def __init__(self, n: int = 1, output_shapes=None):
        super().__init__(n=n)
        self.output_shapes = output_shapes
        self._samples = None

    def __call__(self):
        return Connection(self, 0)

    @property
    def output_arity(self) -> int:
        return 1

    def _reset_extra(self):
        self._samples = None

    def load(self, identifier):
        self._samples = self._samples_from(identifier)
        self._produced = 0

    def _samples_from(self, identifier):
        raise NotImplementedError

    def _advance(self):
        if self._samples is None:
            raise StateError(
                f"{type(self).__name__} evaluated without a loaded identifier"
            )
        if self._produced >= self.n:
            raise Depleted(type(self).__name__)
        self._outputs = [list(self._samples)]
        self._produced += 1
        self._seq += 1


class Creator:
    """The traced, named, serializable subgraph serving requested connections.

    Tracing keeps exactly the ancestors of the requested connections; other
    nodes never execute.  Names are deterministic: ``<Kind>_<ordinal>`` with
    the ordinal counted per kind in topological order.
    """

    def __init__(self, outputs, seed: int = 0):
        outputs = list(outputs)
        if not outputs:
            raise GraphError("a creator needs at least one requested connection")
        for conn in outputs:
            if not isinstance(conn, Connection):
                raise GraphError(f"expected a Connection, got {type(conn).__name__}")
            if not 0 <= conn.slot < conn.node.output_arity:
                raise GraphError(
                    f"slot {conn.slot} out of range for {type(conn.node).__name__} "
                    f"with {conn.node.output_arity} output(s)"
                )
        self.requested = outputs
        self.seed = int(seed)
        self.nodes = self._trace()
        self.names = self._assign_names()
        self._eval_token = None

    # ---- graph analysis ------------------------------------------------------

    def _trace(self):
        order = []
        visiting: set[int] = set()
        done: set[int] = set()

        def visit(node):
            key = id(node)
            if key in done:
                return
            if key in visiting:
                raise GraphError("transformer graph contains a cycle")
            visiting.add(key)
            for conn in node.upstream_connections():
                visit(conn.node)
            visiting.discard(key)
            done.add(key)
            order.append(node)

        for conn in self.requested:
            visit(conn.node)
        return order

    def _assign_names(self):
        counts: dict[str, int] = {}
        names: dict[int, str] = {}
        for node in self.nodes:
            kind = type(node).__name__
            ordinal = counts.get(kind, 0)
            counts[kind] = ordinal + 1
            names[id(node)] = f"{kind}_{ordinal}"
        return names

    def name_of(self, node) -> str:
        return self.names[id(node)]

    def input_nodes(self):
        return [n for n in self.nodes if isinstance(n, InputTransformer)]

    def unattached_models(self):
        from .transformers import ApplyModel

        return [
            n for n in self.nodes if isinstance(n, ApplyModel) and n.model is None
        ]

    # ---- evaluation ------------------------------------------------------------

    def eval(self, identifier):
        """Reset the subgraph, load ``identifier`` into its input nodes, and
        yield one list per requested connection per step until depletion."""
        missing = self.unattached_models()
        if missing:
            names = ", ".join(
                f"{self.name_of(n)} ({n.model_name!r})" for n in missing
            )
            raise StateError(f"model not attached on node(s): {names}")
        for node in self.nodes:
            node.reset()
            node._rng = node_rng(self.seed, self.names[id(node)])
        for node in self.input_nodes():
            node.load(identifier)
        token = object()
        self._eval_token = token
        return self._generate_steps(token)

    def _generate_steps(self, token):
        last_seen: dict[int, int] = {}
        while True:
            if self._eval_token is not token:
                raise StateError("a newer eval() has reset this creator's nodes")
            step_values: dict[int, list] = {}
            step = []
            try:
                for conn in self.requested:
                    key = id(conn.node)
                    if key not in step_values:
                        step_values[key] = conn.node.pull(last_seen.get(key, 0) + 1)
                        last_seen[key] = conn.node._seq
                    step.append(step_values[key][conn.slot])
            except Depleted:
                return
            yield step

    # ---- reporting -------------------------------------------------------------

    def summary(self) -> str:
        requested_by_node: dict[int, list[int]] = {}
        for conn in self.requested:
            requested_by_node.setdefault(id(conn.node), []).append(conn.slot)
        lines = [
            f"Creator: {len(self.nodes)} node(s), "
            f"{len(self.requested)} requested connection(s), seed={self.seed}"
        ]
        for node in self.nodes:
            name = self.names[id(node)]
            inputs = ", ".join(
                f"{self.names[id(c.node)]}[{c.slot}]" for c in node.inputs
            ) or "-"
            extras = ", ".join(
                f"{self.names[id(c.node)]}[{c.slot}]" for c in node.extra_inputs
            )
            shapes = (
                " shapes=" + str([tuple(s) for s in node.output_shapes])
                if node.output_shapes is not None
                else ""
            )
            mark = ""
            if id(node) in requested_by_node:
                slots = ",".join(str(s) for s in sorted(requested_by_node[id(node)]))
                mark = f"  <- requested[{slots}]"
            ref = f" refs=[{extras}]" if extras else ""
            lines.append(
                f"{name}: n={node._n_label()} inputs=[{inputs}]{ref}{shapes}{mark}"
            )
        return "\n".join(lines)

    # ---- serialization ----------------------------------------------------------

    def node_table(self):
        table = []
        for node in self.nodes:
            kind = type(node).__name__
            if kind not in KINDS:
                raise FormatError(
                    f"cannot serialize unregistered transformer kind {kind!r}"
                )
            table.append(
                {
                    "name": self.names[id(node)],
                    "kind": kind,
                    "config": node.get_config(),
                    "inputs": [[self.names[id(c.node)], c.slot] for c in node.inputs],
                    "extra_inputs": [
                        [self.names[id(c.node)], c.slot] for c in node.extra_inputs
                    ],
                    "output_shapes": node.output_shapes,
                }
            )
        return table

    def save(self, path) -> None:
        envelope = {
            "format": CREATOR_FORMAT,
            "version": CREATOR_FORMAT_VERSION,
            "seed": self.seed,
            "nodes": self.node_table(),
            "requested": [
                [self.names[id(c.node)], c.slot] for c in self.requested
            ],
        }
        Path(path).write_bytes(pickle.dumps(envelope))

    @classmethod
    def load(cls, path) -> "Creator":
        envelope = pickle.loads(Path(path).read_bytes())
        check_envelope(envelope, CREATOR_FORMAT, CREATOR_FORMAT_VERSION)
        by_name = rebuild_nodes(envelope["nodes"])
        requested = [
            Connection(by_name[name], slot) for name, slot in envelope["requested"]
        ]
        return cls(requested, seed=envelope["seed"])

    def attach_models(self, models: dict) -> int:
        """Re-attach spatial models by name after a load; returns the number
        attached."""
        from .transformers import ApplyModel

        attached = 0
        for node in self.nodes:
            if isinstance(node, ApplyModel) and node.model is None:
                model = models.get(node.model_name)
                if model is None:
                    continue
                node.attach(model)
                attached += 1
        return attached


def check_envelope(envelope, expected_format: str, expected_version: int):
    if not isinstance(envelope, dict) or envelope.get("format") != expected_format:
        raise FormatError(f"not a {expected_format} file")
    if envelope.get("version") != expected_version:
        raise FormatError(
            f"unsupported {expected_format} version {envelope.get('version')!r} "
            f"(expected {expected_version})"
        )


def rebuild_nodes(table) -> dict:
    """Reconstruct unbound nodes from a node table and wire their edges."""
    by_name: dict[str, Transformer] = {}
    for row in table:
        cls = KINDS.get(row["kind"])
        if cls is None:
            raise FormatError(f"unknown transformer kind {row['kind']!r}")
        node = cls.from_config(row["config"])
        node.output_shapes = row.get("output_shapes")
        by_name[row["name"]] = node
    for row in table:
        node = by_name[row["name"]]
        for name, slot in row["inputs"]:
            if name not in by_name:
                raise FormatError(f"node table references unknown node {name!r}")
            node.inputs.append(Connection(by_name[name], slot))
        node.extra_inputs = [
            Connection(by_name[name], slot) for name, slot in row["extra_inputs"]
        ]
    return by_name
