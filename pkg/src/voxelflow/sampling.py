"""Finite, reshuffleable identifier lists drawn from a catalog.

A sampler owns an explicit seedable RNG; nothing here touches global
random state.  Randomizing without weights permutes the list; with weights
it redraws the same length with replacement from the original items.
"""

from __future__ import annotations

import numpy as np

from .catalog import Mirc, Record


class CatalogIdentifier:
    """Addresses one record inside a catalog."""

    def __init__(self, mirc: Mirc, dataset_id: str, case_id: str, record_id: str):
        record = mirc[dataset_id][case_id][record_id]  # raises KeyError if absent
        self.mirc = mirc
        self.dataset_id = dataset_id
        self.case_id = case_id
        self.record_id = record_id

    def record(self) -> Record:
        return self.mirc[self.dataset_id][self.case_id][self.record_id]

    def __repr__(self):
        return f"CatalogIdentifier({self.dataset_id}/{self.case_id}/{self.record_id})"


class DirectIdentifier:
    """Carries a list of already-built samples."""

    def __init__(self, samples):
        self.samples = list(samples)

    def __repr__(self):
        return f"DirectIdentifier({len(self.samples)} samples)"


class Sampler:
    """An indexable list of identifiers with optional (weighted) shuffling.

    ``randomize()`` is the only mutator.  With ``shuffle=False`` it is a
    no-op.  Without weights it draws a uniform permutation; with weights it
    draws a same-length list with replacement, item probability proportional
    to its weight.  Length never changes.
    """

    def __init__(self, items, shuffle: bool = False, weights=None, seed=None):
        self._source = list(items)
        self._items = list(self._source)
        self.shuffle = shuffle
        if weights is not None:
            weights = [float(w) for w in weights]
            if len(weights) != len(self._source):
                raise ValueError("weights must match the item count")
            if any(w < 0 for w in weights):
                raise ValueError("weights must be non-negative")
            if sum(weights) <= 0:
                raise ValueError("at least one weight must be positive")
        self.weights = weights
        self.rng = np.random.default_rng(seed)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]

    def __iter__(self):
        return iter(self._items)

    def randomize(self):
        if not self.shuffle:
            return
        self._items = self._draw(self._source)

    def _draw(self, source):
        if self.weights is None:
            order = self.rng.permutation(len(source))
        else:
            p = np.asarray(self.weights) / sum(self.weights)
            order = self.rng.choice(len(source), size=len(source), replace=True, p=p)
        return [source[i] for i in order]


class CatalogSampler(Sampler):
    """Sampler over a catalog, one identifier per record or per case.

    ``per_record`` holds one fixed identifier per record.  ``per_case``
    holds one identifier per case whose record is redrawn uniformly within
    the case on every ``randomize()`` call, so an epoch sees one consistent
    assignment.
    """

    def __init__(self, mirc: Mirc, mode: str = "per_record", shuffle: bool = False,
                 seed=None):
        if mode not in ("per_record", "per_case"):
            raise ValueError(f"mode must be 'per_record' or 'per_case', got {mode!r}")
        self.mirc = mirc
        self.mode = mode
        self._cases = []
        items = []
        for dataset in mirc.datasets():
            for case in dataset.values():
                record_ids = list(case)
                if not record_ids:
                    continue
                if mode == "per_case":
                    self._cases.append((dataset.id, case.id, record_ids))
                else:
                    items.extend(
                        CatalogIdentifier(mirc, dataset.id, case.id, rid)
                        for rid in record_ids
                    )
        super().__init__(items, shuffle=shuffle, seed=seed)
        if mode == "per_case":
            if not self._cases:
                raise ValueError("catalog has no records to sample")
            self._source = self._draw_case_records()
            self._items = list(self._source)
        elif not self._items:
            raise ValueError("catalog has no records to sample")

    def _draw_case_records(self):
        return [
            CatalogIdentifier(
                self.mirc, dataset_id, case_id,
                record_ids[int(self.rng.integers(len(record_ids)))],
            )
            for dataset_id, case_id, record_ids in self._cases
        ]

    def randomize(self):
        if self.mode == "per_case":
            self._source = self._draw_case_records()
            self._items = list(self._source)
        if self.shuffle:
            self._items = self._draw(self._source)
