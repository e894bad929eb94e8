from collections import Counter

import numpy as np
import pytest

from voxelflow import CatalogIdentifier, CatalogSampler, DirectIdentifier, Sampler

from conftest import build_mirc


class TestSampler:
    def test_no_shuffle_is_noop(self):
        sampler = Sampler([1, 2, 3, 4, 5], shuffle=False, seed=0)
        before = list(sampler)
        for _ in range(5):
            sampler.randomize()
        assert list(sampler) == before

    def test_single_item_unchanged(self):
        sampler = Sampler(["only"], shuffle=True, seed=0)
        sampler.randomize()
        assert list(sampler) == ["only"]

    def test_unweighted_randomize_is_permutation(self):
        sampler = Sampler(list(range(10)), shuffle=True, seed=1)
        for _ in range(20):
            sampler.randomize()
            assert sorted(sampler) == list(range(10))

    def test_weighted_items_come_from_original_list(self):
        sampler = Sampler([1, 2, 3, 4, 5], shuffle=True, weights=[1, 1, 10, 1, 1], seed=2)
        for _ in range(50):
            sampler.randomize()
            assert len(sampler) == 5
            assert set(sampler) <= {1, 2, 3, 4, 5}

    def test_weighted_frequency_matches_probability(self):
        # weights [1, 1, 10, 1, 1]: P(item 3) = 10/14; 1e5 draws
        sampler = Sampler([1, 2, 3, 4, 5], shuffle=True, weights=[1, 1, 10, 1, 1], seed=3)
        counts = Counter()
        for _ in range(20_000):
            sampler.randomize()
            counts.update(sampler)
        frequency = counts[3] / 100_000
        assert abs(frequency - 10 / 14) < 0.02

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            Sampler([1, 2], shuffle=True, weights=[1, -1])

    def test_all_zero_weights_rejected(self):
        with pytest.raises(ValueError):
            Sampler([1, 2], shuffle=True, weights=[0, 0])

    def test_weight_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            Sampler([1, 2], shuffle=True, weights=[1, 1, 1])

    def test_fixed_seed_reproduces_orderings(self):
        a = Sampler(list(range(8)), shuffle=True, seed=42)
        b = Sampler(list(range(8)), shuffle=True, seed=42)
        for _ in range(5):
            a.randomize()
            b.randomize()
            assert list(a) == list(b)

    def test_index_errors(self):
        sampler = Sampler([1, 2, 3])
        assert len(sampler) == 3
        assert sampler[0] == 1
        with pytest.raises(IndexError):
            sampler[3]


class TestCatalogSampler:
    def test_per_case_length_eight(self, rng):
        sampler = CatalogSampler(build_mirc(rng, n_cases=8), mode="per_case")
        assert len(sampler) == 8

    def test_per_case_length_two(self, rng):
        sampler = CatalogSampler(build_mirc(rng, n_cases=2), mode="per_case")
        assert len(sampler) == 2

    def test_per_record_counts_records(self, rng):
        mirc = build_mirc(rng, n_cases=3, records_per_case=2)
        sampler = CatalogSampler(mirc, mode="per_record")
        assert len(sampler) == 6

    def test_first_item_is_first_case(self, rng):
        sampler = CatalogSampler(build_mirc(rng, n_cases=8), mode="per_case", shuffle=False)
        identifier = sampler[0]
        assert isinstance(identifier, CatalogIdentifier)
        assert identifier.case_id == "subject_0"

    def test_per_case_record_redraw_is_uniform(self, rng):
        mirc = build_mirc(rng, n_cases=1, records_per_case=2)
        sampler = CatalogSampler(mirc, mode="per_case", seed=5)
        counts = Counter()
        for _ in range(10_000):
            sampler.randomize()
            counts[sampler[0].record_id] += 1
        assert abs(counts["obs_0"] / 10_000 - 0.5) < 0.02

    def test_per_case_assignment_stable_within_epoch(self, rng):
        mirc = build_mirc(rng, n_cases=4, records_per_case=3)
        sampler = CatalogSampler(mirc, mode="per_case", seed=6)
        sampler.randomize()
        first = [(i.case_id, i.record_id) for i in sampler]
        second = [(i.case_id, i.record_id) for i in sampler]
        assert first == second

    def test_empty_catalog_rejected(self, rng):
        from voxelflow import Mirc

        with pytest.raises(ValueError):
            CatalogSampler(Mirc(), mode="per_case")
        with pytest.raises(ValueError):
            CatalogSampler(Mirc(), mode="per_record")

    def test_unknown_mode_rejected(self, rng):
        with pytest.raises(ValueError):
            CatalogSampler(build_mirc(rng), mode="per_galaxy")

    def test_seeded_determinism(self, rng):
        mirc = build_mirc(rng, n_cases=6, records_per_case=2)
        a = CatalogSampler(mirc, mode="per_case", shuffle=True, seed=9)
        b = CatalogSampler(mirc, mode="per_case", shuffle=True, seed=9)
        for _ in range(4):
            a.randomize()
            b.randomize()
            assert [(i.case_id, i.record_id) for i in a] == [
                (i.case_id, i.record_id) for i in b
            ]


class TestIdentifiers:
    def test_catalog_identifier_must_resolve(self, rng):
        mirc = build_mirc(rng)
        with pytest.raises(KeyError):
            CatalogIdentifier(mirc, "train", "subject_0", "nope")

    def test_direct_identifier_holds_samples(self, rng):
        from conftest import make_sample

        samples = [make_sample(rng), make_sample(rng)]
        identifier = DirectIdentifier(samples)
        assert identifier.samples == samples
