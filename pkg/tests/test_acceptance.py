"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines stream.
"""

import time
from collections import Counter

import numpy as np
import pytest

from voxelflow import (
    AffineDeformation,
    BatchIterator,
    Buffer,
    CatalogInput,
    CatalogSampler,
    Creator,
    DirectIdentifier,
    DirectInput,
    Flip,
    GridCrop,
    PipelineBundle,
    Put,
    RandomCrop,
    Sample,
    Sampler,
    Split,
    Threshold,
    load_preset,
    output_size,
    receptive_field,
)
from voxelflow.cli import main
from voxelflow.netshape import arch_from_dict

from conftest import (
    TRAIN_PIPELINE,
    build_random_dag,
    random_affine,
    write_catalog,
    write_pipeline,
)
from simulator import count_steps
from test_graph import identity_model


def _report(number, description, ok):
    print(f"ACCEPTANCE {number} {'PASS' if ok else 'FAIL'}: {description}")
    assert ok, f"criterion {number} failed: {description}"


def _tutorial_creators(seed=0):
    """input(n=1) -> affine(n=1) -> flip(n=2) -> crop(n=4) over 64-cube
    volumes, with the threshold-mask side branch."""
    xy = DirectInput(n=1)()
    x = Split((0,))(xy)
    warped = AffineDeformation(
        x, rotation_window_width=(1, 0, 0), translation_window_width=(10, 10, 0)
    )(xy)
    flipped = Flip((0.5, 0, 0), n=2)(warped)
    x_flip = Split((0,))(flipped)
    mask = Threshold(lower_threshold=0.0)(x_flip)
    crop = RandomCrop(mask, (32, 32, 32), nonzero=True, n=4)(flipped)
    return Creator([crop], seed=seed), Creator([crop, warped], seed=seed)


def test_criterion_1_multiplicity_arithmetic(rng):
    volume = Sample(rng.random((1, 64, 64, 64, 1)))
    truth = Sample((rng.random((1, 64, 64, 64, 1)) > 0.5).astype(float))
    identifier = DirectIdentifier([volume, truth])
    crop_only, crop_and_warp = _tutorial_creators(seed=1)

    started = time.perf_counter()
    crop_steps = sum(1 for _ in crop_only.eval(identifier))
    elapsed = time.perf_counter() - started
    warp_steps = sum(1 for _ in crop_and_warp.eval(identifier))

    _report(
        1,
        f"tutorial graph: crop-only steps {crop_steps} (want 8), with the "
        f"deformation output also requested {warp_steps} (want 1), "
        f"runtime {elapsed:.3f}s (< 1s)",
        crop_steps == 8 and warp_steps == 1 and elapsed < 1.0,
    )


def _eight_output_creator(seed=0):
    xy = CatalogInput(["vol"], n=1)()
    flipped = Flip((0.5, 0, 0), n=2)(xy)
    mask = Threshold(lower_threshold=-1.0)(flipped)
    crop = RandomCrop(mask, (6, 6, 6), n=4)(flipped)
    return Creator([crop], seed=seed)


def test_criterion_2_batch_count(rng):
    from conftest import build_mirc

    mirc = build_mirc(rng, n_cases=8)
    sampler = CatalogSampler(mirc, mode="per_case")
    singles = list(BatchIterator(_eight_output_creator(), sampler, batch_size=1))
    sixteens = list(
        BatchIterator(_eight_output_creator(), sampler, batch_size=16)
    )
    sixteen_batches_ok = len(sixteens) == 4 and all(
        e[0][0].batch_size == 16 for e in sixteens
    )
    _report(
        2,
        f"8 identifiers x 8 outputs: batch 1 gives {len(singles)} elements "
        f"(want 64); batch 16 gives {len(sixteens)} elements of batch 16 (want 4)",
        len(singles) == 64 and sixteen_batches_ok,
    )


def test_criterion_3_shape_calculus():
    two_pathway = arch_from_dict(
        {
            "subsample_factors_per_pathway": [[1, 1, 1], [3, 3, 3]],
            "kernel_sizes_per_pathway": [
                [[[3, 3, 3], [3, 3, 3]], [[3, 3, 3], [3, 3, 3]]],
                [[[3, 3, 3], [3, 3, 3]], [[3, 3, 3], [3, 3, 3]]],
            ],
            "padding": "valid",
        }
    )
    preset = load_preset("no_new_net")
    out85 = output_size(two_pathway, (85, 85, 85))
    rf = receptive_field(preset)
    out128 = output_size(preset, (128, 128, 128))
    _report(
        3,
        f"two-pathway 85 -> {out85} (want 53^3); preset receptive field {rf} "
        f"(want 185^3); preset same-padding 128 -> {out128} (want 128^3)",
        out85 == (53, 53, 53) and rf == (185, 185, 185) and out128 == (128, 128, 128),
    )


def test_criterion_4_reconstruction_identity(rng):
    worst = 0.0
    for trial in range(20):
        dims = tuple(int(v) for v in rng.integers(17, 65, 3))
        source = Sample(rng.random((1, *dims, 1)), affine=random_affine(rng)[None])
        sizes = tuple(int(rng.integers(5, d + 1)) for d in dims)
        overlap = tuple(int(rng.integers(0, s)) for s in sizes)
        inp = DirectInput(n=1)()
        tiles = GridCrop(sizes, overlap=overlap)(inp)
        put = Put(reference_connection=inp)(Buffer()(tiles))
        steps = list(Creator([put]).eval(DirectIdentifier([source])))
        assert len(steps) == 1
        error = float(np.abs(steps[0][0][0].data - source.data).max())
        worst = max(worst, error)
    _report(
        4,
        f"20 random grid-crop/put reconstructions: max abs error {worst:.3e} (< 1e-12)",
        worst < 1e-12,
    )


def test_criterion_5_affine_bookkeeping(rng):
    worst = 0.0
    crops_seen = 0
    for trial in range(10):
        dims = tuple(int(v) for v in rng.integers(12, 33, 3))
        source = Sample(rng.random((1, *dims, 1)), affine=random_affine(rng)[None])
        size = tuple(int(rng.integers(3, d)) for d in dims)
        inp = DirectInput(n=1)()
        mask = Threshold(lower_threshold=-1.0)(inp)
        crop = RandomCrop(mask, size, n=100)(inp)
        for step in Creator([crop], seed=trial).eval(DirectIdentifier([source])):
            crop_sample = step[0][0]
            relative = np.linalg.inv(source.affine[0]) @ crop_sample.affine[0]
            offset = tuple(int(v) for v in np.round(relative[:3, 3]))
            world_crop = crop_sample.affine[0] @ np.array([0.0, 0.0, 0.0, 1.0])
            world_src = source.affine[0] @ np.array([*offset, 1.0])
            worst = max(worst, float(np.abs(world_crop - world_src).max()))
            crops_seen += 1
    _report(
        5,
        f"{crops_seen} random crops: max origin/world mismatch {worst:.3e} mm (< 1e-9)",
        crops_seen == 1000 and worst < 1e-9,
    )


def test_criterion_6_shared_randomness(rng):
    volume = Sample(rng.random((1, 12, 12, 12, 1)))
    identifier = DirectIdentifier([volume])

    x_in = DirectInput(n=1000)()
    flip = Flip((0.5, 0.5, 0.5))
    fa, fb = flip(x_in, x_in)
    flip_steps = 0
    flips_equal = True
    for step in Creator([fa, fb], seed=6).eval(identifier):
        flips_equal &= np.array_equal(step[0][0].data, step[1][0].data)
        flips_equal &= np.array_equal(step[0][0].affine, step[1][0].affine)
        flip_steps += 1

    y_in = DirectInput(n=1000)()
    reference = Split((0,))(y_in)
    warp = AffineDeformation(
        reference, rotation_window_width=(0.6, 0, 0), translation_window_width=(6, 6, 0)
    )
    wa, wb = warp(y_in, y_in)
    warp_steps = 0
    warps_equal = True
    for step in Creator([wa, wb], seed=7).eval(identifier):
        warps_equal &= np.array_equal(step[0][0].data, step[1][0].data)
        warp_steps += 1

    _report(
        6,
        f"duplicated inputs identical per step: flip {flip_steps} steps, "
        f"deformation {warp_steps} steps (want 1000 each)",
        flips_equal and warps_equal and flip_steps == 1000 and warp_steps == 1000,
    )


def test_criterion_7_weighted_sampler_frequency():
    sampler = Sampler([1, 2, 3, 4, 5], shuffle=True, weights=[1, 1, 10, 1, 1], seed=77)
    counts = Counter()
    draws = 0
    while draws < 100_000:
        sampler.randomize()
        counts.update(sampler)
        draws += len(sampler)
    frequency = counts[3] / draws
    _report(
        7,
        f"weighted draws: item-3 frequency {frequency:.4f} vs 10/14 = {10 / 14:.4f} "
        f"(tolerance 0.02 over {draws} draws)",
        abs(frequency - 10 / 14) < 0.02,
    )


def _stream_bytes(creator, identifier):
    return [
        b"".join(
            sample.data.tobytes() + sample.affine.tobytes()
            for value in step
            for sample in value
        )
        for step in creator.eval(identifier)
    ]


def test_criterion_8_serialization_round_trips(tmp_path, rng):
    volume = Sample(rng.random((1, 24, 24, 24, 1)))
    truth = Sample((rng.random((1, 24, 24, 24, 1)) > 0.5).astype(float))
    identifier = DirectIdentifier([volume, truth])

    # creator file round trip
    xy = DirectInput(n=1)()
    x = Split((0,))(xy)
    warped = AffineDeformation(
        x, rotation_window_width=(0.5, 0, 0), translation_window_width=(8, 8, 0)
    )(xy)
    flipped = Flip((0.5, 0, 0), n=2)(warped)
    mask = Threshold(lower_threshold=0.0)(Split((0,))(flipped))
    crop = RandomCrop(mask, (10, 10, 10), nonzero=True, n=4)(flipped)
    creator = Creator([crop], seed=88)
    before = _stream_bytes(creator, identifier)
    creator.save(tmp_path / "creator.vfc")
    creator_ok = _stream_bytes(Creator.load(tmp_path / "creator.vfc"), identifier) == before

    # bundle round trip, model re-attached automatically
    from voxelflow import ApplyModel

    b_in = DirectInput(n=1)()
    b_x = Split((0,))(b_in)
    b_mask = Threshold(lower_threshold=-1.0)(b_x)
    b_crop = RandomCrop(b_mask, (8, 8, 8), n=3)(b_x)
    pred = ApplyModel(identity_model("net"))(b_crop)
    bundle = PipelineBundle({"train": [pred], "raw": [b_crop]}, seed=5)
    bundle_before = _stream_bytes(bundle.creator("train"), identifier)
    bundle.save(tmp_path / "bundle.vfb")
    loaded = PipelineBundle.load(tmp_path / "bundle.vfb")
    bundle_ok = _stream_bytes(loaded.creator("train"), identifier) == bundle_before

    # CLI output files byte-identical across two seeded runs
    catalog = write_catalog(tmp_path, rng, shape=(16, 16, 16))
    pipeline = write_pipeline(tmp_path, TRAIN_PIPELINE)
    out_a, out_b = tmp_path / "run_a", tmp_path / "run_b"
    for out in (out_a, out_b):
        rc = main(["run", str(pipeline), str(catalog),
                   "--identifier", "train/subject_0/obs_0",
                   "--set", "train", "--out", str(out), "--seed", "31"])
        assert rc == 0
    names = sorted(p.name for p in out_a.iterdir())
    cli_ok = bool(names) and all(
        (out_a / n).read_bytes() == (out_b / n).read_bytes() for n in names
    )

    _report(
        8,
        f"bitwise round trips: creator {creator_ok}, bundle {bundle_ok}, "
        f"CLI outputs ({len(names)} files) {cli_ok}",
        creator_ok and bundle_ok and cli_ok,
    )


def test_criterion_9_step_semantics_oracle(rng):
    sample = Sample(np.zeros((1, 2, 2, 2, 1)))
    identifier = DirectIdentifier([sample])
    trials = 120
    mismatches = []
    for trial in range(trials):
        dag_rng = np.random.default_rng(9000 + trial)
        spec, conns, requested = build_random_dag(dag_rng)
        expected = count_steps(spec, requested)
        got = sum(1 for _ in Creator(conns).eval(identifier))
        if got != expected:
            mismatches.append((trial, got, expected))
    _report(
        9,
        f"{trials} random DAGs vs the literal pull-contract simulator: "
        f"{len(mismatches)} mismatches",
        not mismatches,
    )
