import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from fedkit.dataplane import (
    ClassLabel,
    IngestionError,
    SiloSpec,
    augment,
    default_silo_specs,
    export_pgm,
    ingest_directory,
    sample_augment_params,
    silo_style,
    split,
    synth_silo,
    table_counts,
)


def small_spec(silo_id="probe", counts=None, factor=2, fraction=0.8, size=16):
    return SiloSpec(
        silo_id=silo_id,
        class_counts=counts or table_counts(5, 5, 5, 5),
        augmentation_factor=factor,
        train_fraction=fraction,
        input_size=size,
    )


class TestSynth:
    def test_malawi_spec_yields_600_samples(self):
        # 25 originals x 4 classes x augmentation factor 6
        spec = SiloSpec("malawi", table_counts(25, 25, 25, 25), augmentation_factor=6,
                        train_fraction=0.4, input_size=16)
        ds = synth_silo(spec, seed=3)
        assert len(ds) == 600
        assert len(ds.splits.train) == 240  # f=0.4

    def test_egypt_and_uganda_train_sizes(self):
        egypt = SiloSpec("egypt", table_counts(25, 25, 25, 25), 6, 0.8, 16)
        assert len(synth_silo(egypt, seed=3).splits.train) == 480
        uganda = SiloSpec("uganda", table_counts(25, 25, 25, 0), 6, 0.8, 16)
        ds = synth_silo(uganda, seed=3)
        assert len(ds) == 450
        assert len(ds.splits.train) == 360

    def test_absent_class_stays_absent(self):
        spec = SiloSpec("uganda", table_counts(5, 5, 5, 0), 3, 0.8, 16)
        ds = synth_silo(spec, seed=1)
        assert int(ClassLabel.THORAX) not in set(ds.labels.tolist())
        for part in ("train", "val", "test"):
            _, labels = ds.split_view(part)
            assert int(ClassLabel.THORAX) not in set(labels.tolist())

    def test_determinism(self):
        spec = small_spec()
        a = synth_silo(spec, seed=11)
        b = synth_silo(spec, seed=11)
        assert np.array_equal(a.images, b.images)
        assert np.array_equal(a.splits.train, b.splits.train)
        c = synth_silo(spec, seed=12)
        assert not np.array_equal(a.images, c.images)

    def test_pixel_range(self):
        for spec in default_silo_specs(input_size=16, augmentation_factor=2):
            ds = synth_silo(spec, seed=5)
            assert ds.images.min() >= 0.0
            assert ds.images.max() <= 1.0

    def test_styles_are_stable_and_distinct(self):
        a = silo_style("spain")
        assert a == silo_style("spain")
        others = [silo_style(s) for s in ("malawi", "egypt", "uganda", "ghana", "algeria")]
        assert all(o != a for o in others)
        assert a.invert_strength > 0 and all(o.invert_strength == 0 for o in others)

    def test_classes_are_visually_distinct(self):
        # The mean image of one class should differ clearly from another's.
        spec = small_spec(counts=table_counts(20, 20, 20, 20), factor=1, size=32)
        ds = synth_silo(spec, seed=2)
        means = {c: ds.images[ds.labels == c].mean(axis=0) for c in range(4)}
        for a in range(4):
            for b in range(a + 1, 4):
                assert np.abs(means[a] - means[b]).mean() > 0.01


class TestAugment:
    def test_factor_one_is_identity(self):
        ds = synth_silo(small_spec(factor=1), seed=4)
        assert augment(ds, 1, seed=9) is ds

    def test_factor_multiplies_counts(self):
        spec = small_spec(counts=table_counts(25, 25, 25, 25), factor=1)
        base = synth_silo(spec, seed=4)
        out = augment(base, 6, seed=9)
        assert len(out) == 600
        # every origin contributes exactly `factor` samples
        _, counts = np.unique(out.origin_ids, return_counts=True)
        assert set(counts.tolist()) == {6}

    def test_crop_scale_bounds(self):
        rng = np.random.default_rng(0)
        for _ in range(500):
            angle, scale, fx, fy = sample_augment_params(rng)
            assert 0.8 <= scale <= 1.0
            assert -25.0 <= angle <= 25.0
            assert 0.0 <= fx <= 1.0 and 0.0 <= fy <= 1.0

    def test_variants_stay_in_range_and_keep_origin(self):
        ds = synth_silo(small_spec(factor=1), seed=4)
        out = augment(ds, 4, seed=9)
        assert out.images.min() >= 0.0 and out.images.max() <= 1.0
        assert set(out.origin_ids.tolist()) == set(ds.origin_ids.tolist())


class TestSplit:
    def test_600_sample_80_10_split(self):
        spec = SiloSpec("egypt", table_counts(25, 25, 25, 25), 6, 0.8, 16)
        ds = synth_silo(spec, seed=3)
        assert len(ds.splits.train) == 480
        assert len(ds.splits.val) == 60
        assert len(ds.splits.test) == 60

    def test_disjoint_and_covering(self):
        ds = synth_silo(small_spec(), seed=8)
        s = ds.splits
        joined = np.concatenate([s.train, s.val, s.test])
        assert len(np.unique(joined)) == len(ds)

    def test_no_origin_leaks_across_splits(self):
        ds = synth_silo(small_spec(factor=5), seed=8)
        train_origins = set(ds.origin_ids[ds.splits.train].tolist())
        val_origins = set(ds.origin_ids[ds.splits.val].tolist())
        test_origins = set(ds.origin_ids[ds.splits.test].tolist())
        assert not (train_origins & val_origins)
        assert not (train_origins & test_origins)
        assert not (val_origins & test_origins)

    def test_tiny_class_lands_in_train_with_warning(self, caplog):
        spec = small_spec(counts={"abdomen": 5, "brain": 1}, factor=1)
        with caplog.at_level(logging.WARNING, logger="fedkit.dataplane"):
            ds = synth_silo(spec, seed=2)
        _, train_labels = ds.split_view("train")
        assert int(ClassLabel.BRAIN) in set(train_labels.tolist())
        assert any("brain" in rec.getMessage() for rec in caplog.records)

    def test_invalid_fractions_rejected(self):
        ds = synth_silo(small_spec(), seed=1)
        with pytest.raises(ValueError):
            split(ds, 0.9, 0.2, seed=0)
        with pytest.raises(ValueError):
            split(ds, 0.0, 0.1, seed=0)

    @given(
        counts=st.lists(st.integers(min_value=0, max_value=8), min_size=4, max_size=4),
        factor=st.integers(min_value=1, max_value=4),
        fraction=st.sampled_from([0.4, 0.5, 0.8]),
        seed=st.integers(min_value=0, max_value=2**31 - 1),
    )
    @settings(max_examples=30, deadline=None)
    def test_split_properties_hold_for_random_specs(self, counts, factor, fraction, seed):
        named = dict(zip(("abdomen", "brain", "femur", "thorax"), counts))
        named = {k: v for k, v in named.items() if v > 0}
        if not named:
            named = {"abdomen": 1}
        spec = SiloSpec("prop", named, factor, fraction, input_size=8)
        ds = synth_silo(spec, seed=seed)
        s = ds.splits
        joined = np.concatenate([s.train, s.val, s.test])
        assert len(np.unique(joined)) == len(ds) == spec.total_originals() * factor
        for a, b in (("train", "val"), ("train", "test"), ("val", "test")):
            oa = set(ds.origin_ids[getattr(s, a)].tolist())
            ob = set(ds.origin_ids[getattr(s, b)].tolist())
            assert not (oa & ob)
        assert ds.images.min() >= 0.0 and ds.images.max() <= 1.0


class TestIngest:
    def _make_tree(self, root, classes, size=20, count=3):
        rng = np.random.default_rng(1)
        for cname in classes:
            d = root / cname
            d.mkdir(parents=True)
            for i in range(count):
                arr = (rng.uniform(0, 255, size=(size, size))).astype(np.uint8)
                Image.fromarray(arr, mode="L").save(d / f"img_{i}.png")

    def test_other_class_skipped_and_counted(self, tmp_path):
        self._make_tree(tmp_path, ["abdomen", "brain", "femur", "thorax", "other"])
        ds, stats = ingest_directory(tmp_path, input_size=16)
        assert stats.skipped_other == 3
        assert stats.ingested == 12
        assert set(np.unique(ds.labels).tolist()) == {0, 1, 2, 3}

    def test_resize_and_range(self, tmp_path):
        self._make_tree(tmp_path, ["femur"], size=16, count=1)
        ds, _ = ingest_directory(tmp_path, input_size=32)
        assert ds.images.shape == (1, 32, 32)
        assert ds.images.min() >= 0.0 and ds.images.max() <= 1.0

    def test_empty_directory_rejected(self, tmp_path):
        with pytest.raises(IngestionError):
            ingest_directory(tmp_path, input_size=16)

    def test_unreadable_file_skipped(self, tmp_path):
        self._make_tree(tmp_path, ["brain"], count=2)
        (tmp_path / "brain" / "broken.png").write_bytes(b"this is not an image")
        ds, stats = ingest_directory(tmp_path, input_size=16)
        assert stats.skipped_unreadable == 1
        assert len(ds) == 2

    def test_ingest_then_augment_then_split(self, tmp_path):
        self._make_tree(tmp_path, ["abdomen", "brain"], count=5)
        ds, _ = ingest_directory(tmp_path, input_size=16)
        ds = augment(ds, 4, seed=3)
        ds = split(ds, 0.6, 0.2, seed=3)
        assert len(ds) == 40
        train_origins = set(ds.origin_ids[ds.splits.train].tolist())
        test_origins = set(ds.origin_ids[ds.splits.test].tolist())
        assert not (train_origins & test_origins)


class TestExport:
    def test_pgm_roundtrip(self, tmp_path):
        ds = synth_silo(small_spec(factor=1), seed=6)
        paths = export_pgm(ds, tmp_path, indices=[0, 1])
        assert len(paths) == 2
        blob = paths[0].read_bytes()
        assert blob.startswith(b"P5\n16 16\n255\n")
        img = Image.open(paths[0])
        assert img.size == (16, 16)
