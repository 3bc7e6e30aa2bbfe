import json
import shutil

import numpy as np
import pytest
from scipy import stats as scipy_stats

from Config import ComposeConfig
from exceptions import PlanningError
from Models.Annotation import Annotation, Provenance
from Models.CompositionPlan import CompositionPlan, PasteAction, PastedInstance
from Models.InstanceRecord import InstanceSource
from Models.PoolManifest import PoolManifest
from Models.ScaleStats import CategoryScale, ScaleStats
from Services.composer_service import (
    PoolIndex,
    compose_dataset,
    derive_sample_rng,
    derive_sample_seed,
    plan_sample,
    render,
    update_annotations,
)
from Services.dataset_service import validate_dataset
from Services.image_service import ImageStore
from Services.rle_service import rle_decode, rle_encode
from Services.scale_stats_service import compute_scale_stats
from tests.unit.factories import ImageInfoFactory, selected_record, write_record_images

FLAT_STATS = ScaleStats(categories={}, global_scale=CategoryScale(mu=0.2, sigma=0.05, n=10))
RED = (200, 30, 30)


def rect(shape, y0, y1, x0, x1):
    bitmap = np.zeros(shape, dtype=bool)
    bitmap[y0:y1, x0:x1] = True
    return bitmap


def single_paste_plan(*actions):
    return CompositionPlan(
        background_image_id=1,
        sample_seed=0,
        actions=tuple(PasteAction(instance_id=i, scale=s, center=c, z=z) for z, (i, s, c) in enumerate(actions)),
    )


@pytest.fixture
def square_pool(image_root):
    records = [selected_record(1, 0.3), selected_record(2, 0.3)]
    write_record_images(records, image_root.root, color=RED)
    return PoolManifest(records=tuple(records)), image_root


class TestPlanSample:
    background = ImageInfoFactory.build(id=1, width=64, height=48)

    def test_single_action_when_n_max_is_one(self):
        pool = PoolManifest(records=tuple(selected_record(c, 0.3) for c in (1, 2, 3)))
        cfg = ComposeConfig(n_max=1)
        for seed in range(50):
            plan = plan_sample(np.random.default_rng(seed), pool, FLAT_STATS, self.background, [], cfg)
            assert len(plan.actions) == 1

    def test_action_count_and_geometry(self):
        pool = PoolManifest(records=(selected_record(4, 0.3),))
        cfg = ComposeConfig(n_max=5)
        for seed in range(50):
            plan = plan_sample(np.random.default_rng(seed), pool, FLAT_STATS, self.background, [], cfg)
            assert 1 <= len(plan.actions) <= 5
            for action in plan.actions:
                assert 0 <= action.center[0] <= 64 and 0 <= action.center[1] <= 48
                assert cfg.scale_min <= action.scale <= cfg.scale_max

    def test_single_category_pool(self):
        pool = PoolManifest(records=tuple(selected_record(7, 0.3) for _ in range(3)))
        plan = plan_sample(np.random.default_rng(0), pool, FLAT_STATS, self.background, [], ComposeConfig())
        ids = {r.id for r in pool.records}
        assert all(a.instance_id in ids for a in plan.actions)

    def test_empty_pool(self):
        with pytest.raises(PlanningError):
            plan_sample(np.random.default_rng(0), PoolManifest(), FLAT_STATS, self.background, [], ComposeConfig())

    def test_source_restriction(self):
        generated = selected_record(1, 0.3, source=InstanceSource.GENERATED)
        retrieved = selected_record(1, 0.3, source=InstanceSource.RETRIEVED)
        cfg = ComposeConfig(sources=frozenset({InstanceSource.RETRIEVED}))
        pool = PoolManifest(records=(generated, retrieved))
        for seed in range(20):
            plan = plan_sample(np.random.default_rng(seed), pool, FLAT_STATS, self.background, [], cfg)
            assert all(a.instance_id == retrieved.id for a in plan.actions)

    def test_reference_placement_uses_annotation_centers(self):
        pool = PoolManifest(records=(selected_record(1, 0.3),))
        annotation = Annotation.from_mask(1, 1, 1, rle_encode(rect((48, 64), 10, 20, 30, 50)))
        plan = plan_sample(np.random.default_rng(3), pool, FLAT_STATS, self.background, [annotation],
                           ComposeConfig(placement="reference"))
        assert all(a.center == (40.0, 15.0) for a in plan.actions)

    def test_paste_count_is_uniform(self):
        pool = PoolManifest(records=tuple(selected_record(c, 0.3) for c in (1, 2, 3)))
        index = PoolIndex(pool)
        rng = np.random.default_rng(77)
        counts = np.zeros(20, dtype=int)
        for _ in range(10_000):
            plan = plan_sample(rng, index, FLAT_STATS, self.background, [], ComposeConfig(n_max=20))
            counts[len(plan.actions) - 1] += 1
        assert counts.min() > 0
        assert scipy_stats.chisquare(counts).pvalue > 0.01

    def test_categories_are_sampled_uniformly(self):
        records = [selected_record(c, 0.3) for c, n in ((1, 1), (2, 5), (3, 20), (4, 2)) for _ in range(n)]
        index = PoolIndex(PoolManifest(records=tuple(records)))
        rng = np.random.default_rng(2024)
        counts = {c: 0 for c in index.category_ids}
        for _ in range(2000):
            plan = plan_sample(rng, index, FLAT_STATS, self.background, [], ComposeConfig(n_max=20))
            for action in plan.actions:
                counts[index.by_id[action.instance_id].category_id] += 1
        assert sum(counts.values()) > 15_000
        assert scipy_stats.chisquare(list(counts.values())).pvalue > 1e-3


class TestRender:
    def test_area_follows_scale(self, square_pool):
        pool, images = square_pool
        record = pool.records[0]
        background = np.zeros((640, 640, 3), dtype=np.uint8)
        sample = render(single_paste_plan((record.id, 0.3, (320.0, 320.0))), pool, images, background, [],
                        ComposeConfig())
        annotation, = sample.annotations
        assert abs(annotation.area - 0.09 * 640 * 640) <= 0.02 * 0.09 * 640 * 640
        assert annotation.provenance == Provenance.PASTED
        assert annotation.category_id == record.category_id
        assert tuple(sample.image[320, 320]) == RED
        assert not background.any()

    def test_corner_center_is_clipped(self, square_pool):
        pool, images = square_pool
        background = np.zeros((640, 640, 3), dtype=np.uint8)
        sample = render(single_paste_plan((pool.records[0].id, 0.3, (0.0, 0.0))), pool, images, background, [],
                        ComposeConfig())
        annotation, = sample.annotations
        assert annotation.bbox[:2] == (0, 0)
        assert annotation.area == annotation.bbox[2] * annotation.bbox[3]
        assert annotation.area == pytest.approx(0.09 * 640 * 640 / 4, rel=0.05)

    def test_fully_covered_paste_is_dropped(self, square_pool):
        pool, images = square_pool
        small, large = pool.records
        background = np.zeros((200, 200, 3), dtype=np.uint8)
        sample = render(single_paste_plan((small.id, 0.1, (100.0, 100.0)), (large.id, 0.4, (100.0, 100.0))),
                        pool, images, background, [], ComposeConfig())
        assert [a.category_id for a in sample.annotations] == [large.category_id]

    def test_off_canvas_paste_is_skipped(self, square_pool):
        pool, images = square_pool
        background = np.zeros((100, 100, 3), dtype=np.uint8)
        sample = render(single_paste_plan((pool.records[0].id, 0.1, (-500.0, -500.0))), pool, images, background,
                        [], ComposeConfig())
        assert sample.annotations == []
        assert sample.trace()["skipped"][0]["z"] == 0
        assert np.array_equal(sample.image, background)


class TestUpdateAnnotations:
    shape = (20, 20)

    def background_annotation(self, bitmap, id=1):
        return Annotation.from_mask(id, 1, 1, rle_encode(bitmap))

    def test_no_pastes_is_identity(self):
        annotations = [self.background_annotation(rect(self.shape, 0, 10, 0, 10))]
        assert update_annotations(1, annotations, []) == annotations

    def test_half_covered_object(self):
        original = self.background_annotation(rect(self.shape, 0, 10, 0, 10))
        paste = PastedInstance(z=0, instance_id="p", category_id=2, mask=rect(self.shape, 0, 20, 5, 20))
        updated, pasted = update_annotations(1, [original], [paste], next_id=10)
        assert updated.area == 50
        assert updated.bbox == (0, 0, 5, 10)
        assert updated.provenance == Provenance.ORIGINAL
        assert (pasted.id, pasted.area, pasted.provenance) == (10, 300, Provenance.PASTED)

    def test_drop_fraction(self):
        original = self.background_annotation(rect(self.shape, 0, 10, 0, 10))
        paste = PastedInstance(z=0, instance_id="p", category_id=2, mask=rect(self.shape, 0, 10, 2, 10))
        assert len(update_annotations(1, [original], [paste])) == 2
        assert len(update_annotations(1, [original], [paste], occlusion_drop_fraction=0.3)) == 1

    def test_matches_z_buffer(self):
        shape = (24, 24)
        backgrounds = [
            self.background_annotation(rect(shape, 0, 10, 0, 10), id=1),
            self.background_annotation(rect(shape, 15, 24, 0, 8), id=2),
            self.background_annotation(rect(shape, 3, 6, 3, 6), id=3),
        ]
        masks = [rect(shape, 2, 14, 2, 14), rect(shape, 8, 20, 8, 20), rect(shape, 5, 17, 10, 22)]
        pasted = [PastedInstance(z=z, instance_id=f"p{z}", category_id=1, mask=m) for z, m in enumerate(masks)]

        top = np.full(shape, -1)
        for z, mask in enumerate(masks):
            top[mask] = z
        expected = [rle_decode(a.mask).astype(bool) & (top == -1) for a in backgrounds]
        expected += [top == z for z in range(len(masks))]
        expected = [m for m in expected if m.any()]

        result = update_annotations(1, backgrounds, pasted)
        assert len(result) == len(expected)
        for annotation, mask in zip(result, expected):
            assert np.array_equal(rle_decode(annotation.mask).astype(bool), mask)
            assert annotation.area == int(mask.sum())

    def test_random_plans_match_z_buffer(self):
        shape = (64, 64)
        rng = np.random.default_rng(31)

        def random_rect():
            y0, x0 = rng.integers(0, 60, size=2)
            y1, x1 = y0 + rng.integers(1, 40), x0 + rng.integers(1, 40)
            return rect(shape, y0, min(y1, 64), x0, min(x1, 64))

        for _ in range(500):
            backgrounds = [self.background_annotation(random_rect(), id=i + 1) for i in range(rng.integers(0, 4))]
            masks = [random_rect() for _ in range(rng.integers(1, 11))]
            pasted = [PastedInstance(z=z, instance_id=f"p{z}", category_id=2, mask=m) for z, m in enumerate(masks)]

            top = np.full(shape, -1)
            for z, mask in enumerate(masks):
                top[mask] = z
            expected = [rle_decode(a.mask).astype(bool) & (top == -1) for a in backgrounds]
            expected += [top == z for z in range(len(masks))]
            expected = [m for m in expected if m.any()]

            result = update_annotations(1, backgrounds, pasted, next_id=100)
            assert len(result) == len(expected)
            for annotation, mask in zip(result, expected):
                assert annotation.area > 0
                assert np.array_equal(rle_decode(annotation.mask).astype(bool), mask)


class TestComposeDataset:
    def compose(self, fixture, out_dir, jobs=1, **overrides):
        cfg = ComposeConfig(seed=99, n_max=4, **overrides)
        stats = compute_scale_stats(fixture["dataset"])
        return compose_dataset(fixture["pool"], stats, fixture["dataset"], cfg, out_dir,
                               pool_images=fixture["pool_images"],
                               background_images=fixture["dataset_images"], jobs=jobs)

    def test_output_passes_validation(self, synth_fixture):
        out_dir = synth_fixture["root"] / "out"
        composed = self.compose(synth_fixture, out_dir, repeat_factor=2)
        assert len(composed.images) == 2 * len(synth_fixture["dataset"].images)
        assert validate_dataset(composed) == []
        assert any(a.provenance == Provenance.PASTED for a in composed.annotations)
        assert (out_dir / "annotations.json").is_file()
        assert len((out_dir / "plans.jsonl").read_text().splitlines()) == len(composed.images)
        assert all((out_dir / image.file_name).is_file() for image in composed.images)

    def test_repeat_factor_zero_returns_input(self, synth_fixture):
        composed = self.compose(synth_fixture, synth_fixture["root"] / "out", repeat_factor=0)
        assert composed == synth_fixture["dataset"]

    def test_failed_sample_passes_background_through(self, synth_fixture):
        out_dir = synth_fixture["root"] / "out"
        shutil.rmtree(synth_fixture["root"] / "pool" / "images")
        dataset = synth_fixture["dataset"]
        composed = self.compose(synth_fixture, out_dir)

        traces = [json.loads(line) for line in (out_dir / "plans.jsonl").read_text().splitlines()]
        assert all(t["error"]["error"] == "ImageLoadError" for t in traces)
        assert [t["background_image_id"] for t in traces] == [i.id for i in dataset.images]
        assert all(a.provenance == Provenance.ORIGINAL for a in composed.annotations)
        assert [(a.category_id, a.mask) for a in composed.annotations] == \
            [(a.category_id, a.mask) for a in dataset.annotations]
        out_images = ImageStore(out_dir)
        for source, image in zip(dataset.images, composed.images):
            assert np.array_equal(out_images.load_rgb(image.file_name),
                                  synth_fixture["dataset_images"].load_rgb(source.file_name))

    def test_worker_count_does_not_change_output(self, synth_fixture):
        root = synth_fixture["root"]
        self.compose(synth_fixture, root / "serial", jobs=1)
        self.compose(synth_fixture, root / "parallel", jobs=3)
        for relative in ["annotations.json", "plans.jsonl"] + \
                sorted(str(p.relative_to(root / "serial")) for p in (root / "serial" / "images").iterdir()):
            assert (root / "serial" / relative).read_bytes() == (root / "parallel" / relative).read_bytes()

    def test_sample_seeds_are_distinct(self):
        seeds = {derive_sample_seed(7, image_id, repeat) for image_id in range(1, 50) for repeat in range(3)}
        assert len(seeds) == 49 * 3
        assert derive_sample_seed(7, 1, 0) == derive_sample_seed(7, 1, 0)
        assert derive_sample_seed(7, 1, 0) != derive_sample_seed(8, 1, 0)
        assert np.array_equal(derive_sample_rng(7, 1, 0).random(5), derive_sample_rng(7, 1, 0).random(5))
