import numpy as np
import pytest

from exceptions import ScaleStatsError
from Models.Annotation import Annotation
from Models.Dataset import Dataset
from Models.ScaleStats import CategoryScale, ScaleStats
from Models.SynthSpec import ShapeFamily, SynthSpec
from Services.scale_stats_service import (
    compute_scale_stats,
    load_scale_stats,
    save_scale_stats,
    scale_for,
)
from Services.synth_service import generate_annotated_dataset
from tests.unit.factories import CategoryFactory, ImageInfoFactory, square_mask


def dataset_with_squares(sides, size=8):
    image = ImageInfoFactory(width=size, height=size)
    category = CategoryFactory()
    annotations = tuple(
        Annotation.from_mask(i + 1, image.id, category.id, square_mask(size, size, 0, 0, side))
        for i, side in enumerate(sides)
    )
    return Dataset(images=(image,), annotations=annotations, categories=(category,)), category.id


def test_full_image_annotation():
    dataset, category_id = dataset_with_squares([8])
    entry = compute_scale_stats(dataset).categories[category_id]
    assert entry.mu == 1.0
    assert entry.sigma == 0.0
    assert entry.n == 1


def test_two_annotations_hand_arithmetic():
    # area fractions 0.25 and 0.0625
    dataset, category_id = dataset_with_squares([4, 2])
    stats = compute_scale_stats(dataset)
    assert stats.categories[category_id].mu == pytest.approx(0.375)
    assert stats.categories[category_id].sigma == pytest.approx(0.125)
    assert stats.global_scale.mu == pytest.approx(0.375)


def test_empty_dataset():
    with pytest.raises(ScaleStatsError):
        compute_scale_stats(Dataset(images=(ImageInfoFactory(),)))


def test_matches_two_pass_recomputation(tmp_path):
    spec = SynthSpec(shape_family=ShapeFamily.ELLIPSE, canvas_width=128, canvas_height=96, image_count=12,
                     objects_per_image=4, scales=[0.15, 0.3, 0.45], seed=5)
    dataset = generate_annotated_dataset(spec, tmp_path)
    stats = compute_scale_stats(dataset)

    images = dataset.image_index()
    for category_id, entry in stats.categories.items():
        scales = [
            (a.area / (images[a.image_id].width * images[a.image_id].height)) ** 0.5
            for a in dataset.annotations if a.category_id == category_id
        ]
        mean = sum(scales) / len(scales)
        variance = sum((s - mean) ** 2 for s in scales) / len(scales)
        assert entry.n == len(scales)
        assert entry.mu == pytest.approx(mean, rel=1e-12)
        assert entry.sigma == pytest.approx(variance ** 0.5, rel=1e-12)


def test_fixed_scale_rectangles(tmp_path):
    dataset = generate_annotated_dataset(SynthSpec(scales=[0.25], image_count=5), tmp_path)
    for entry in compute_scale_stats(dataset).categories.values():
        assert entry.mu == pytest.approx(0.25)
        assert entry.sigma == pytest.approx(0.0)


def test_two_fixed_scales_per_category(tmp_path):
    spec = SynthSpec(scales=[0.125, 0.25], canvas_width=128, canvas_height=128, category_count=3,
                     image_count=10, objects_per_image=3)
    stats = compute_scale_stats(generate_annotated_dataset(spec, tmp_path))
    for entry in stats.categories.values():
        assert entry.n == 10
        assert entry.mu == pytest.approx(0.1875, rel=1e-12)
        assert entry.sigma == pytest.approx(0.0625, rel=1e-12)


class TestScaleFor:
    stats = ScaleStats(
        categories={
            1: CategoryScale(mu=0.3, sigma=0.0, n=4),
            2: CategoryScale(mu=0.99, sigma=0.0, n=1),
            3: CategoryScale(mu=0.3, sigma=0.05, n=100),
        },
        global_scale=CategoryScale(mu=0.1, sigma=0.0, n=105),
    )

    def test_zero_sigma_returns_mean(self):
        rng = np.random.default_rng(0)
        assert all(scale_for(self.stats, 1, rng) == pytest.approx(0.3) for _ in range(20))

    def test_clamped_to_bounds(self):
        rng = np.random.default_rng(0)
        assert scale_for(self.stats, 2, rng) == 0.95
        assert scale_for(self.stats, 2, rng, s_max=0.5) == 0.5

    def test_unknown_category_uses_global(self):
        assert scale_for(self.stats, 42, np.random.default_rng(0)) == pytest.approx(0.1)

    def test_sample_mean(self):
        rng = np.random.default_rng(1)
        draws = np.array([scale_for(self.stats, 3, rng) for _ in range(100_000)])
        assert abs(draws.mean() - 0.3) < 0.003


def test_sidecar_round_trip(tmp_path):
    dataset, _ = dataset_with_squares([4, 2, 6])
    stats = compute_scale_stats(dataset)
    path = tmp_path / "stats" / "scale_stats.json"
    save_scale_stats(stats, path)
    assert load_scale_stats(path) == stats


def test_invalid_sidecar(tmp_path):
    path = tmp_path / "scale_stats.json"
    path.write_text('{"1": {"mu": 0.3}}', encoding="utf-8")
    with pytest.raises(ScaleStatsError):
        load_scale_stats(path)
