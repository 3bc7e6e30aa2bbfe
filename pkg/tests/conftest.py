import pytest

from Config import FilterConfig
from Models.SynthSpec import SynthSpec
from Services.image_service import ImageStore
from Services.synth_service import generate_annotated_dataset, generate_pool


@pytest.fixture
def filter_config():
    return FilterConfig()


@pytest.fixture
def image_root(tmp_path):
    """Empty image directory wrapped in an ImageStore."""
    root = tmp_path / "pool"
    root.mkdir()
    return ImageStore(root)


@pytest.fixture
def synth_spec():
    return SynthSpec(category_count=3, per_category_count=6, image_count=4, objects_per_image=3, seed=7)


@pytest.fixture
def synth_fixture(tmp_path, synth_spec):
    """Synthetic pool and annotated dataset written under tmp_path."""
    pool = generate_pool(synth_spec, tmp_path / "pool")
    dataset = generate_annotated_dataset(synth_spec, tmp_path / "dataset")
    return {
        "pool": pool,
        "dataset": dataset,
        "pool_images": ImageStore(tmp_path / "pool"),
        "dataset_images": ImageStore(tmp_path / "dataset"),
        "root": tmp_path,
    }
