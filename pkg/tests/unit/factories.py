from pathlib import Path
from typing import Optional, Sequence

import factory
import numpy as np
from faker import Faker

from Models.Category import Category, FrequencyBand
from Models.ImageInfo import ImageInfo
from Models.InstanceRecord import CandidateMask, InstanceRecord, InstanceSource
from Models.RleMask import RleMask
from Services.image_service import save_png
from Services.rle_service import rle_decode, rle_encode

fake = Faker()
fake.seed_instance(42)  # same data on every run


def square_mask(height: int = 32, width: int = 32, x: int = 8, y: int = 8, side: int = 16) -> RleMask:
    bitmap = np.zeros((height, width), dtype=bool)
    bitmap[y:y + side, x:x + side] = True
    return rle_encode(bitmap)


def leading_pixels_mask(height: int, width: int, n: int) -> RleMask:
    """Mask whose first n pixels in column-major order are set."""
    counts = (0, n, height * width - n) if n < height * width else (0, n)
    return RleMask(height=height, width=width, counts=counts)


class CategoryFactory(factory.Factory):
    """ Category factory """
    class Meta:
        model = Category

    id = factory.Sequence(lambda n: n + 1)
    name = factory.LazyFunction(lambda: fake.word())
    frequency_band = FrequencyBand.COMMON


class ImageInfoFactory(factory.Factory):
    class Meta:
        model = ImageInfo

    id = factory.Sequence(lambda n: n + 1)
    width = 32
    height = 32
    file_name = factory.LazyAttribute(lambda o: f"images/{o.id:06d}.png")


class CandidateMaskFactory(factory.Factory):
    class Meta:
        model = CandidateMask

    segmenter_name = factory.Iterator(["SelfReformer", "CLIPseg", "UFO", "U2Net"])
    mask = factory.LazyFunction(square_mask)
    clip_score = factory.LazyFunction(lambda: fake.pyfloat(min_value=0.15, max_value=0.35))


class InstanceRecordFactory(factory.Factory):
    """ InstanceRecord with no chosen mask """
    class Meta:
        model = InstanceRecord

    id = factory.Sequence(lambda n: f"inst-{n:05d}")
    category_id = 1
    source = InstanceSource.GENERATED
    image_path = factory.LazyAttribute(lambda o: f"images/{o.id}.png")
    width = 32
    height = 32
    candidates = factory.LazyAttribute(
        lambda o: (CandidateMaskFactory(mask=square_mask(o.height, o.width)),)
    )


def selected_record(category_id: int = 1, score: float = 0.25, mask: Optional[RleMask] = None,
                    source: InstanceSource = InstanceSource.GENERATED, **kwargs) -> InstanceRecord:
    """A record with one candidate that is already chosen."""
    height = mask.height if mask is not None else kwargs.pop("height", 32)
    width = mask.width if mask is not None else kwargs.pop("width", 32)
    candidate = CandidateMaskFactory(mask=mask if mask is not None else square_mask(height, width), clip_score=score)
    return InstanceRecordFactory(
        category_id=category_id, source=source, width=width, height=height,
        candidates=(candidate,), chosen=0, clip_score=score, **kwargs,
    )


def write_record_images(records: Sequence[InstanceRecord], root: Path,
                        color=(200, 30, 30), background=(245, 245, 245)) -> None:
    """Draw each record's chosen mask in `color` over a flat background under root."""
    for record in records:
        image = np.empty((record.height, record.width, 3), dtype=np.uint8)
        image[:] = background
        image[rle_decode(record.chosen_mask).astype(bool)] = color
        save_png(image, root / record.image_path)
