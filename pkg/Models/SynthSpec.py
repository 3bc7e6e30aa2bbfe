from enum import Enum
from typing import List, Tuple
from pydantic import BaseModel, ConfigDict, Field, field_validator


class ShapeFamily(str, Enum):
    ELLIPSE = "ellipse"
    RECTANGLE = "rectangle"
    POLYGON = "polygon"


def default_palette() -> List[Tuple[int, int, int]]:
    return [(220, 40, 40), (40, 160, 60), (40, 80, 220), (230, 180, 30), (150, 60, 190)]


class SynthSpec(BaseModel):
    """Recipe for a synthetic pool and annotated dataset with known ground truth."""
    model_config = ConfigDict(frozen=True)

    canvas_width: int = Field(64, gt=0)
    canvas_height: int = Field(64, gt=0)
    shape_family: ShapeFamily = ShapeFamily.RECTANGLE
    palette: List[Tuple[int, int, int]] = Field(default_factory=default_palette, min_length=1)
    background_color: Tuple[int, int, int] = (245, 245, 245)
    category_count: int = Field(3, ge=1)
    per_category_count: int = Field(10, ge=1)
    image_count: int = Field(10, ge=1)
    objects_per_image: int = Field(3, ge=1)
    # relative scales sqrt(area / image area), cycled over dataset objects
    scales: List[float] = Field(default_factory=lambda: [0.2, 0.3], min_length=1)
    seed: int = Field(0, ge=0)

    @field_validator("scales")
    @classmethod
    def scales_in_range(cls, scales: List[float]) -> List[float]:
        if any(not 0.0 < s <= 1.0 for s in scales):
            raise ValueError("scales must lie in (0, 1]")
        return scales
