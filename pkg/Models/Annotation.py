from enum import Enum
from typing import Tuple
from pydantic import BaseModel, ConfigDict, Field

from Models.RleMask import RleMask


class Provenance(str, Enum):
    ORIGINAL = "original"
    PASTED = "pasted"


class Annotation(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: int = Field(..., gt=0)
    image_id: int
    category_id: int
    mask: RleMask
    bbox: Tuple[int, int, int, int]
    area: int = Field(..., gt=0)
    provenance: Provenance = Provenance.ORIGINAL

    @classmethod
    def from_mask(cls, id: int, image_id: int, category_id: int, mask: RleMask,
                  provenance: Provenance = Provenance.ORIGINAL) -> "Annotation":
        """Build an annotation whose bbox and area are derived from the mask."""
        from Services.rle_service import bbox_and_area

        bbox, area = bbox_and_area(mask)
        return cls(
            id=id,
            image_id=image_id,
            category_id=category_id,
            mask=mask,
            bbox=bbox,
            area=area,
            provenance=provenance,
        )
