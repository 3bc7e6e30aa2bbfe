from typing import Dict
from pydantic import BaseModel, ConfigDict, Field


class CategoryScale(BaseModel):
    model_config = ConfigDict(frozen=True)

    mu: float = Field(..., gt=0.0, le=1.0)
    sigma: float = Field(..., ge=0.0)
    n: int = Field(..., ge=1)


class ScaleStats(BaseModel):
    """Relative object scale sqrt(mask area / image area) per category."""
    model_config = ConfigDict(frozen=True)

    categories: Dict[int, CategoryScale]
    global_scale: CategoryScale

    def for_category(self, category_id: int) -> CategoryScale:
        return self.categories.get(category_id, self.global_scale)
