from pydantic import BaseModel, ConfigDict, Field


class ImageInfo(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: int = Field(..., gt=0)
    width: int = Field(..., gt=0)
    height: int = Field(..., gt=0)
    file_name: str
