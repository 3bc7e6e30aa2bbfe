from typing import Dict, List, Tuple
from pydantic import BaseModel, ConfigDict

from Models.Annotation import Annotation
from Models.Category import Category
from Models.ImageInfo import ImageInfo


class Dataset(BaseModel):
    model_config = ConfigDict(frozen=True)

    images: Tuple[ImageInfo, ...] = ()
    annotations: Tuple[Annotation, ...] = ()
    categories: Tuple[Category, ...] = ()

    def image_index(self) -> Dict[int, ImageInfo]:
        return {image.id: image for image in self.images}

    def annotations_by_image(self) -> Dict[int, List[Annotation]]:
        grouped: Dict[int, List[Annotation]] = {image.id: [] for image in self.images}
        for annotation in self.annotations:
            grouped.setdefault(annotation.image_id, []).append(annotation)
        return grouped
