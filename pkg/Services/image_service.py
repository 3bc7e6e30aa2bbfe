from pathlib import Path
from typing import Optional, Union
import logging

import numpy as np
from PIL import Image, UnidentifiedImageError

from exceptions import ImageLoadError

logger = logging.getLogger(__name__)


class ImageStore:
    """Resolves relative image paths against a root and decodes them to RGB arrays.

    Instances are plain data so they can be shipped to worker processes.
    """

    def __init__(self, root: Optional[Union[str, Path]] = None):
        self.root = Path(root) if root is not None else None

    def resolve(self, relative_path: Union[str, Path]) -> Path:
        path = Path(relative_path)
        if self.root is not None and not path.is_absolute():
            path = self.root / path
        return path

    def exists(self, relative_path: Union[str, Path]) -> bool:
        return self.resolve(relative_path).is_file()

    def load_rgb(self, relative_path: Union[str, Path]) -> np.ndarray:
        path = self.resolve(relative_path)
        try:
            with Image.open(path) as image:
                return np.asarray(image.convert("RGB"), dtype=np.uint8).copy()
        except FileNotFoundError as e:
            raise ImageLoadError(f"Image file not found: {path}", {"path": str(path)}) from e
        except (UnidentifiedImageError, OSError) as e:
            raise ImageLoadError(f"Cannot decode image {path}: {e}", {"path": str(path)}) from e


def save_png(image: np.ndarray, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(image, dtype=np.uint8)).save(path, format="PNG")
    logger.debug(f"Wrote {path}")
