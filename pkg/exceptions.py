from typing import Any, Dict, List, Optional


class XPasteError(Exception):
    """Base error for every pipeline stage."""

    def __init__(self, message: str, details: Optional[Any] = None):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> Dict[str, Any]:
        return {
            "error": type(self).__name__,
            "message": self.message,
            "details": self.details,
        }


class DatasetParseError(XPasteError):
    def __init__(self, message: str, byte_offset: Optional[int] = None):
        if byte_offset is not None:
            message = f"{message} (byte offset {byte_offset})"
        super().__init__(message, {"byte_offset": byte_offset})
        self.byte_offset = byte_offset


class ReferentialIntegrityError(XPasteError):
    def __init__(self, message: str, annotation_ids: List[int]):
        super().__init__(message, {"annotation_ids": annotation_ids})
        self.annotation_ids = annotation_ids


class RleFormatError(XPasteError):
    pass


class ManifestError(XPasteError):
    def __init__(self, problems: List[Dict[str, Any]]):
        lines = sorted({p["line"] for p in problems})
        super().__init__(f"Invalid pool manifest records on lines {lines}", problems)
        self.lines = lines


class ImageLoadError(XPasteError):
    pass


class ScaleStatsError(XPasteError):
    pass


class PlanningError(XPasteError):
    pass


class ConfigError(XPasteError):
    def __init__(self, message: str, key_paths: List[str]):
        super().__init__(message, {"key_paths": key_paths})
        self.key_paths = key_paths
