"""Exception hierarchy shared by all cartier modules."""

from __future__ import annotations


class CartierError(Exception):
    """Base class for every error raised by this package."""


# geometry
class GeometryError(CartierError, ValueError):
    pass


class NonPositiveDepth(GeometryError):
    pass


class PixelOutOfBounds(GeometryError):
    pass


class UnnormalizedQuaternion(GeometryError):
    pass


# dataset
class DatasetError(CartierError):
    pass


class MissingFile(DatasetError, FileNotFoundError):
    pass


class ManifestMismatch(DatasetError):
    pass


class MalformedRecord(DatasetError):
    def __init__(self, message: str, path: object = None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


class UnknownPlausibleLabel(DatasetError):
    pass


class InvalidQueryType(DatasetError):
    pass


class PlacementFailure(DatasetError):
    pass


# spatial index
class SpatialIndexError(CartierError):
    pass


class NoValidDepth(SpatialIndexError):
    pass


class EmbedderLacksPixelCapability(SpatialIndexError):
    pass


class EmbedderMismatch(SpatialIndexError):
    pass


class EmptyGrid(SpatialIndexError):
    pass


class LabelNotIndexed(SpatialIndexError, KeyError):
    def __str__(self) -> str:  # KeyError repr-quotes its message otherwise
        return str(self.args[0]) if self.args else ""


# grounding
class GroundingError(CartierError):
    pass


class EmptyVocabulary(GroundingError, ValueError):
    pass


class EmptyQuery(GroundingError, ValueError):
    pass


class InvalidTemplate(GroundingError, ValueError):
    pass


class NoMatch(GroundingError):
    def __init__(self, message: str, response: str = ""):
        super().__init__(message)
        self.response = response


class BackendError(GroundingError):
    pass


class NetworkError(BackendError):
    pass


class RateLimited(BackendError):
    def __init__(self, message: str, retry_after: float | None = None):
        super().__init__(message)
        self.retry_after = retry_after


class AuthFailure(BackendError):
    pass


class CacheMiss(BackendError):
    pass


# evaluation
class EvaluationError(CartierError):
    pass


class NoSurvivingProposals(EvaluationError):
    pass
