"""Shared domain types and numeric primitives.

Descriptor data is stored in float32; reductions over many pixels
accumulate in float64 to bound drift. All types here are immutable
values after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

DESCRIPTOR_DTYPE = np.float32
DEFAULT_EPSILON = 1e-8


class DimensionMismatchError(ValueError):
    """Vector/descriptor dimensionalities do not agree."""


class ShapeMismatchError(ValueError):
    """Two raster shapes that must agree do not."""


class EmptyRegionError(ValueError):
    """An operation needing at least one masked pixel got none."""


class EmptyMemoryError(ValueError):
    """Recovery was requested with no stored descriptors."""


class OutOfBoundsError(ValueError):
    """A pixel coordinate or timestamp fell outside its valid range."""


class FileFormatError(ValueError):
    """A serialized field/mask file is malformed.

    ``offset`` is the byte offset at which the problem was detected.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class DescriptorField:
    """Dense per-pixel feature tensor of shape (height, width, dim)."""

    height: int
    width: int
    dim: int
    data: np.ndarray

    def __post_init__(self):
        if self.height < 1 or self.width < 1 or self.dim < 1:
            raise ValueError(
                f"field dimensions must be >= 1, got {self.height}x{self.width}x{self.dim}"
            )
        data = np.ascontiguousarray(self.data, dtype=DESCRIPTOR_DTYPE)
        if data.shape != (self.height, self.width, self.dim):
            raise ShapeMismatchError(
                f"data shape {data.shape} does not match declared "
                f"{(self.height, self.width, self.dim)}"
            )
        if not np.isfinite(data).all():
            raise ValueError("descriptor field contains non-finite values")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, data: np.ndarray) -> "DescriptorField":
        data = np.asarray(data)
        if data.ndim != 3:
            raise ShapeMismatchError(f"expected 3-D array, got ndim={data.ndim}")
        h, w, d = data.shape
        return cls(height=h, width=w, dim=d, data=data)

    @property
    def flat(self) -> np.ndarray:
        """(height*width, dim) view, pixel-major row-major."""
        return self.data.reshape(-1, self.dim)

    @property
    def pixel_norms(self) -> np.ndarray:
        """Per-pixel L2 norms, float32, cached after first use."""
        cached = getattr(self, "_norms", None)
        if cached is None:
            flat = self.flat
            cached = np.sqrt(np.einsum("ij,ij->i", flat, flat))
            object.__setattr__(self, "_norms", cached)
        return cached

    def descriptor_at(self, x: int, y: int) -> np.ndarray:
        if not (0 <= x < self.width and 0 <= y < self.height):
            raise OutOfBoundsError(
                f"pixel ({x},{y}) outside {self.width}x{self.height} field"
            )
        return self.data[y, x]


@dataclass(frozen=True)
class Mask:
    """Binary raster region; values are a boolean (height, width) array."""

    height: int
    width: int
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.dtype != np.bool_:
            unique = np.unique(values)
            if not np.isin(unique, (0, 1)).all():
                raise ValueError(f"mask values must be 0/1, found {unique[:8]}")
            values = values.astype(bool)
        if values.shape != (self.height, self.width):
            raise ShapeMismatchError(
                f"mask shape {values.shape} does not match declared "
                f"{(self.height, self.width)}"
            )
        values = np.ascontiguousarray(values)
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def from_array(cls, values: np.ndarray) -> "Mask":
        values = np.asarray(values)
        if values.ndim != 2:
            raise ShapeMismatchError(f"expected 2-D array, got ndim={values.ndim}")
        return cls(height=values.shape[0], width=values.shape[1], values=values)

    @classmethod
    def empty(cls, height: int, width: int) -> "Mask":
        return cls(height=height, width=width, values=np.zeros((height, width), bool))

    @property
    def nonzero_count(self) -> int:
        cached = getattr(self, "_count", None)
        if cached is None:
            cached = int(self.values.sum())
            object.__setattr__(self, "_count", cached)
        return cached

    @property
    def is_empty(self) -> bool:
        return self.nonzero_count == 0

    def bbox(self) -> tuple[int, int, int, int] | None:
        """(x, y, w, h) of the tight bounding box, or None when empty."""
        if self.is_empty:
            return None
        ys, xs = np.nonzero(self.values)
        x0, x1 = int(xs.min()), int(xs.max())
        y0, y1 = int(ys.min()), int(ys.max())
        return (x0, y0, x1 - x0 + 1, y1 - y0 + 1)

    def centroid(self) -> tuple[float, float]:
        """(x, y) mean pixel coordinate of the set pixels."""
        if self.is_empty:
            raise EmptyRegionError("centroid of an empty mask")
        ys, xs = np.nonzero(self.values)
        return (float(xs.mean()), float(ys.mean()))

    def intersection_count(self, other: "Mask") -> int:
        if (self.height, self.width) != (other.height, other.width):
            raise ShapeMismatchError(
                f"mask shapes differ: {(self.height, self.width)} vs "
                f"{(other.height, other.width)}"
            )
        return int(np.logical_and(self.values, other.values).sum())


class QueryKind(Enum):
    CLICK = "click"
    REGION = "region"
    PRECOMPUTED = "precomputed"


@dataclass(frozen=True)
class QueryDescriptor:
    """Labeled d-vector embedding of a user query."""

    label: str
    vector: np.ndarray
    kind: QueryKind = QueryKind.PRECOMPUTED

    def __post_init__(self):
        vector = np.ascontiguousarray(self.vector, dtype=DESCRIPTOR_DTYPE)
        if vector.ndim != 1 or vector.size == 0:
            raise DimensionMismatchError(
                f"query vector must be 1-D and non-empty, got shape {vector.shape}"
            )
        if not np.isfinite(vector).all():
            raise ValueError("query vector contains non-finite values")
        if float(np.linalg.norm(vector.astype(np.float64))) == 0.0:
            raise ValueError(f"query {self.label!r} has zero norm")
        vector.flags.writeable = False
        object.__setattr__(self, "vector", vector)

    @property
    def dim(self) -> int:
        return self.vector.shape[0]


@dataclass(frozen=True)
class LabeledRegion:
    """A mask with an assigned query label (or None when unlabeled) and score."""

    mask: Mask
    label: str | None
    score: float

    @property
    def is_labeled(self) -> bool:
        return self.label is not None


@dataclass(frozen=True)
class SimilarityConfig:
    alpha: float = 0.35
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError(f"alpha must be in [0,1], got {self.alpha}")
        if not (0.0 < self.epsilon <= 1e-3):
            raise ValueError(f"epsilon must be in (0, 1e-3], got {self.epsilon}")


def cosine_similarity(a, b, epsilon: float = DEFAULT_EPSILON) -> float:
    """Cosine of two vectors with an epsilon-stabilized denominator.

    Returns a^T b / (|a||b| + epsilon), clamped to [-1, 1].
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.size == 0 or b.size == 0:
        raise DimensionMismatchError(
            f"expected non-empty 1-D vectors, got shapes {a.shape} and {b.shape}"
        )
    if a.shape != b.shape:
        raise DimensionMismatchError(
            f"vector lengths differ: {a.shape[0]} vs {b.shape[0]}"
        )
    denom = float(np.linalg.norm(a)) * float(np.linalg.norm(b)) + epsilon
    return float(np.clip(float(a @ b) / denom, -1.0, 1.0))


def validate_shapes(field: DescriptorField, mask: Mask) -> None:
    """Raise ShapeMismatchError unless mask and field rasters agree."""
    if (field.height, field.width) != (mask.height, mask.width):
        raise ShapeMismatchError(
            f"field {field.height}x{field.width} vs mask {mask.height}x{mask.width}"
        )
