"""False-color PNG rendering of descriptor fields for the operator console.

Pixels take the hue of their best-matching query scaled by the match score;
unmatched pixels fall back to a gray similarity shade. Annotation boxes are
drawn client-side from the JSON payload, not baked into the image.
"""

from __future__ import annotations

import base64
import io

import numpy as np
from PIL import Image

from .core import DescriptorField, QueryDescriptor
from .detection import pixel_similarities

# distinct base colors per query index, cycled
_PALETTE = np.array(
    [
        (80, 200, 120),   # green
        (90, 160, 255),   # blue
        (250, 160, 60),   # orange
        (230, 90, 200),   # magenta
        (120, 220, 220),  # teal
        (250, 230, 90),   # yellow
    ],
    dtype=np.float32,
)


def field_to_rgb(
    field: DescriptorField,
    queries: list[QueryDescriptor] | None,
    alpha: float,
    epsilon: float = 1e-8,
) -> np.ndarray:
    h, w = field.height, field.width
    if not queries:
        return np.full((h, w, 3), 96, dtype=np.uint8)
    best_idx, best_scores = pixel_similarities(field, queries, epsilon)
    strength = np.clip(best_scores, 0.0, 1.0)[..., None]
    colors = _PALETTE[best_idx % len(_PALETTE)]
    rgb = colors * strength
    gray = 40.0 + 120.0 * strength
    labeled = (best_scores >= alpha)[..., None]
    out = np.where(labeled, rgb, np.repeat(gray, 3, axis=2))
    return out.astype(np.uint8)


def encode_png_base64(rgb: np.ndarray) -> str:
    image = Image.fromarray(rgb, mode="RGB")
    buf = io.BytesIO()
    image.save(buf, format="PNG", optimize=False, compress_level=1)
    return base64.b64encode(buf.getvalue()).decode("ascii")
