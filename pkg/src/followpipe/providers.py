"""Descriptor-field providers: a procedural synthetic scene and file-backed fields.

The synthetic provider renders a downward-facing orthographic view of a flat
world. Every pixel gets a unit descriptor drawn from its owner's class basis
plus isotropic Gaussian noise; occluders stamp their own class over anything
beneath them. File-backed providers read/write the binary field and mask-list
formats documented in docs/file_formats.md.
"""

from __future__ import annotations

import functools
import json
import struct
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .core import (
    DESCRIPTOR_DTYPE,
    DescriptorField,
    EmptyRegionError,
    FileFormatError,
    Mask,
    OutOfBoundsError,
    QueryDescriptor,
    QueryKind,
    validate_shapes,
)

FIELD_MAGIC = b"FAND"
MASKS_MAGIC = b"FANM"
FORMAT_VERSION = 1

# pairwise class-basis separability enforced at construction
MAX_BASE_COSINE = 0.5
# synthetic occluder classes get a stricter cap so "distinct from all object
# classes" survives per-pixel noise
MAX_OCCLUDER_COSINE = 0.25


@dataclass(frozen=True)
class ClassSpec:
    """A semantic class: its id and the RNG seed its basis vector grows from.

    ``align`` optionally pins the basis at a fixed cosine to another class
    (decoy construction); value must stay below the separability cap.
    """

    class_id: str
    seed: int
    align: tuple[str, float] | None = None

    def __post_init__(self):
        if self.align is not None and not (0.0 <= self.align[1] < MAX_BASE_COSINE):
            raise ValueError(
                f"align cosine must be in [0, {MAX_BASE_COSINE}), got {self.align[1]}"
            )


@dataclass(frozen=True)
class ObjectSpec:
    object_id: str
    class_id: str
    shape: str  # "disc" | "rect"
    size: float  # meters: disc diameter / square side
    waypoints: tuple[tuple[float, float, float], ...]  # (t, x, y)

    def __post_init__(self):
        if self.shape not in ("disc", "rect"):
            raise ValueError(f"shape must be disc|rect, got {self.shape!r}")
        if self.size <= 0:
            raise ValueError("object size must be positive")
        times = [w[0] for w in self.waypoints]
        if len(times) == 0:
            raise ValueError(f"object {self.object_id!r} has no waypoints")
        if any(t1 <= t0 for t0, t1 in zip(times, times[1:])):
            raise ValueError(
                f"object {self.object_id!r} waypoint times must strictly increase"
            )

    def position(self, t: float) -> tuple[float, float]:
        """Piecewise-linear interpolation, clamped to the endpoint poses."""
        wps = self.waypoints
        if t <= wps[0][0]:
            return (wps[0][1], wps[0][2])
        if t >= wps[-1][0]:
            return (wps[-1][1], wps[-1][2])
        for (t0, x0, y0), (t1, x1, y1) in zip(wps, wps[1:]):
            if t0 <= t <= t1:
                u = (t - t0) / (t1 - t0)
                return (x0 + u * (x1 - x0), y0 + u * (y1 - y0))
        raise AssertionError("unreachable: waypoint times are sorted")


@dataclass(frozen=True)
class Occluder:
    rect: tuple[float, float, float, float]  # (x0, y0, w, h) world meters
    t0: float
    t1: float

    def active(self, t: float) -> bool:
        return self.t0 <= t <= self.t1


@dataclass(frozen=True)
class SceneScript:
    duration: float
    frame_rate: float
    world_extent: float
    background_class: str
    classes: tuple[ClassSpec, ...]
    objects: tuple[ObjectSpec, ...]
    occluders: tuple[Occluder, ...] = ()
    noise_sigma: float = 0.0
    dim: int = 32
    seed: int = 0
    # boundary feature bleed, in pixels: 0 keeps hard class edges; 1 mixes
    # each edge pixel's basis with its neighbors', mimicking the blocky
    # boundaries of real per-pixel ViT features
    edge_bleed: int = 0

    def __post_init__(self):
        if self.duration <= 0 or self.frame_rate <= 0 or self.world_extent <= 0:
            raise ValueError("duration, frame_rate and world_extent must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.edge_bleed not in (0, 1):
            raise ValueError("edge_bleed must be 0 or 1")
        ids = [c.class_id for c in self.classes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate class ids")
        if self.background_class not in ids:
            raise ValueError(
                f"background class {self.background_class!r} not in class list"
            )
        half = self.world_extent / 2
        for obj in self.objects:
            if obj.class_id not in ids:
                raise ValueError(
                    f"object {obj.object_id!r} references unknown class {obj.class_id!r}"
                )
            for t, x, y in obj.waypoints:
                if abs(x) > half or abs(y) > half:
                    raise ValueError(
                        f"waypoint ({x},{y}) of {obj.object_id!r} outside "
                        f"world extent +/-{half}"
                    )

    def frame_index(self, t: float) -> int:
        return int(round(t * self.frame_rate))

    @property
    def dt(self) -> float:
        return 1.0 / self.frame_rate

    def to_dict(self) -> dict:
        return {
            "duration": self.duration,
            "frame_rate": self.frame_rate,
            "world_extent": self.world_extent,
            "background_class": self.background_class,
            "classes": [
                {
                    "class_id": c.class_id,
                    "seed": c.seed,
                    **({"align": [c.align[0], c.align[1]]} if c.align else {}),
                }
                for c in self.classes
            ],
            "objects": [
                {
                    "object_id": o.object_id,
                    "class_id": o.class_id,
                    "shape": o.shape,
                    "size": o.size,
                    "waypoints": [list(w) for w in o.waypoints],
                }
                for o in self.objects
            ],
            "occluders": [
                {"rect": list(oc.rect), "interval": [oc.t0, oc.t1]}
                for oc in self.occluders
            ],
            "noise_sigma": self.noise_sigma,
            "dim": self.dim,
            "seed": self.seed,
            "edge_bleed": self.edge_bleed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SceneScript":
        known = {
            "duration", "frame_rate", "world_extent", "background_class",
            "classes", "objects", "occluders", "noise_sigma", "dim", "seed",
            "edge_bleed",
        }
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown scene keys: {sorted(unknown)}")
        classes = tuple(
            ClassSpec(
                class_id=c["class_id"],
                seed=int(c["seed"]),
                align=(c["align"][0], float(c["align"][1])) if "align" in c else None,
            )
            for c in doc["classes"]
        )
        objects = tuple(
            ObjectSpec(
                object_id=o["object_id"],
                class_id=o["class_id"],
                shape=o["shape"],
                size=float(o["size"]),
                waypoints=tuple(tuple(map(float, w)) for w in o["waypoints"]),
            )
            for o in doc.get("objects", [])
        )
        occluders = tuple(
            Occluder(rect=tuple(map(float, oc["rect"])), t0=float(oc["interval"][0]),
                     t1=float(oc["interval"][1]))
            for oc in doc.get("occluders", [])
        )
        return cls(
            duration=float(doc["duration"]),
            frame_rate=float(doc["frame_rate"]),
            world_extent=float(doc["world_extent"]),
            background_class=doc["background_class"],
            classes=classes,
            objects=objects,
            occluders=occluders,
            noise_sigma=float(doc.get("noise_sigma", 0.0)),
            dim=int(doc.get("dim", 32)),
            seed=int(doc.get("seed", 0)),
            edge_bleed=int(doc.get("edge_bleed", 0)),
        )

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def from_json(cls, path: str | Path) -> "SceneScript":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class CameraModel:
    """Downward orthographic camera centered on the follower pose.

    Pixel (px, py) maps to world (pose + (p - view/2) * scale); the view
    center pixel always sits on the follower.
    """

    view_width: int
    view_height: int
    scale: float  # meters per pixel
    pose: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("camera scale must be positive")

    def at(self, pose: tuple[float, float]) -> "CameraModel":
        return CameraModel(self.view_width, self.view_height, self.scale, pose)

    def pixel_to_world(self, px: float, py: float) -> tuple[float, float]:
        return (
            self.pose[0] + (px - self.view_width / 2) * self.scale,
            self.pose[1] + (py - self.view_height / 2) * self.scale,
        )

    def world_to_pixel(self, x: float, y: float) -> tuple[float, float]:
        return (
            (x - self.pose[0]) / self.scale + self.view_width / 2,
            (y - self.pose[1]) / self.scale + self.view_height / 2,
        )


@dataclass(frozen=True)
class GroundTruth:
    """Visibility masks per scripted object; occluded objects get empty masks."""

    entries: tuple[tuple[str, str, Mask], ...]  # (object_id, class_id, mask)

    def mask_for(self, object_id: str) -> Mask:
        for oid, _, mask in self.entries:
            if oid == object_id:
                return mask
        raise KeyError(object_id)

    def masks_of_class(self, class_id: str) -> list[Mask]:
        return [m for _, cid, m in self.entries if cid == class_id]

    def nonempty_masks(self) -> list[Mask]:
        return [m for _, _, m in self.entries if not m.is_empty]


@functools.lru_cache(maxsize=64)
def class_basis(scene: SceneScript) -> dict[str, np.ndarray]:
    """Unit basis vector per class id, plus one per occluder.

    Vectors are drawn from each class seed, then repelled (project out the
    worst partner and renormalize) until all pairwise cosines are below
    MAX_BASE_COSINE. Occluders get synthetic classes keyed "__occluder<i>".
    aligned classes are constructed afterwards at their pinned cosine.
    """
    names: list[str] = []
    vectors: list[np.ndarray] = []
    aligned: list[ClassSpec] = []
    for spec in scene.classes:
        if spec.align is not None:
            aligned.append(spec)
            continue
        rng = np.random.default_rng((scene.seed, spec.seed))
        v = rng.standard_normal(scene.dim)
        names.append(spec.class_id)
        vectors.append(v / np.linalg.norm(v))
    for i in range(len(scene.occluders)):
        rng = np.random.default_rng((scene.seed, 1_000_003 + i))
        v = rng.standard_normal(scene.dim)
        names.append(f"__occluder{i}")
        vectors.append(v / np.linalg.norm(v))

    occluder_start = len(vectors) - len(scene.occluders)

    def cap(i: int, j: int) -> float:
        if i >= occluder_start or j >= occluder_start:
            return MAX_OCCLUDER_COSINE
        return MAX_BASE_COSINE

    for _ in range(200):
        worst = None
        for i in range(len(vectors)):
            for j in range(i + 1, len(vectors)):
                c = float(vectors[i] @ vectors[j])
                if abs(c) >= cap(i, j) and (worst is None or abs(c) > worst[0]):
                    worst = (abs(c), i, j)
        if worst is None:
            break
        _, i, j = worst
        v = vectors[j] - (vectors[j] @ vectors[i]) * vectors[i]
        norm = np.linalg.norm(v)
        if norm < 1e-9:
            rng = np.random.default_rng((scene.seed, 900_001 + j))
            v = rng.standard_normal(scene.dim)
            norm = np.linalg.norm(v)
        vectors[j] = v / norm
    else:
        raise RuntimeError("class basis repulsion did not converge")

    basis = {n: v for n, v in zip(names, vectors)}
    for spec in aligned:
        ref_id, cos_target = spec.align
        if ref_id not in basis:
            raise ValueError(f"align target {ref_id!r} must be a non-aligned class")
        ref = basis[ref_id]
        rng = np.random.default_rng((scene.seed, spec.seed))
        w = rng.standard_normal(scene.dim)
        w -= (w @ ref) * ref
        w /= np.linalg.norm(w)
        basis[spec.class_id] = cos_target * ref + np.sqrt(1 - cos_target**2) * w
    return {
        n: np.ascontiguousarray(v, dtype=DESCRIPTOR_DTYPE) for n, v in basis.items()
    }


def _owner_map(scene: SceneScript, t: float, camera: CameraModel) -> np.ndarray:
    """Per-pixel owner index: -1 background, i >= 0 object i, -2-j occluder j."""
    h, w = camera.view_height, camera.view_width
    px = np.arange(w, dtype=np.float64)
    py = np.arange(h, dtype=np.float64)
    wx = camera.pose[0] + (px - w / 2) * camera.scale
    wy = camera.pose[1] + (py - h / 2) * camera.scale
    gx, gy = np.meshgrid(wx, wy)

    owner = np.full((h, w), -1, dtype=np.int32)
    for i, obj in enumerate(scene.objects):
        ox, oy = obj.position(t)
        half = obj.size / 2
        if obj.shape == "disc":
            inside = (gx - ox) ** 2 + (gy - oy) ** 2 <= half**2
        else:
            inside = (np.abs(gx - ox) <= half) & (np.abs(gy - oy) <= half)
        owner[inside] = i
    for j, occ in enumerate(scene.occluders):
        if not occ.active(t):
            continue
        x0, y0, rw, rh = occ.rect
        inside = (gx >= x0) & (gx <= x0 + rw) & (gy >= y0) & (gy <= y0 + rh)
        owner[inside] = -2 - j
    return owner


def _ground_truth_from_owner(scene: SceneScript, owner: np.ndarray) -> GroundTruth:
    entries = []
    for i, obj in enumerate(scene.objects):
        entries.append((obj.object_id, obj.class_id, Mask.from_array(owner == i)))
    return GroundTruth(entries=tuple(entries))


def ground_truth(scene: SceneScript, t: float, camera: CameraModel) -> GroundTruth:
    """Visibility masks only; cheap path for oracles and evaluation."""
    if not (0.0 <= t <= scene.duration):
        raise OutOfBoundsError(f"t={t} outside [0, {scene.duration}]")
    return _ground_truth_from_owner(scene, _owner_map(scene, t, camera))


def render_frame(
    scene: SceneScript, t: float, camera: CameraModel
) -> tuple[DescriptorField, GroundTruth]:
    """Render the descriptor field and ground truth for time t.

    Deterministic in (scene, t, camera): per-frame noise is keyed by
    (scene.seed, frame index), so frames can be re-rendered in any order.
    """
    if not (0.0 <= t <= scene.duration):
        raise OutOfBoundsError(f"t={t} outside [0, {scene.duration}]")
    h, w, d = camera.view_height, camera.view_width, scene.dim
    owner = _owner_map(scene, t, camera)
    gt = _ground_truth_from_owner(scene, owner)

    basis = class_basis(scene)
    # class index per pixel: 0..C-1 scene classes (background included), then occluders
    order = [c.class_id for c in scene.classes] + [
        f"__occluder{j}" for j in range(len(scene.occluders))
    ]
    index_of = {name: k for k, name in enumerate(order)}
    table = np.stack([basis[name] for name in order])  # (C, d) float32

    class_idx = np.full((h, w), index_of[scene.background_class], dtype=np.int32)
    for i, obj in enumerate(scene.objects):
        class_idx[owner == i] = index_of[obj.class_id]
    for j in range(len(scene.occluders)):
        class_idx[owner == (-2 - j)] = index_of[f"__occluder{j}"]

    base = table[class_idx]  # (h, w, d) float32
    if scene.edge_bleed:
        # average each pixel's basis with its 4-neighborhood; interior pixels
        # are untouched, class-boundary pixels become mixtures
        padded = np.pad(base, ((1, 1), (1, 1), (0, 0)), mode="edge")
        blended = (
            padded[1:-1, 1:-1]
            + padded[:-2, 1:-1]
            + padded[2:, 1:-1]
            + padded[1:-1, :-2]
            + padded[1:-1, 2:]
        ) / 5.0
        base = blended.astype(DESCRIPTOR_DTYPE)

    if scene.noise_sigma > 0 or scene.edge_bleed:
        data = base.copy()
        if scene.noise_sigma > 0:
            rng = np.random.default_rng((scene.seed, scene.frame_index(t)))
            data += scene.noise_sigma * rng.standard_normal(
                (h, w, d), dtype=DESCRIPTOR_DTYPE
            )
        norms = np.sqrt(np.einsum("ijk,ijk->ij", data, data, dtype=np.float64))
        data /= norms[:, :, None].astype(DESCRIPTOR_DTYPE)
    else:
        data = base  # exact basis vectors, no renormalization drift
    return DescriptorField(height=h, width=w, dim=d, data=data), gt


def query_from_click(
    field: DescriptorField, x: int, y: int, label: str
) -> QueryDescriptor:
    """Query whose vector is the descriptor at pixel (x, y)."""
    vec = field.descriptor_at(x, y)
    return QueryDescriptor(label=label, vector=vec.copy(), kind=QueryKind.CLICK)


def query_from_region(
    field: DescriptorField, mask: Mask, label: str
) -> QueryDescriptor:
    """Query whose vector is the mean descriptor under a non-empty mask."""
    validate_shapes(field, mask)
    if mask.is_empty:
        raise EmptyRegionError("query_from_region needs a non-empty mask")
    flat = field.flat[mask.values.ravel()]
    mean = flat.sum(axis=0, dtype=np.float64) / mask.nonzero_count
    return QueryDescriptor(label=label, vector=mean, kind=QueryKind.REGION)


def class_query(scene: SceneScript, class_id: str, label: str | None = None) -> QueryDescriptor:
    """Precomputed query equal to a scene class basis vector."""
    basis = class_basis(scene)
    if class_id not in basis:
        raise KeyError(f"unknown class {class_id!r}")
    return QueryDescriptor(
        label=label or class_id, vector=basis[class_id].copy(),
        kind=QueryKind.PRECOMPUTED,
    )


# ---------------------------------------------------------------------------
# binary file formats (docs/file_formats.md)
# ---------------------------------------------------------------------------

def write_descriptor_field(field: DescriptorField, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(FIELD_MAGIC)
        fh.write(bytes([FORMAT_VERSION]))
        fh.write(struct.pack("<III", field.height, field.width, field.dim))
        fh.write(field.data.astype("<f4").tobytes())


def load_descriptor_field(path: str | Path) -> DescriptorField:
    raw = Path(path).read_bytes()
    if len(raw) < 5 or raw[:4] != FIELD_MAGIC:
        raise FileFormatError(f"bad magic {raw[:4]!r}, expected {FIELD_MAGIC!r}", 0)
    if raw[4] != FORMAT_VERSION:
        raise FileFormatError(f"unsupported version {raw[4]}", 4)
    if len(raw) < 17:
        raise FileFormatError("truncated header", len(raw))
    h, w, d = struct.unpack_from("<III", raw, 5)
    if h < 1 or w < 1 or d < 1:
        raise FileFormatError(f"invalid dimensions {h}x{w}x{d}", 5)
    payload = raw[17:]
    expected = h * w * d * 4
    if len(payload) != expected:
        raise FileFormatError(
            f"payload holds {len(payload)} bytes, header implies {expected}",
            17 + min(len(payload), expected),
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(h, w, d)
    bad = ~np.isfinite(data)
    if bad.any():
        first = int(np.flatnonzero(bad.ravel())[0])
        raise FileFormatError("non-finite descriptor value", 17 + first * 4)
    return DescriptorField(height=h, width=w, dim=d, data=data)


def write_masks(masks: list[Mask], path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(MASKS_MAGIC)
        fh.write(bytes([FORMAT_VERSION]))
        fh.write(struct.pack("<I", len(masks)))
        for mask in masks:
            fh.write(struct.pack("<II", mask.height, mask.width))
            fh.write(mask.values.astype(np.uint8).tobytes())


def load_masks(path: str | Path) -> list[Mask]:
    raw = Path(path).read_bytes()
    if len(raw) < 5 or raw[:4] != MASKS_MAGIC:
        raise FileFormatError(f"bad magic {raw[:4]!r}, expected {MASKS_MAGIC!r}", 0)
    if raw[4] != FORMAT_VERSION:
        raise FileFormatError(f"unsupported version {raw[4]}", 4)
    if len(raw) < 9:
        raise FileFormatError("truncated header", len(raw))
    (count,) = struct.unpack_from("<I", raw, 5)
    offset = 9
    masks: list[Mask] = []
    for _ in range(count):
        if len(raw) < offset + 8:
            raise FileFormatError("truncated mask header", offset)
        h, w = struct.unpack_from("<II", raw, offset)
        offset += 8
        if h < 1 or w < 1:
            raise FileFormatError(f"invalid mask shape {h}x{w}", offset - 8)
        if len(raw) < offset + h * w:
            raise FileFormatError("truncated mask payload", len(raw))
        values = np.frombuffer(raw, dtype=np.uint8, count=h * w, offset=offset)
        bad = values > 1
        if bad.any():
            first = int(np.flatnonzero(bad)[0])
            raise FileFormatError(
                f"mask byte {values[first]} is not 0/1", offset + first
            )
        masks.append(Mask(height=h, width=w, values=values.reshape(h, w)))
        offset += h * w
    if offset != len(raw):
        raise FileFormatError(f"{len(raw) - offset} trailing bytes", offset)
    return masks
