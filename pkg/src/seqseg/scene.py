"""Scene data model: label maps, binary masks, superpixel partitions, datasets.

All types here are immutable after construction (backing arrays are marked
read-only) and safe to share across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

VOID_ID = 0

_STRUCT_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_STRUCT_8 = np.ones((3, 3), dtype=bool)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LabelMap:
    """Row-major grid of class ids; id 0 is reserved for void/unlabeled."""

    labels: np.ndarray  # (H, W) uint16

    def __post_init__(self):
        a = np.ascontiguousarray(self.labels, dtype=np.uint16)
        if a.ndim != 2 or a.shape[0] == 0 or a.shape[1] == 0:
            raise ValueError(f"label map must be a nonempty 2-D grid, got shape {a.shape}")
        object.__setattr__(self, "labels", _freeze(a))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def validate_against(self, n_classes: int) -> None:
        top = int(self.labels.max()) if self.labels.size else 0
        if top >= n_classes:
            raise ValueError(f"label out of range: id {top} >= catalog size {n_classes}")


@dataclass(frozen=True)
class BinaryMask:
    """Boolean pixel grid; foreground pixels are True."""

    bits: np.ndarray  # (H, W) bool

    def __post_init__(self):
        a = np.ascontiguousarray(self.bits, dtype=bool)
        if a.ndim != 2 or a.shape[0] == 0 or a.shape[1] == 0:
            raise ValueError(f"mask must be a nonempty 2-D grid, got shape {a.shape}")
        object.__setattr__(self, "bits", _freeze(a))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def area(self) -> int:
        return int(self.bits.sum())

    @classmethod
    def empty(cls, height: int, width: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))


@dataclass(frozen=True)
class SuperpixelPartition:
    """Every pixel carries a superpixel id; ids form the contiguous range [0, count)."""

    assignment: np.ndarray  # (H, W) int32

    def __post_init__(self):
        a = np.ascontiguousarray(self.assignment, dtype=np.int32)
        if a.ndim != 2 or a.shape[0] == 0 or a.shape[1] == 0:
            raise ValueError(f"partition must be a nonempty 2-D grid, got shape {a.shape}")
        ids = np.unique(a)
        count = int(a.max()) + 1
        if ids[0] != 0 or len(ids) != count:
            raise ValueError("superpixel ids must form a contiguous range starting at 0")
        object.__setattr__(self, "assignment", _freeze(a))
        object.__setattr__(self, "count", count)

    count: int = field(init=False)

    @property
    def height(self) -> int:
        return self.assignment.shape[0]

    @property
    def width(self) -> int:
        return self.assignment.shape[1]

    def pixel_counts(self) -> np.ndarray:
        return np.bincount(self.assignment.ravel(), minlength=self.count)


@dataclass(frozen=True)
class ClassCatalog:
    """Ordered class names with void at index 0 and the three fixed background classes.

    Background classes are always wall, floor, ceiling; every other non-void
    class is an object class.
    """

    names: tuple[str, ...]
    background_names: tuple[str, str, str] = ("wall", "floor", "ceiling")

    def __post_init__(self):
        names = tuple(self.names)
        if len(set(names)) != len(names):
            raise ValueError("class names must be unique")
        if not names or names[0] != "void":
            raise ValueError("class catalog must start with 'void' at index 0")
        missing = [b for b in self.background_names if b not in names]
        if missing:
            raise ValueError(f"catalog is missing background classes: {missing}")
        object.__setattr__(self, "names", names)

    def __len__(self) -> int:
        return len(self.names)

    def id_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown class name: {name!r}") from None

    def name_of(self, class_id: int) -> str:
        return self.names[class_id]

    @property
    def background_ids(self) -> tuple[int, int, int]:
        return tuple(self.id_of(n) for n in self.background_names)  # type: ignore[return-value]

    @property
    def object_ids(self) -> tuple[int, ...]:
        bg = set(self.background_ids)
        return tuple(i for i in range(1, len(self.names)) if i not in bg)


@dataclass(frozen=True)
class Component:
    """One connected region of a binary mask."""

    pixels: np.ndarray  # (n, 2) int32 rows of (row, col), raster order
    area: int
    bbox: tuple[int, int, int, int]  # (row0, col0, row1, col1), half-open
    centroid: tuple[float, float]  # (row, col)

    def __post_init__(self):
        object.__setattr__(self, "pixels", _freeze(np.ascontiguousarray(self.pixels, dtype=np.int32)))


@dataclass(frozen=True)
class ComponentSet:
    components: tuple[Component, ...]
    connectivity: int

    def __len__(self) -> int:
        return len(self.components)

    def __iter__(self):
        return iter(self.components)


@dataclass(frozen=True)
class Scene:
    """One image episode: partition + ground truth + per-superpixel features."""

    scene_id: str
    category: str
    partition: SuperpixelPartition
    labelmap: LabelMap
    features: np.ndarray  # (n_superpixels, F) float64

    def __post_init__(self):
        if (self.partition.height, self.partition.width) != (self.labelmap.height, self.labelmap.width):
            raise ValueError(
                f"scene {self.scene_id}: superpixel map {self.partition.assignment.shape} "
                f"does not match label map {self.labelmap.labels.shape}"
            )
        f = np.ascontiguousarray(self.features, dtype=np.float64)
        if f.ndim != 2 or f.shape[0] != self.partition.count:
            raise ValueError(
                f"scene {self.scene_id}: feature rows {f.shape} do not match "
                f"superpixel count {self.partition.count}"
            )
        object.__setattr__(self, "features", _freeze(f))

    @property
    def height(self) -> int:
        return self.labelmap.height

    @property
    def width(self) -> int:
        return self.labelmap.width

    def superpixel_labels(self) -> np.ndarray:
        """Majority ground-truth label per superpixel (ties to the lowest id)."""
        sp = self.partition.assignment.ravel().astype(np.int64)
        lab = self.labelmap.labels.ravel().astype(np.int64)
        n_classes = int(lab.max()) + 1
        counts = np.bincount(sp * n_classes + lab, minlength=self.partition.count * n_classes)
        return counts.reshape(self.partition.count, n_classes).argmax(axis=1).astype(np.int32)


@dataclass(frozen=True)
class Dataset:
    catalog: ClassCatalog
    scenes: tuple[Scene, ...]
    splits: dict[str, tuple[int, ...]]
    name: str = "dataset"

    def __post_init__(self):
        n = len(self.scenes)
        for split_name, idx in self.splits.items():
            idx = tuple(int(i) for i in idx)
            if any(i < 0 or i >= n for i in idx):
                raise ValueError(f"split {split_name!r} contains out-of-range scene indices")
            if len(set(idx)) != len(idx):
                raise ValueError(f"split {split_name!r} contains duplicate scene indices")
            self.splits[split_name] = idx
        overlap = set(self.splits.get("train", ())) & set(self.splits.get("test", ()))
        if overlap:
            raise ValueError(f"train/test splits overlap on scene indices {sorted(overlap)}")

    def split_scenes(self, split: str) -> list[Scene]:
        return [self.scenes[i] for i in self.splits[split]]

    def categories(self) -> list[str]:
        seen: list[str] = []
        for s in self.scenes:
            if s.category not in seen:
                seen.append(s.category)
        return seen


def mask_for_class(labelmap: LabelMap, class_id: int) -> BinaryMask:
    """Mask of pixels carrying exactly the given class id."""
    if class_id < 0:
        raise ValueError(f"class id must be nonnegative, got {class_id}")
    return BinaryMask(labelmap.labels == class_id)


def connected_components(mask: BinaryMask, connectivity: int = 4) -> ComponentSet:
    """Connected components of the mask foreground.

    Components are sorted by descending area; ties break by the raster order
    of the component's first (top-left) pixel, so enumeration is deterministic.
    """
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    struct = _STRUCT_4 if connectivity == 4 else _STRUCT_8
    labeled, n = ndimage.label(mask.bits, structure=struct)
    comps = []
    for sl, idx in zip(ndimage.find_objects(labeled), range(1, n + 1)):
        rows, cols = np.nonzero(labeled[sl] == idx)
        rows = rows + sl[0].start
        cols = cols + sl[1].start
        pixels = np.column_stack([rows, cols])
        area = len(rows)
        bbox = (int(rows.min()), int(cols.min()), int(rows.max()) + 1, int(cols.max()) + 1)
        centroid = (float(rows.mean()), float(cols.mean()))
        comps.append(Component(pixels=pixels, area=area, bbox=bbox, centroid=centroid))
    comps.sort(key=lambda c: (-c.area, c.pixels[0, 0] * mask.width + c.pixels[0, 1]))
    return ComponentSet(components=tuple(comps), connectivity=connectivity)


def superpixel_adjacency(partition: SuperpixelPartition) -> np.ndarray:
    """Undirected edges (i, j), i < j, between superpixels sharing a pixel boundary."""
    a = partition.assignment
    pairs = []
    h = np.stack([a[:, :-1].ravel(), a[:, 1:].ravel()], axis=1)
    v = np.stack([a[:-1, :].ravel(), a[1:, :].ravel()], axis=1)
    for p in (h, v):
        diff = p[p[:, 0] != p[:, 1]]
        if len(diff):
            pairs.append(np.sort(diff, axis=1))
    if not pairs:
        return np.zeros((0, 2), dtype=np.int32)
    edges = np.unique(np.concatenate(pairs, axis=0), axis=0)
    return edges.astype(np.int32)
