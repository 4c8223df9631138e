"""Procedural generator of indoor-like scenes for desk-scale experiments.

Each scene is an image-sized label map with a wall/floor/(optional) ceiling
band layout, axis-aligned rectangle/ellipse objects drawn with per-category
presence probabilities and containment rules (e.g. a pillow only appears on a
bed and inside the bed's footprint), a boundary-refined grid superpixel
partition, and per-superpixel features: a noisy per-class appearance
signature plus normalized centroid and area fraction.

All randomness uses numpy's PCG64 generator seeded through SeedSequence, so a
corpus reproduces bit-for-bit across platforms. Scene i of a corpus draws
from SeedSequence((corpus_seed, i)).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataio import write_dataset
from .scene import ClassCatalog, Dataset, LabelMap, Scene, SuperpixelPartition

DEFAULT_NOISE_SIGMA = 0.35
SIGNATURE_AMPLITUDE = 0.5
MIN_CELL = 2
PLACEMENT_RETRIES = 50


class SceneGenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ObjectSpec:
    name: str
    presence: float
    size_range: tuple[float, float]  # fraction of image area
    container: str | None = None
    shape: str = "rect"  # "rect" | "ellipse"

    def __post_init__(self):
        if not (0.0 <= self.presence <= 1.0):
            raise ValueError(f"{self.name}: presence probability {self.presence} outside [0, 1]")
        lo, hi = self.size_range
        if not (0.0 < lo <= hi < 1.0):
            raise ValueError(f"{self.name}: size range {self.size_range} must be nonempty within (0, 1)")
        if self.shape not in ("rect", "ellipse"):
            raise ValueError(f"{self.name}: unknown shape {self.shape!r}")


@dataclass(frozen=True)
class SceneTemplate:
    category: str
    objects: tuple[ObjectSpec, ...]
    ceiling_frac: float = 0.12
    floor_frac: float = 0.25
    noise_sigma: float = DEFAULT_NOISE_SIGMA

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be >= 0")
        if not (0.0 <= self.ceiling_frac < 1.0 and 0.0 < self.floor_frac < 1.0):
            raise ValueError("band fractions must leave room for a wall band")
        if self.ceiling_frac + self.floor_frac >= 1.0:
            raise ValueError("ceiling and floor bands leave no wall band")
        names = [o.name for o in self.objects]
        if len(set(names)) != len(names):
            raise ValueError(f"{self.category}: duplicate object names")
        self._check_containment_acyclic()

    def _check_containment_acyclic(self):
        parent = {o.name: o.container for o in self.objects}
        for o in self.objects:
            if o.container is not None and o.container not in parent:
                raise ValueError(f"{self.category}: {o.name} contained in unknown object {o.container!r}")
            seen = {o.name}
            cur = o.container
            while cur is not None:
                if cur in seen:
                    raise ValueError(f"{self.category}: containment cycle through {cur!r}")
                seen.add(cur)
                cur = parent[cur]

    def placement_order(self) -> list[ObjectSpec]:
        """Containers before their contained objects; otherwise template order."""
        by_name = {o.name: o for o in self.objects}
        ordered: list[ObjectSpec] = []
        placed: set[str] = set()

        def visit(o: ObjectSpec):
            if o.name in placed:
                return
            if o.container is not None:
                visit(by_name[o.container])
            placed.add(o.name)
            ordered.append(o)

        for o in self.objects:
            visit(o)
        return ordered

    def to_json_dict(self) -> dict:
        return {
            "category": self.category,
            "ceiling_frac": self.ceiling_frac,
            "floor_frac": self.floor_frac,
            "noise_sigma": self.noise_sigma,
            "objects": [
                {
                    "name": o.name,
                    "presence": o.presence,
                    "size_range": list(o.size_range),
                    "container": o.container,
                    "shape": o.shape,
                }
                for o in self.objects
            ],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "SceneTemplate":
        objects = tuple(
            ObjectSpec(
                name=o["name"],
                presence=float(o["presence"]),
                size_range=(float(o["size_range"][0]), float(o["size_range"][1])),
                container=o.get("container"),
                shape=o.get("shape", "rect"),
            )
            for o in d["objects"]
        )
        return cls(
            category=d["category"],
            objects=objects,
            ceiling_frac=float(d.get("ceiling_frac", 0.12)),
            floor_frac=float(d.get("floor_frac", 0.25)),
            noise_sigma=float(d.get("noise_sigma", DEFAULT_NOISE_SIGMA)),
        )


def load_templates(path: str | Path) -> list[SceneTemplate]:
    data = json.loads(Path(path).read_text())
    return [SceneTemplate.from_json_dict(d) for d in data]


def save_templates(templates: list[SceneTemplate], path: str | Path) -> None:
    Path(path).write_text(json.dumps([t.to_json_dict() for t in templates], indent=2) + "\n")


def catalog_for_templates(templates: list[SceneTemplate]) -> ClassCatalog:
    names = ["void", "wall", "floor", "ceiling"]
    for t in templates:
        for o in t.placement_order():
            if o.name in ("void", "wall", "floor", "ceiling"):
                raise ValueError(f"{t.category}: object name {o.name!r} collides with a reserved class")
            if o.name not in names:
                names.append(o.name)
    return ClassCatalog(names=tuple(names))


def _draw_shape(labels: np.ndarray, r0: int, c0: int, h: int, w: int, shape: str, class_id: int) -> np.ndarray:
    """Paint the object and return its boolean footprint."""
    footprint = np.zeros(labels.shape, dtype=bool)
    if shape == "rect":
        footprint[r0 : r0 + h, c0 : c0 + w] = True
    else:
        rr, cc = np.ogrid[: labels.shape[0], : labels.shape[1]]
        cy, cx = r0 + (h - 1) / 2.0, c0 + (w - 1) / 2.0
        ry, rx = max(h / 2.0, 1.0), max(w / 2.0, 1.0)
        footprint = ((rr - cy) / ry) ** 2 + ((cc - cx) / rx) ** 2 <= 1.0
    labels[footprint] = class_id
    return footprint


def _place_object(
    labels: np.ndarray,
    rng: np.random.Generator,
    spec: ObjectSpec,
    class_id: int,
    container_region: np.ndarray | None,
) -> np.ndarray:
    """Sample size and position until the footprint fits; bounded retries.

    Contained objects sample their position inside the container's bounding
    box and must land entirely within the container's pre-placement pixels.
    """
    height, width = labels.shape
    total = height * width
    r_lo, r_hi, c_lo, c_hi = 0, height, 0, width
    if container_region is not None:
        rows, cols = np.nonzero(container_region)
        r_lo, r_hi = int(rows.min()), int(rows.max()) + 1
        c_lo, c_hi = int(cols.min()), int(cols.max()) + 1
    for _ in range(PLACEMENT_RETRIES):
        area = rng.uniform(*spec.size_range) * total
        aspect = rng.uniform(0.6, 1.6)
        h = max(2, int(round(np.sqrt(area * aspect))))
        w = max(2, int(round(np.sqrt(area / aspect))))
        if h > r_hi - r_lo or w > c_hi - c_lo:
            continue
        r0 = int(rng.integers(r_lo, r_hi - h + 1))
        c0 = int(rng.integers(c_lo, c_hi - w + 1))
        if container_region is not None:
            probe = np.zeros_like(labels, dtype=bool)
            if spec.shape == "rect":
                probe[r0 : r0 + h, c0 : c0 + w] = True
            else:
                rr, cc = np.ogrid[:height, :width]
                cy, cx = r0 + (h - 1) / 2.0, c0 + (w - 1) / 2.0
                probe = ((rr - cy) / max(h / 2.0, 1.0)) ** 2 + ((cc - cx) / max(w / 2.0, 1.0)) ** 2 <= 1.0
            if not probe.any() or not np.all(container_region[probe]):
                continue
            labels[probe] = class_id
            return probe
        return _draw_shape(labels, r0, c0, h, w, spec.shape, class_id)
    raise SceneGenerationError(f"could not place object {spec.name!r} after {PLACEMENT_RETRIES} retries")


def _refined_grid(labels: np.ndarray, cell: int, max_impurity: float) -> np.ndarray:
    """Regular grid refined (quadtree) where a cell straddles a label boundary.

    A cell splits while its majority-label fraction is below 1 - max_impurity
    and it is larger than MIN_CELL on both sides. Leaves are numbered in a
    deterministic traversal order.
    """
    height, width = labels.shape
    assignment = np.zeros((height, width), dtype=np.int32)
    stack: list[tuple[int, int, int, int]] = []
    for r in range(0, height, cell):
        for c in range(0, width, cell):
            stack.append((r, c, min(cell, height - r), min(cell, width - c)))
    leaves: list[tuple[int, int, int, int]] = []
    while stack:
        r, c, h, w = stack.pop(0)
        block = labels[r : r + h, c : c + w]
        counts = np.bincount(block.ravel())
        purity = counts.max() / block.size
        if purity < 1.0 - max_impurity and h > MIN_CELL and w > MIN_CELL:
            h2, w2 = h // 2, w // 2
            stack[:0] = [
                (r, c, h2, w2),
                (r, c + w2, h2, w - w2),
                (r + h2, c, h - h2, w2),
                (r + h2, c + w2, h - h2, w - w2),
            ]
        else:
            leaves.append((r, c, h, w))
    for idx, (r, c, h, w) in enumerate(leaves):
        assignment[r : r + h, c : c + w] = idx
    return assignment


def _majority_labels(assignment: np.ndarray, labels: np.ndarray, count: int) -> np.ndarray:
    sp = assignment.ravel().astype(np.int64)
    lab = labels.ravel().astype(np.int64)
    n_classes = int(lab.max()) + 1
    counts = np.bincount(sp * n_classes + lab, minlength=count * n_classes)
    return counts.reshape(count, n_classes).argmax(axis=1)


def generate_scene(
    template: SceneTemplate,
    catalog: ClassCatalog,
    resolution: tuple[int, int],
    seed,
    scene_id: str = "scene_0000",
    sp_cell: int = 8,
    max_impurity: float = 0.1,
    signature_amplitude: float = SIGNATURE_AMPLITUDE,
) -> Scene:
    """Generate one scene; deterministic for fixed (template, resolution, seed)."""
    height, width = resolution
    if height < 32 or width < 32:
        raise ValueError(f"resolution must be at least 32x32, got {width}x{height}")
    rng = np.random.default_rng(seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed))

    wall, floor, ceiling = (catalog.id_of(n) for n in ("wall", "floor", "ceiling"))
    labels = np.full((height, width), wall, dtype=np.uint16)
    ceil_h = int(round(template.ceiling_frac * height))
    floor_h = max(1, int(round(template.floor_frac * height)))
    if ceil_h:
        labels[:ceil_h, :] = ceiling
    labels[height - floor_h :, :] = floor

    present = {o.name: bool(rng.random() < o.presence) for o in template.objects}
    footprints: dict[str, np.ndarray] = {}
    for spec in template.placement_order():
        if not present[spec.name]:
            continue
        if spec.container is not None and spec.container not in footprints:
            continue  # container absent this draw
        region = footprints.get(spec.container) if spec.container else None
        footprints[spec.name] = _place_object(labels, rng, spec, catalog.id_of(spec.name), region)

    assignment = _refined_grid(labels, sp_cell, max_impurity)
    partition = SuperpixelPartition(assignment)
    dominant = _majority_labels(assignment, labels, partition.count)

    n_appearance = len(catalog) - 1  # one signature channel per non-void class
    feats = np.zeros((partition.count, n_appearance + 3), dtype=np.float64)
    feats[np.arange(partition.count), dominant - 1] = signature_amplitude
    feats[:, :n_appearance] += rng.normal(0.0, template.noise_sigma, size=(partition.count, n_appearance))
    counts = np.bincount(assignment.ravel(), minlength=partition.count).astype(np.float64)
    rows = np.bincount(assignment.ravel(), weights=np.repeat(np.arange(height), width), minlength=partition.count)
    cols = np.bincount(assignment.ravel(), weights=np.tile(np.arange(width), height), minlength=partition.count)
    feats[:, n_appearance] = (cols / counts) / width
    feats[:, n_appearance + 1] = (rows / counts) / height
    feats[:, n_appearance + 2] = counts / (height * width)

    return Scene(
        scene_id=scene_id,
        category=template.category,
        partition=partition,
        labelmap=LabelMap(labels),
        features=feats,
    )


def generate_corpus(
    templates: list[SceneTemplate],
    per_category: int,
    resolution: tuple[int, int],
    seed: int,
    out_dir: str | Path | None = None,
    train_frac: float = 0.4,
    sp_cell: int = 8,
    max_impurity: float = 0.1,
    name: str = "synthetic",
) -> Dataset:
    """Generate per_category scenes for every template; optionally write to disk.

    Splits are drawn per category: round(train_frac * n) scenes go to the
    model-training split ("train"), the rest form the policy pool ("test").
    """
    if per_category < 1:
        raise ValueError("per_category must be >= 1")
    catalog = catalog_for_templates(templates)
    scenes: list[Scene] = []
    train_idx: list[int] = []
    test_idx: list[int] = []
    split_rng = np.random.default_rng(np.random.SeedSequence((seed, 0xA11)))
    index = 0
    for template in templates:
        cat_indices = []
        for k in range(per_category):
            scene = generate_scene(
                template,
                catalog,
                resolution,
                seed=np.random.SeedSequence((seed, index)),
                scene_id=f"{template.category}_{k:04d}",
                sp_cell=sp_cell,
                max_impurity=max_impurity,
            )
            scenes.append(scene)
            cat_indices.append(index)
            index += 1
        order = split_rng.permutation(len(cat_indices))
        n_train = int(round(train_frac * len(cat_indices)))
        train_idx.extend(cat_indices[i] for i in order[:n_train])
        test_idx.extend(cat_indices[i] for i in order[n_train:])
    dataset = Dataset(
        catalog=catalog,
        scenes=tuple(scenes),
        splits={"train": tuple(sorted(train_idx)), "test": tuple(sorted(test_idx))},
        name=name,
    )
    if out_dir is not None:
        write_dataset(dataset, out_dir)
    return dataset


def default_templates(noise_sigma: float = DEFAULT_NOISE_SIGMA) -> list[SceneTemplate]:
    """Nine indoor categories over a shared pool of sixteen object classes."""
    big = (0.06, 0.16)
    mid = (0.02, 0.06)
    small = (0.008, 0.03)
    tiny = (0.006, 0.018)

    def t(category, objects, ceiling=0.12):
        return SceneTemplate(
            category=category,
            objects=tuple(objects),
            ceiling_frac=ceiling,
            noise_sigma=noise_sigma,
        )

    o = ObjectSpec
    return [
        t("bedroom", [
            o("bed", 0.95, big),
            o("pillow", 0.8, tiny, container="bed", shape="ellipse"),
            o("nightstand", 0.7, small),
            o("lamp", 0.6, tiny, shape="ellipse"),
            o("dresser", 0.5, mid),
            o("chair", 0.35, mid),
            o("box", 0.3, small),
            o("books", 0.3, tiny),
            o("cabinet", 0.3, mid),
        ]),
        t("livingroom", [
            o("sofa", 0.95, big),
            o("table", 0.8, mid),
            o("pillow", 0.7, tiny, container="sofa", shape="ellipse"),
            o("chair", 0.6, mid),
            o("lamp", 0.55, tiny, shape="ellipse"),
            o("tv", 0.5, small),
            o("cabinet", 0.45, mid),
            o("books", 0.35, tiny),
            o("box", 0.3, small),
        ]),
        t("kitchen", [
            o("counter", 0.9, big),
            o("cabinet", 0.85, mid),
            o("sink", 0.7, tiny, container="counter", shape="ellipse"),
            o("table", 0.55, mid),
            o("chair", 0.5, mid),
            o("box", 0.4, small),
            o("books", 0.3, tiny),
            o("lamp", 0.3, tiny, shape="ellipse"),
            o("dresser", 0.3, mid),
        ]),
        t("bathroom", [
            o("counter", 0.8, mid),
            o("sink", 0.75, tiny, container="counter", shape="ellipse"),
            o("cabinet", 0.6, mid),
            o("box", 0.35, small),
            o("chair", 0.3, mid),
            o("lamp", 0.3, tiny, shape="ellipse"),
            o("books", 0.25, tiny),
            o("table", 0.25, mid),
            o("dresser", 0.25, mid),
        ], ceiling=0.0),
        t("diningroom", [
            o("table", 0.95, big),
            o("chair", 0.9, mid),
            o("cabinet", 0.5, mid),
            o("lamp", 0.45, tiny, shape="ellipse"),
            o("sofa", 0.3, big),
            o("counter", 0.3, mid),
            o("books", 0.3, tiny),
            o("box", 0.3, small),
            o("tv", 0.25, small),
        ]),
        t("office", [
            o("desk", 0.9, big),
            o("chair", 0.85, mid),
            o("cabinet", 0.55, mid),
            o("box", 0.45, small),
            o("books", 0.45, tiny, container="desk"),
            o("table", 0.4, mid),
            o("bookshelf", 0.4, mid),
            o("lamp", 0.35, tiny, shape="ellipse"),
            o("tv", 0.25, small),
        ]),
        t("homeoffice", [
            o("desk", 0.9, big),
            o("chair", 0.8, mid),
            o("bookshelf", 0.6, mid),
            o("books", 0.6, tiny, container="bookshelf"),
            o("table", 0.4, mid),
            o("cabinet", 0.4, mid),
            o("lamp", 0.4, tiny, shape="ellipse"),
            o("sofa", 0.3, big),
            o("box", 0.3, small),
        ]),
        t("bookstore", [
            o("bookshelf", 0.95, big),
            o("books", 0.9, tiny, container="bookshelf"),
            o("table", 0.5, mid),
            o("cabinet", 0.45, mid),
            o("box", 0.4, small),
            o("desk", 0.35, mid),
            o("chair", 0.35, mid),
            o("lamp", 0.3, tiny, shape="ellipse"),
            o("counter", 0.3, mid),
        ]),
        t("classroom", [
            o("chair", 0.9, mid),
            o("table", 0.85, big),
            o("desk", 0.6, mid),
            o("cabinet", 0.5, mid),
            o("books", 0.4, tiny),
            o("box", 0.4, small),
            o("bookshelf", 0.35, mid),
            o("tv", 0.3, small),
            o("counter", 0.25, mid),
        ]),
    ]
