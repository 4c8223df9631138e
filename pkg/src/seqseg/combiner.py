"""Sequential composition of binary masks onto a single label canvas.

Masks are placed one at a time. Unassigned pixels under a mask are claimed
outright; where the incoming mask overlaps an existing segment's surviving
pixels, the contested region C goes to whichever segment has the larger
C/original-area ratio, i.e. the smaller original segment wins (a pillow can
sit on top of a bed). Exact ratio ties keep the existing label.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .scene import BinaryMask, ClassCatalog


@dataclass(frozen=True)
class PlacedSegment:
    """Registry entry for one placement step."""

    class_id: int
    original_area: int


class LabelCanvas:
    """Evolving multi-class pixel assignment; 0 means unassigned.

    ``provenance`` records, per pixel, the index of the placement step that
    currently owns it (-1 while unassigned), so each placed segment's
    surviving pixel set is recoverable as ``provenance == step``.
    """

    def __init__(self, assignment: np.ndarray, provenance: np.ndarray, segments: list[PlacedSegment]):
        self.assignment = assignment
        self.provenance = provenance
        self.segments = segments

    @classmethod
    def blank(cls, height: int, width: int) -> "LabelCanvas":
        return cls(
            assignment=np.zeros((height, width), dtype=np.uint16),
            provenance=np.full((height, width), -1, dtype=np.int32),
            segments=[],
        )

    @property
    def height(self) -> int:
        return self.assignment.shape[0]

    @property
    def width(self) -> int:
        return self.assignment.shape[1]

    def copy(self) -> "LabelCanvas":
        return LabelCanvas(self.assignment.copy(), self.provenance.copy(), list(self.segments))

    def surviving(self, step: int) -> np.ndarray:
        return self.provenance == step

    def pixels_of_class(self, class_id: int) -> np.ndarray:
        return self.assignment == class_id


def place_mask(canvas: LabelCanvas, mask: BinaryMask, class_id: int) -> LabelCanvas:
    """Place one mask and resolve overlaps; returns a new canvas.

    The contested region against each existing segment is decided by comparing
    C/|existing| with C/|incoming| using original (pre-clipping) areas; the
    larger ratio wins and ties keep the existing label.
    """
    if mask.bits.shape != canvas.assignment.shape:
        raise ValueError(
            f"mask dimensions {mask.bits.shape} do not match canvas {canvas.assignment.shape}"
        )
    out = canvas.copy()
    bits = mask.bits
    incoming_area = mask.area
    step = len(out.segments)

    claim = bits & (out.assignment == 0)
    for prev_step, segment in enumerate(out.segments):
        contested = bits & (out.provenance == prev_step)
        n = int(contested.sum())
        if n == 0:
            continue
        ratio_existing = n / segment.original_area
        ratio_incoming = n / incoming_area
        if ratio_incoming > ratio_existing:
            claim |= contested
    out.assignment[claim] = class_id
    out.provenance[claim] = step
    out.segments.append(PlacedSegment(class_id=class_id, original_area=incoming_area))
    return out


def compose_backgrounds(
    background_masks: Mapping[int, BinaryMask],
    catalog: ClassCatalog,
    height: int,
    width: int,
) -> LabelCanvas:
    """Fixed prelude: wall, floor, ceiling placed in that order."""
    canvas = LabelCanvas.blank(height, width)
    for bg_id in catalog.background_ids:
        canvas = place_mask(canvas, background_masks[bg_id], bg_id)
    return canvas


def combine_sequence(
    object_masks: Mapping[int, BinaryMask],
    background_masks: Mapping[int, BinaryMask],
    object_order: Sequence[int],
    catalog: ClassCatalog,
) -> LabelCanvas:
    """Compose backgrounds then objects in the given order."""
    order = list(object_order)
    if len(set(order)) != len(order):
        raise ValueError(f"object order contains duplicates: {order}")
    bad = [i for i in order if i in catalog.background_ids or i == 0]
    if bad:
        raise ValueError(f"object order contains background/void ids: {bad}")
    shapes = {m.bits.shape for m in object_masks.values()} | {m.bits.shape for m in background_masks.values()}
    if len(shapes) > 1:
        raise ValueError(f"masks have mismatched dimensions: {sorted(shapes)}")
    height, width = next(iter(shapes))
    canvas = compose_backgrounds(background_masks, catalog, height, width)
    for class_id in order:
        canvas = place_mask(canvas, object_masks[class_id], class_id)
    return canvas
