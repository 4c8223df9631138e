"""Dataset persistence: manifest JSON, 16-bit PGM rasters, feature CSVs.

Wire formats
------------
- Label and superpixel maps: binary PGM ("P5"), maxval 65535, big-endian
  16-bit samples, row-major.
- Features: CSV with header ``spid,f0,...,f{F-1}``, one row per superpixel.
- Manifest: JSON with fields name, classes, background, scenes, splits; all
  file paths are relative to the manifest's directory.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .scene import ClassCatalog, Dataset, LabelMap, Scene, SuperpixelPartition

PGM_MAXVAL = 65535


class DataFormatError(ValueError):
    """Raised when an on-disk artifact does not conform to the wire format."""


def write_pgm(path: str | Path, grid: np.ndarray) -> None:
    """Write a 2-D nonnegative integer grid as 16-bit big-endian PGM."""
    a = np.asarray(grid)
    if a.ndim != 2:
        raise ValueError(f"PGM grid must be 2-D, got shape {a.shape}")
    if a.min() < 0 or a.max() > PGM_MAXVAL:
        raise ValueError("PGM samples must lie in [0, 65535]")
    header = f"P5\n{a.shape[1]} {a.shape[0]}\n{PGM_MAXVAL}\n".encode("ascii")
    payload = a.astype(">u2").tobytes()
    atomic_write_bytes(path, header + payload)


def read_pgm(path: str | Path) -> np.ndarray:
    """Read a 16-bit big-endian PGM written by :func:`write_pgm`.

    Accepts standard P5 headers with comments. Errors carry the file path and
    the byte offset where parsing failed.
    """
    path = Path(path)
    data = path.read_bytes()

    def fail(offset: int, why: str):
        raise DataFormatError(f"{path}: malformed header at byte {offset}: {why}")

    pos = 0

    def next_token() -> tuple[bytes, int]:
        nonlocal pos
        while pos < len(data):
            c = data[pos : pos + 1]
            if c == b"#":
                while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            elif c.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            fail(start, "unexpected end of header")
        return data[start:pos], start

    magic, off = next_token()
    if magic != b"P5":
        fail(off, f"expected magic 'P5', got {magic!r}")
    fields = []
    for name in ("width", "height", "maxval"):
        tok, off = next_token()
        if not tok.isdigit():
            fail(off, f"{name} is not an integer: {tok!r}")
        fields.append(int(tok))
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        fail(off, f"dimensions must be positive, got {width}x{height}")
    if maxval != PGM_MAXVAL:
        fail(off, f"expected maxval {PGM_MAXVAL}, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    expected = width * height * 2
    if len(data) - pos != expected:
        raise DataFormatError(
            f"{path}: payload at byte {pos} has {len(data) - pos} bytes, expected {expected}"
        )
    return np.frombuffer(data, dtype=">u2", offset=pos).reshape(height, width).astype(np.uint16)


def write_features_csv(path: str | Path, features: np.ndarray) -> None:
    features = np.asarray(features, dtype=np.float64)
    lines = ["spid," + ",".join(f"f{j}" for j in range(features.shape[1]))]
    for i, row in enumerate(features):
        lines.append(f"{i}," + ",".join(repr(float(v)) for v in row))
    atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("ascii"))


def read_features_csv(path: str | Path, expected_rows: int | None = None) -> np.ndarray:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty features file") from None
        n_feat = len(header) - 1
        if header[0] != "spid" or header[1:] != [f"f{j}" for j in range(n_feat)]:
            raise DataFormatError(f"{path}: malformed header {header[:4]}...")
        rows = []
        for lineno, row in enumerate(reader):
            if len(row) != n_feat + 1:
                raise DataFormatError(f"{path}: row {lineno} has {len(row)} fields, expected {n_feat + 1}")
            if int(row[0]) != lineno:
                raise DataFormatError(f"{path}: row {lineno} has spid {row[0]}, expected {lineno}")
            rows.append([float(v) for v in row[1:]])
    feats = np.asarray(rows, dtype=np.float64).reshape(len(rows), n_feat)
    if expected_rows is not None and len(rows) != expected_rows:
        raise DataFormatError(f"{path}: {len(rows)} feature rows, expected {expected_rows}")
    return feats


def load_dataset(manifest_path: str | Path) -> Dataset:
    """Load a dataset manifest and all referenced maps and features.

    Every scene-model invariant is verified during the load; violations raise
    :class:`DataFormatError` naming the offending file.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise FileNotFoundError(f"manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise DataFormatError(f"{manifest_path}: invalid JSON: {e}") from e
    base = manifest_path.parent

    for key in ("name", "classes", "background", "scenes", "splits"):
        if key not in manifest:
            raise DataFormatError(f"{manifest_path}: missing manifest field {key!r}")
    catalog = ClassCatalog(names=tuple(manifest["classes"]), background_names=tuple(manifest["background"]))

    scenes = []
    for entry in manifest["scenes"]:
        label_path = base / entry["labelmap"]
        sp_path = base / entry["superpixels"]
        feat_path = base / entry["features"]
        for p in (label_path, sp_path, feat_path):
            if not p.exists():
                raise FileNotFoundError(f"scene {entry['id']}: missing file {p}")
        labelmap = LabelMap(read_pgm(label_path))
        try:
            labelmap.validate_against(len(catalog))
        except ValueError as e:
            raise DataFormatError(f"{label_path}: {e}") from e
        try:
            partition = SuperpixelPartition(read_pgm(sp_path).astype(np.int32))
        except ValueError as e:
            raise DataFormatError(f"{sp_path}: {e}") from e
        if partition.assignment.shape != labelmap.labels.shape:
            raise DataFormatError(
                f"{sp_path}: dimension mismatch: superpixels {partition.assignment.shape} "
                f"vs labels {labelmap.labels.shape}"
            )
        features = read_features_csv(feat_path, expected_rows=partition.count)
        scenes.append(
            Scene(
                scene_id=str(entry["id"]),
                category=str(entry["category"]),
                partition=partition,
                labelmap=labelmap,
                features=features,
            )
        )

    splits = {k: tuple(int(i) for i in v) for k, v in manifest["splits"].items()}
    return Dataset(catalog=catalog, scenes=tuple(scenes), splits=splits, name=str(manifest["name"]))


def write_dataset(dataset: Dataset, out_dir: str | Path) -> Path:
    """Write manifest + maps + features under ``out_dir``; returns the manifest path."""
    out_dir = Path(out_dir)
    (out_dir / "maps").mkdir(parents=True, exist_ok=True)
    entries = []
    for scene in dataset.scenes:
        label_rel = f"maps/{scene.scene_id}_labels.pgm"
        sp_rel = f"maps/{scene.scene_id}_superpixels.pgm"
        feat_rel = f"maps/{scene.scene_id}_features.csv"
        write_pgm(out_dir / label_rel, scene.labelmap.labels)
        write_pgm(out_dir / sp_rel, scene.partition.assignment)
        write_features_csv(out_dir / feat_rel, scene.features)
        entries.append(
            {
                "id": scene.scene_id,
                "category": scene.category,
                "labelmap": label_rel,
                "superpixels": sp_rel,
                "features": feat_rel,
            }
        )
    manifest = {
        "name": dataset.name,
        "classes": list(dataset.catalog.names),
        "background": list(dataset.catalog.background_names),
        "scenes": entries,
        "splits": {k: list(v) for k, v in dataset.splits.items()},
    }
    manifest_path = out_dir / "manifest.json"
    atomic_write_bytes(manifest_path, (json.dumps(manifest, indent=2) + "\n").encode("ascii"))
    return manifest_path


def atomic_write_bytes(path: str | Path, payload: bytes) -> None:
    """Write via a temp file + rename so readers never observe partial output."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))
