"""Polygon-JSON ring annotations (Labelme layout) and the pith CSV.

Coordinates are always ``(x, y)`` with ``x`` along image columns and ``y``
along image rows. Nothing in this module transposes them.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Sequence

from .errors import (
    DegenerateRing,
    DuplicateName,
    IOFailure,
    InputError,
    MalformedPoint,
    MalformedRow,
    MissingShapesKey,
)

ANNOTATION_VERSION = "5.0.1"


@dataclass
class RingShape:
    points: list[tuple[float, float]]
    label: Optional[str] = None

    def __post_init__(self):
        self.points = [(float(x), float(y)) for x, y in self.points]


@dataclass
class AnnotationFile:
    shapes: list[RingShape]
    imagePath: Optional[str] = None
    imageHeight: Optional[int] = None
    imageWidth: Optional[int] = None
    version: Optional[str] = None
    flags: dict = field(default_factory=dict)
    imageData: Optional[str] = None


@dataclass(frozen=True)
class PithRecord:
    section_name: str
    cx: float
    cy: float


def _parse_point(raw: Any, shape_idx: int, pt_idx: int) -> tuple[float, float]:
    where = f"shape {shape_idx}, point {pt_idx}"
    if not isinstance(raw, (list, tuple)) or len(raw) != 2:
        raise MalformedPoint(f"{where}: expected [x, y], got {raw!r}")
    out = []
    for v in raw:
        # bool is an int subclass; reject it explicitly
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise MalformedPoint(f"{where}: non-numeric coordinate {v!r}")
        if not math.isfinite(v):
            raise MalformedPoint(f"{where}: non-finite coordinate {v!r}")
        out.append(float(v))
    return out[0], out[1]


def parse_annotation(data: Any) -> AnnotationFile:
    """Build an :class:`AnnotationFile` from already-decoded JSON."""
    if not isinstance(data, dict) or "shapes" not in data:
        raise MissingShapesKey("annotation has no 'shapes' key")
    raw_shapes = data["shapes"]
    if not isinstance(raw_shapes, list):
        raise InputError("'shapes' must be a list")
    shapes = []
    for i, s in enumerate(raw_shapes):
        if not isinstance(s, dict) or "points" not in s:
            raise MalformedPoint(f"shape {i} has no 'points'")
        if not isinstance(s["points"], list):
            raise MalformedPoint(f"shape {i}: 'points' must be a list")
        pts = [_parse_point(p, i, j) for j, p in enumerate(s["points"])]
        label = s.get("label")
        shapes.append(RingShape(points=pts, label=None if label is None else str(label)))

    def _opt_int(key):
        v = data.get(key)
        return None if v is None else int(v)

    return AnnotationFile(
        shapes=shapes,
        imagePath=data.get("imagePath"),
        imageHeight=_opt_int("imageHeight"),
        imageWidth=_opt_int("imageWidth"),
        version=data.get("version"),
        flags=dict(data.get("flags") or {}),
        imageData=data.get("imageData"),
    )


def load_annotation(path: str | os.PathLike) -> AnnotationFile:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise IOFailure(f"cannot read annotation {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc
    return parse_annotation(data)


def save_annotation(
    rings: Sequence[RingShape],
    image_path: Optional[str] = None,
    image_height: Optional[int] = None,
    image_width: Optional[int] = None,
    flags: Optional[dict] = None,
) -> bytes:
    """Serialize rings to annotation JSON bytes.

    Floats are written with Python's shortest round-trip repr, so
    ``load_annotation`` recovers the exact same values.
    """
    shapes = []
    for i, ring in enumerate(rings):
        if len(ring.points) < 3:
            raise DegenerateRing(f"ring {i} has {len(ring.points)} points, need >= 3")
        shapes.append({
            "label": ring.label if ring.label is not None else str(i + 1),
            "points": [[float(x), float(y)] for x, y in ring.points],
        })
    doc = {
        "imagePath": image_path,
        "imageHeight": None if image_height is None else int(image_height),
        "imageWidth": None if image_width is None else int(image_width),
        "version": ANNOTATION_VERSION,
        "flags": dict(flags or {}),
        "imageData": None,
        "shapes": shapes,
    }
    return json.dumps(doc, indent=1).encode("utf-8")


def write_annotation(path: str | os.PathLike, rings: Sequence[RingShape], **meta) -> None:
    payload = save_annotation(rings, **meta)
    try:
        with open(path, "wb") as fh:
            fh.write(payload)
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc


def parse_pith_csv(text: str) -> dict[str, PithRecord]:
    """Parse ``name,cx,cy`` rows (header line required, comma-delimited)."""
    reader = csv.reader(io.StringIO(text))
    records: dict[str, PithRecord] = {}
    header_seen = False
    for lineno, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if not header_seen:
            header_seen = True
            continue
        if len(row) != 3:
            raise MalformedRow(f"line {lineno}: expected 3 fields, got {len(row)}")
        name = row[0]
        try:
            cx, cy = float(row[1]), float(row[2])
        except ValueError as exc:
            raise MalformedRow(f"line {lineno}: non-numeric coordinate") from exc
        if not (math.isfinite(cx) and math.isfinite(cy)) or cx < 0 or cy < 0:
            raise MalformedRow(f"line {lineno}: coordinates must be finite and >= 0")
        if name in records:
            raise DuplicateName(f"line {lineno}: duplicate section name {name!r}")
        records[name] = PithRecord(name, cx, cy)
    return records


def load_pith_csv(path: str | os.PathLike) -> dict[str, PithRecord]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise IOFailure(f"cannot read pith CSV {path}: {exc}") from exc
    return parse_pith_csv(text)


def shapes_from_points(polygons: Iterable[Sequence[Sequence[float]]]) -> list[RingShape]:
    return [RingShape(points=[(p[0], p[1]) for p in poly], label=str(i + 1))
            for i, poly in enumerate(polygons)]
