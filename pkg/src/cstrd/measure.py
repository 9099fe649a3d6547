"""Dendrometric quantities: ring areas, equivalent radii, cardinal widths, calibration."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import AllZeroPx, EmptyData, InputError, NonNestedRings, RingMissesRay
from .spider import Ring, SpiderWeb, polygon_radii

# image y points down, so "north" (up) is 270 degrees from +x
CARDINAL_ANGLES = {"E": 0.0, "S": 0.5 * math.pi, "W": math.pi, "N": 1.5 * math.pi}


def shoelace(points) -> float:
    """Absolute area of a closed polygon given as (n, 2) vertices."""
    p = np.asarray(points, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return float(0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def ring_area(ring: Ring, web: Optional[SpiderWeb] = None) -> float:
    """Area of the polygon through the ring's nodes, in px^2."""
    if web is not None and ring.web.nb_rays != web.nb_rays:
        raise InputError("ring was sampled on a different web")
    return shoelace(ring.polygon)


@dataclass
class GrowthSeries:
    area: np.ndarray        # px^2, innermost first
    r_eq: np.ndarray        # px
    delta_r_eq: np.ndarray  # px; first entry measured from the pith
    mm_per_px: Optional[float] = None

    def __len__(self):
        return len(self.area)

    def calibrated(self, mm_per_px: float) -> "GrowthSeries":
        return GrowthSeries(self.area, self.r_eq, self.delta_r_eq, float(mm_per_px))

    def rows(self) -> list[dict]:
        out = []
        for i in range(len(self)):
            row = {"ring_index": i + 1, "area_px2": float(self.area[i]),
                   "r_eq_px": float(self.r_eq[i]), "delta_r_eq_px": float(self.delta_r_eq[i])}
            if self.mm_per_px is not None:
                m = self.mm_per_px
                row.update(area_mm2=float(self.area[i]) * m * m,
                           r_eq_mm=float(self.r_eq[i]) * m,
                           delta_r_eq_mm=float(self.delta_r_eq[i]) * m)
            out.append(row)
        return out

    def to_csv(self) -> str:
        cols = ["ring_index", "area_px2", "r_eq_px", "delta_r_eq_px"]
        if self.mm_per_px is not None:
            cols += ["area_mm2", "r_eq_mm", "delta_r_eq_mm"]
        return _csv_text(cols, self.rows())


def _csv_text(cols, rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()


def _check_nested(rings: Sequence[Ring]):
    for k in range(1, len(rings)):
        a, b = rings[k - 1].radii, rings[k].radii
        if a.shape != b.shape:
            raise InputError("rings sampled on different webs")
        if not (b > a).all():
            raise NonNestedRings(f"ring {k + 1} is not strictly outside ring {k}")


def equivalent_series(rings: Sequence[Ring], web: Optional[SpiderWeb] = None) -> GrowthSeries:
    """Equivalent-disk radius of every ring and its yearly increment.

    Rings are ordered by mean radius and must be strictly nested on every
    ray.
    """
    rings = sorted(rings, key=lambda r: r.mean_radius)
    _check_nested(rings)
    area = np.array([ring_area(r, web) for r in rings], dtype=float)
    r_eq = np.sqrt(area / math.pi)
    delta = np.diff(r_eq, prepend=0.0)
    return GrowthSeries(area, r_eq, delta)


def cardinal_widths(rings: Sequence[Ring], web: Optional[SpiderWeb] = None,
                    directions: Sequence[str] = ("N", "S", "E", "W")) -> dict[str, np.ndarray]:
    """Distance from the pith to each ring along the cardinal directions.

    Values are cumulative radii ordered from the pith outwards; ring widths
    are their consecutive differences (see :func:`widths_from_radii`).
    """
    rings = sorted(rings, key=lambda r: r.mean_radius)
    out = {}
    for name in directions:
        key = name.upper()
        if key not in CARDINAL_ANGLES:
            raise InputError(f"unknown direction {name!r}")
        ang = np.array([CARDINAL_ANGLES[key]])
        vals = []
        for k, r in enumerate(rings):
            v = polygon_radii(r.polygon, web or r.web, ang)[0]
            if not np.isfinite(v):
                raise RingMissesRay(f"ring {k + 1} does not cross the {key} ray")
            vals.append(float(v))
        out[key] = np.asarray(vals)
    return out


def widths_from_radii(radii) -> np.ndarray:
    return np.diff(np.asarray(radii, dtype=float), prepend=0.0)


def cardinal_csv(widths: Mapping[str, np.ndarray]) -> str:
    dirs = list(widths)
    n = len(next(iter(widths.values()))) if widths else 0
    cols = ["ring_index"] + [f"{d}_radius_px" for d in dirs] + [f"{d}_width_px" for d in dirs]
    rows = []
    w = {d: widths_from_radii(widths[d]) for d in dirs}
    for i in range(n):
        row = {"ring_index": i + 1}
        row.update({f"{d}_radius_px": float(widths[d][i]) for d in dirs})
        row.update({f"{d}_width_px": float(w[d][i]) for d in dirs})
        rows.append(row)
    return _csv_text(cols, rows)


# ------------------------------------------------------------ calibration

@dataclass(frozen=True)
class CalibrationFit:
    m: float              # mm per px
    residual_rms: float   # mm
    n_points: int


def calibrate(px_measures: Sequence[float], mm_measures: Sequence[float]) -> CalibrationFit:
    """Least-squares slope through the origin of mm against px."""
    x = np.asarray(px_measures, dtype=float).ravel()
    y = np.asarray(mm_measures, dtype=float).ravel()
    if len(x) == 0:
        raise EmptyData("no calibration points")
    if len(x) != len(y):
        raise InputError(f"{len(x)} px values vs {len(y)} mm values")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise InputError("calibration data must be finite")
    if (x < 0).any():
        raise InputError("px measures must be non-negative")
    sxx = float(np.dot(x, x))
    if sxx == 0:
        raise AllZeroPx("all px measures are zero")
    m = float(np.dot(x, y)) / sxx
    res = y - m * x
    return CalibrationFit(m, float(np.sqrt(np.mean(res ** 2))), len(x))


def calibrate_directions(data: Mapping[str, tuple[Sequence[float], Sequence[float]]]
                         ) -> dict[str, CalibrationFit]:
    """One fit per direction plus ``"combined"`` over all points pooled."""
    out = {k: calibrate(px, mm) for k, (px, mm) in data.items()}
    px = np.concatenate([np.asarray(v[0], dtype=float) for v in data.values()]) if data else []
    mm = np.concatenate([np.asarray(v[1], dtype=float) for v in data.values()]) if data else []
    out["combined"] = calibrate(px, mm)
    return out
