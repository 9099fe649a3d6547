"""Detection scoring: influence areas, assignment, precision/recall and RMSE.

Every curve is compared through its radii on the rays of one spider web, so
a detection and a ground-truth ring are two arrays of ``nb_rays`` radii.
"""
from __future__ import annotations

import math
from decimal import ROUND_HALF_UP, Decimal
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .annotation_io import RingShape
from .errors import (
    CenterOutsidePolygon,
    CrossingGTRings,
    InputError,
    RingCountMismatch,
    UndefinedScore,
)
from .spider import Ring, SpiderWeb, _point_in_polygon, polygon_radii

DEFAULT_TH = 0.6


def _radii(r) -> np.ndarray:
    return np.asarray(r.radii if isinstance(r, Ring) else r, dtype=float)


def sample_polygon_on_rays(shape: Union[RingShape, np.ndarray], web: SpiderWeb,
                           source: str = "ground_truth") -> Ring:
    """Radius of the outermost polygon crossing on every ray of ``web``."""
    pts = np.asarray(shape.points if isinstance(shape, RingShape) else shape, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise InputError("polygon needs at least 3 (x, y) points")
    if not _point_in_polygon(web.center, pts):
        raise CenterOutsidePolygon(f"center {web.center} is not inside the polygon")
    radii = polygon_radii(pts, web)
    if np.isnan(radii).any():  # pragma: no cover - impossible with the center inside
        raise CenterOutsidePolygon("some ray misses the polygon")
    return Ring(web, radii, source)


def border_distance(web: SpiderWeb, width: float, height: float) -> np.ndarray:
    """Distance along each ray from the center to the image border."""
    cx, cy = web.center
    d = web.directions
    with np.errstate(divide="ignore"):
        tx = np.where(d[:, 0] > 0, (width - cx) / d[:, 0],
                      np.where(d[:, 0] < 0, -cx / d[:, 0], np.inf))
        ty = np.where(d[:, 1] > 0, (height - cy) / d[:, 1],
                      np.where(d[:, 1] < 0, -cy / d[:, 1], np.inf))
    return np.minimum(tx, ty)


@dataclass
class InfluenceMap:
    """Per-ray bands: band ``k`` is ``[lower[k, i], upper[k, i])`` on ray ``i``.

    Rows follow increasing radius; ``order[k]`` is the index of that ring in
    the list the map was built from.
    """
    radii: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    order: np.ndarray

    def labels(self, radii) -> np.ndarray:
        """Ground-truth index whose band holds each node; -1 outside all bands."""
        r = _radii(radii)
        if len(self.radii) == 0:
            return np.full(r.shape, -1)
        inside = (self.lower <= r[None]) & (r[None] < self.upper)
        hit = inside.any(axis=0)
        k = inside.argmax(axis=0)
        return np.where(hit, self.order[k], -1)


def build_influence_map(gt: Sequence, web: SpiderWeb, section_bound=None) -> InfluenceMap:
    """Bands bounded by midpoints between consecutive ground-truth rings.

    The innermost band starts at the center. The outermost ends at
    ``section_bound`` (scalar or per-ray array); infinity when omitted.
    """
    nr = web.nb_rays
    if len(gt) == 0:
        e = np.empty((0, nr))
        return InfluenceMap(e, e, e, np.empty(0, dtype=int))
    radii = np.vstack([_radii(g) for g in gt])
    if radii.shape[1] != nr:
        raise InputError(f"rings must have {nr} radii")
    order = np.argsort(radii.mean(axis=1), kind="stable")
    radii = radii[order]
    if len(radii) > 1 and not (np.diff(radii, axis=0) > 0).all():
        k, i = np.argwhere(np.diff(radii, axis=0) <= 0)[0]
        raise CrossingGTRings(f"ground-truth rings {order[k]} and {order[k + 1]} "
                              f"are not ordered on ray {i}")
    bound = np.broadcast_to(np.inf if section_bound is None else
                            np.asarray(section_bound, dtype=float), (nr,))
    mids = (radii[1:] + radii[:-1]) / 2.0
    lower = np.vstack([np.zeros((1, nr)), mids])
    upper = np.vstack([mids, bound[None, :]])
    return InfluenceMap(radii, lower, upper, order)


@dataclass
class Assignment:
    matches: list[tuple[int, int]]     # (detection index, gt index), sorted by gt
    false_positives: list[int]
    false_negatives: list[int]
    rmse: dict[tuple[int, int], float] = field(default_factory=dict)

    @property
    def tp(self) -> int:
        return len(self.matches)

    @property
    def fp(self) -> int:
        return len(self.false_positives)

    @property
    def fn(self) -> int:
        return len(self.false_negatives)


def rmse(d, g) -> float:
    """Root mean square radial difference over all rays."""
    a, b = _radii(d), _radii(g)
    if a.shape != b.shape:
        raise InputError(f"radii shapes differ: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def eligibility(detections: Sequence, gt: Sequence, web: SpiderWeb, th: float = DEFAULT_TH,
                section_bound=None, imap: Optional[InfluenceMap] = None) -> np.ndarray:
    """Boolean (n_det, n_gt): more than ``th * nb_rays`` nodes in the gt band."""
    if imap is None:
        imap = build_influence_map(gt, web, section_bound)
    out = np.zeros((len(detections), len(gt)), dtype=bool)
    need = th * web.nb_rays
    for j, d in enumerate(detections):
        lab = imap.labels(d)
        counts = np.bincount(lab[lab >= 0], minlength=len(gt))
        out[j] = counts > need
    return out


def assign(detections: Sequence, gt: Sequence, web: SpiderWeb, th: float = DEFAULT_TH,
           section_bound=None) -> Assignment:
    """Pair detections with ground-truth rings.

    A detection can only take a ring whose band holds more than
    ``th * nb_rays`` of its nodes. Each ring keeps the closest eligible
    detection (smallest RMSE); pairs are fixed in increasing RMSE order so a
    detection claimed by two rings goes to the one it is closest to.
    """
    if not 0 < th <= 1:
        raise InputError("th must be in (0, 1]")
    ok = eligibility(detections, gt, web, th, section_bound)
    pairs = []
    for j, g in np.argwhere(ok):
        pairs.append((rmse(detections[j], gt[g]), int(j), int(g)))
    pairs.sort()
    used_d, used_g = set(), set()
    matches, errs = [], {}
    for e, j, g in pairs:
        if j in used_d or g in used_g:
            continue
        used_d.add(j)
        used_g.add(g)
        matches.append((j, g))
        errs[(j, g)] = e
    matches.sort(key=lambda m: m[1])
    fp = [j for j in range(len(detections)) if j not in used_d]
    fn = [g for g in range(len(gt)) if g not in used_g]
    return Assignment(matches, fp, fn, errs)


@dataclass
class EvalReport:
    TP: int
    FP: int
    FN: int
    precision: Optional[float]
    recall: Optional[float]
    fscore: Optional[float]
    rmse_per_ring: list = field(default_factory=list)   # per gt ring, None when missed
    rmse_overall: Optional[float] = None
    exec_time: Optional[float] = None

    def summary(self) -> str:
        def f(v):
            return "NA" if v is None else _two_decimals(v)
        return (f"F1-score: {f(self.fscore)} Precision: {f(self.precision)} "
                f"Recall: {f(self.recall)} RMSE: {f(self.rmse_overall)}")


def _two_decimals(v: float) -> str:
    """Round to 3 decimals, then half-up to 2 (0.9048 -> 0.905 -> 0.91).

    Reference score sheets are rounded this way; a single rounding would
    print 0.90 for 19 of 21 rings.
    """
    d = Decimal(f"{v:.3f}").quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)
    return f"{d:.2f}"


def prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """Precision, recall and F-score; undefined ratios raise UndefinedScore."""
    if min(tp, fp, fn) < 0:
        raise InputError("counts must be non-negative")
    if tp + fp == 0:
        raise UndefinedScore("precision undefined: no detections")
    if tp + fn == 0:
        raise UndefinedScore("recall undefined: no ground truth")
    p = tp / (tp + fp)
    r = tp / (tp + fn)
    f = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return p, r, f


def score(assignment, rmse_values=None, exec_time: Optional[float] = None,
          allow_undefined: bool = False) -> EvalReport:
    """Build an :class:`EvalReport`.

    ``assignment`` is an :class:`Assignment` or a ``(TP, FP, FN)`` triple.
    ``rmse_values`` maps gt index to RMSE (defaults to the assignment's own);
    with ``allow_undefined`` a missing ratio is reported as None instead of
    raising.
    """
    if isinstance(assignment, Assignment):
        tp, fp, fn = assignment.tp, assignment.fp, assignment.fn
        n_gt = tp + fn
        if rmse_values is None:
            rmse_values = {g: assignment.rmse[(j, g)] for j, g in assignment.matches}
    else:
        tp, fp, fn = (int(v) for v in assignment)
        n_gt = tp + fn
    if rmse_values is None:
        rmse_values = {}
    elif not isinstance(rmse_values, dict):
        rmse_values = dict(enumerate(rmse_values))
    try:
        p, r, f = prf(tp, fp, fn)
    except UndefinedScore:
        if not allow_undefined:
            raise
        p = tp / (tp + fp) if tp + fp else None
        r = tp / (tp + fn) if tp + fn else None
        f = None
    per_ring = [rmse_values.get(g) for g in range(n_gt)] if isinstance(assignment, Assignment) \
        else list(rmse_values.values())
    vals = [v for v in rmse_values.values() if v is not None]
    overall = float(np.mean(vals)) if vals else None
    return EvalReport(tp, fp, fn, p, r, f, per_ring, overall, exec_time)


def evaluate(detections: Sequence, gt: Sequence, web: SpiderWeb, th: float = DEFAULT_TH,
             section_bound=None, exec_time: Optional[float] = None):
    """Assignment plus report in one call; undefined ratios come back as None."""
    a = assign(detections, gt, web, th, section_bound)
    return a, score(a, exec_time=exec_time, allow_undefined=True)


def signed_errors(detection, gt_ring) -> np.ndarray:
    """Per-ray detection minus ground truth: negative means the node lies inward."""
    return _radii(detection) - _radii(gt_ring)


# --------------------------------------------------------------- experts

def _radial_order(rings: Sequence) -> list:
    return sorted(rings, key=lambda r: float(_radii(r).mean()))


def consensus_gt(expert_annotations: Sequence[Sequence], web: SpiderWeb) -> list[Ring]:
    """Per-ray mean of each ring across experts, rings matched by radial order."""
    if len(expert_annotations) == 0:
        raise InputError("need at least one expert")
    counts = {len(e) for e in expert_annotations}
    if len(counts) != 1:
        raise RingCountMismatch(f"experts traced different ring counts: {sorted(counts)}")
    ordered = [_radial_order(e) for e in expert_annotations]
    out = []
    for k in range(counts.pop()):
        stack = np.vstack([_radii(e[k]) for e in ordered])
        out.append(Ring(web, stack.mean(axis=0), "ground_truth"))
    return out


def expert_rms(expert: Sequence, consensus: Sequence) -> float:
    """RMS of per-node radial differences pooled over all rings."""
    if len(expert) != len(consensus):
        raise RingCountMismatch(f"{len(expert)} rings vs {len(consensus)} in consensus")
    if len(expert) == 0:
        raise InputError("no rings to compare")
    a = _radial_order(expert)
    b = _radial_order(consensus)
    d = np.concatenate([_radii(x) - _radii(y) for x, y in zip(a, b)])
    return float(math.sqrt(np.mean(d ** 2)))
