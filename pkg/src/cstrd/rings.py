"""Ring detection: gradient filtering, chain connection and ring closing."""
from __future__ import annotations

import heapq
import logging
import time
from dataclasses import dataclass, field, fields, replace
from typing import Optional, Sequence

import numpy as np

from . import raster
from .edges import EdgeChain, detect_edges
from .errors import ChainTooShort, InputError, MissingSupportNode
from .spider import (
    INWARD,
    OUTWARD,
    Chain,
    RayIndex,
    Ring,
    SpiderWeb,
    chains_intersect,
    interpolate_gap,
    interpolate_radii,
    polygon_radii,
    sample_chains,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DetectParams:
    sigma: float = 3.0
    nb_rays: int = 360
    angle_tol_deg: float = 30.0
    th_rt: float = 2.0
    th_ds: float = 2.0
    th_rd: float = 2.0
    n_nodes: int = 20
    relax_iters: int = 3
    relax_factor: float = 1.5
    th_ds_step: float = 0.5
    min_chain_nodes: int = 2
    min_ring_coverage: float = 0.9
    low_th: Optional[float] = None
    high_th: Optional[float] = None
    target_size: int = 1500

    def __post_init__(self):
        for name in ("sigma", "angle_tol_deg", "th_rt", "th_ds", "th_rd"):
            if not getattr(self, name) > 0:
                raise InputError(f"{name} must be > 0")
        if self.relax_factor < 1:
            raise InputError("relax_factor must be >= 1")
        if not 0 < self.min_ring_coverage <= 1:
            raise InputError("min_ring_coverage must be in (0, 1]")
        if self.n_nodes < 1 or self.relax_iters < 1 or self.min_chain_nodes < 1:
            raise InputError("n_nodes, relax_iters and min_chain_nodes must be >= 1")

    def relaxed(self, level: int) -> "DetectParams":
        """Thresholds for relaxation step ``level`` (0 = strict)."""
        f = self.relax_factor ** level
        return replace(self, th_rt=self.th_rt * f, th_rd=self.th_rd * f,
                       th_ds=self.th_ds + self.th_ds_step * level)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


# ------------------------------------------------------------- filtering

def node_angles(chain: Chain) -> np.ndarray:
    """Angle in degrees between each node's gradient and its ray direction."""
    a = 2 * np.pi * chain.rays / chain.web.nb_rays
    gx, gy = chain.grad[:, 0], chain.grad[:, 1]
    dot = gx * np.cos(a) + gy * np.sin(a)
    cross = gy * np.cos(a) - gx * np.sin(a)
    ang = np.degrees(np.abs(np.arctan2(cross, dot)))
    ang[(gx == 0) & (gy == 0)] = 180.0
    return ang


def filter_by_gradient(chains: Sequence[Chain], web: SpiderWeb,
                       params: DetectParams = DetectParams()) -> list[Chain]:
    """Drop nodes whose gradient points more than ``angle_tol_deg`` off the ray.

    Surviving runs become separate chains; runs shorter than
    ``min_chain_nodes`` are discarded.
    """
    out = []
    # 1e-9 deg slack keeps exact-threshold nodes despite rounding
    tol = params.angle_tol_deg + 1e-9
    for ch in chains:
        keep = node_angles(ch) <= tol
        if keep.all():
            if len(ch) >= params.min_chain_nodes:
                out.append(ch)
            continue
        if ch.is_closed and keep.any():
            # rotate so the closed chain starts right after a removed node
            k = int(np.nonzero(~keep)[0][0])
            rays = np.roll(np.arange(len(ch)), -(k + 1))
        else:
            rays = np.arange(len(ch))
        runs = []
        cur = []
        for i in rays:
            if keep[i]:
                cur.append(i)
            elif cur:
                runs.append(cur)
                cur = []
        if cur:
            runs.append(cur)
        for run in runs:
            if len(run) >= params.min_chain_nodes:
                run = np.asarray(run)
                out.append(Chain(web, (ch.start + run[0]) % web.nb_rays,
                                 ch.radii[run], ch.grad[run]))
    return out


# -------------------------------------------------------------- criteria

def _orient(a: Chain, b: Chain) -> tuple[Chain, Chain]:
    """Order two chains as (left, right): left's A endpoint meets right's B.

    The shorter angular gap is used; on an exact tie the pair whose left
    chain has the smaller A ray wins, so the result does not depend on
    argument order.
    """
    nr = a.web.nb_rays
    g_ab = (b.start - a.end) % nr
    g_ba = (a.start - b.end) % nr
    if g_ab < g_ba or (g_ab == g_ba and a.end <= b.end):
        return a, b
    return b, a


def _gap_len(left: Chain, right: Chain) -> int:
    return (right.start - left.end) % left.web.nb_rays


def _offset_at(chain: Chain, k: int, support: Chain) -> float:
    ray = (chain.start + k) % chain.web.nb_rays
    rs = support.radius_at(ray, measured_only=True)
    if rs is None:
        raise MissingSupportNode(f"support {support.id} has no measured node on ray {ray}")
    return rs - float(chain.radii[k])


def _radial_delta(left: Chain, right: Chain, support: Chain) -> float:
    return abs(_offset_at(left, len(left) - 1, support) - _offset_at(right, 0, support))


def radial_tol_ok(cand_a: Chain, cand_b: Chain, support: Chain, th_rt: float) -> bool:
    """Endpoint distances to the support agree within ``th_rt``."""
    left, right = _orient(cand_a, cand_b)
    return _radial_delta(left, right, support) < th_rt


def _offsets(chain: Chain, idx, support: Chain) -> np.ndarray:
    rs = [support.radius_at(int(r), measured_only=True)
          for r in (chain.start + idx) % chain.web.nb_rays]
    vals = [s - chain.radii[k] for s, k in zip(rs, idx) if s is not None]
    return np.asarray(vals, dtype=float)


def _similar(left: Chain, right: Chain, support: Chain, th_ds: float, n_nodes: int) -> bool:
    n_l = min(n_nodes, len(left))
    n_r = min(n_nodes, len(right))
    set_l = _offsets(left, np.arange(len(left) - n_l, len(left)), support)
    set_r = _offsets(right, np.arange(n_r), support)
    if len(set_l) == 0 or len(set_r) == 0:
        raise MissingSupportNode("no support node near the joining endpoints")
    mu_l, sd_l = set_l.mean(), set_l.std()
    mu_r, sd_r = set_r.mean(), set_r.std()
    lo = max(mu_l - th_ds * sd_l, mu_r - th_ds * sd_r)
    hi = min(mu_l + th_ds * sd_l, mu_r + th_ds * sd_r)
    return lo <= hi


def similar_radial_dist_ok(cand_a: Chain, cand_b: Chain, support: Chain,
                           th_ds: float, n_nodes: int) -> bool:
    left, right = _orient(cand_a, cand_b)
    return _similar(left, right, support, th_ds, n_nodes)


def _centered(r: np.ndarray) -> np.ndarray:
    return np.abs(r[2:] - r[:-2]) / 2.0


def _regular(left: Chain, right: Chain, gap_radii: np.ndarray, th_rd: float, n_nodes: int) -> bool:
    tail = left.radii[max(0, len(left) - n_nodes - 1):]
    head = right.radii[:n_nodes + 1]
    existing = np.concatenate([_centered(tail), _centered(head)])
    if len(existing) == 0:
        raise ChainTooShort("neither chain has 3 nodes for a centered derivative")
    # the virtual chain around the junction: its derivative at A, at each
    # interpolated node, and at B
    virtual = np.concatenate([left.radii[-2:], gap_radii, right.radii[:2]])
    joined = _centered(virtual)
    if len(joined) == 0:
        return True
    return bool(joined.max() <= th_rd * existing.max())


def regular_deriv_ok(cand_a: Chain, cand_b: Chain, gap_nodes=None,
                     th_rd: float = 2.0, n_nodes: int = 20) -> bool:
    """Derivative across the junction stays within ``th_rd`` times the chains' own."""
    left, right = _orient(cand_a, cand_b)
    if gap_nodes is None:
        gap_radii = interpolate_radii(left.radii[-1], right.radii[0], _gap_len(left, right) - 1)
    else:
        gap_radii = np.asarray([n.radius for n in gap_nodes], dtype=float)
    return _regular(left, right, gap_radii, th_rd, n_nodes)


def _goodness(left: Chain, right: Chain, support: Chain, p: DetectParams,
              gap_radii: np.ndarray) -> bool:
    # a chain joined to itself closes its own gap
    if left is not right and chains_intersect(left, right):
        return False
    if not _regular(left, right, gap_radii, p.th_rd, p.n_nodes):
        return False
    try:
        if _similar(left, right, support, p.th_ds, p.n_nodes):
            return True
    except MissingSupportNode:
        pass
    try:
        return _radial_delta(left, right, support) < p.th_rt
    except MissingSupportNode:
        return False


def connectivity_goodness(cand_a: Chain, cand_b: Chain, support: Chain,
                          params: DetectParams = DetectParams()) -> bool:
    """RegularDeriv and (SimilarRadialDist or RadialTol).

    Intersecting chains are never connectable. Missing support nodes or too
    short chains raise from the sub-criteria.
    """
    if chains_intersect(cand_a, cand_b):
        return False
    left, right = _orient(cand_a, cand_b)
    gap_radii = interpolate_radii(left.radii[-1], right.radii[0], _gap_len(left, right) - 1)
    if not _regular(left, right, gap_radii, params.th_rd, params.n_nodes):
        return False
    return (_similar(left, right, support, params.th_ds, params.n_nodes)
            or _radial_delta(left, right, support) < params.th_rt)


# ------------------------------------------------------------ connecting

# Two pieces of one edge often overlap by a ray or two where the edge linker
# broke; such pieces may still join once the overlap is cut off.
MAX_END_OVERLAP = 3


def _trim_overlap(left: Chain, right: Chain) -> Optional[Chain]:
    """``right`` without the nodes it shares with the A end of ``left``.

    Returns None unless the chains overlap only at left's A end and right's
    B end, by at most ``MAX_END_OVERLAP`` rays.
    """
    nr = left.web.nb_rays
    k = (left.end - right.start) % nr + 1
    if k > MAX_END_OVERLAP or k >= len(right) - 1 or k >= len(left):
        return None
    if len(left) + len(right) - k > nr:
        return None
    return Chain(left.web, right.start + k, right.radii[k:], right.grad[k:],
                 interpolated=right.interpolated[k:])


def _merge(left: Chain, right: Chain, gap_radii: np.ndarray) -> Chain:
    """Join ``left``'s A end to ``right``'s B end; ``right is left`` closes it."""
    tail = [] if right is left else [right]
    radii = np.concatenate([left.radii, gap_radii] + [c.radii for c in tail])
    grad = np.concatenate([left.grad, np.zeros((len(gap_radii), 2))] + [c.grad for c in tail])
    interp = np.concatenate([left.interpolated, np.ones(len(gap_radii), dtype=bool)]
                            + [c.interpolated for c in tail])
    merged = Chain(left.web, left.start, radii, grad, interpolated=interp)
    assert len(merged) <= left.web.nb_rays
    assert len(set(merged.rays.tolist())) == len(merged), "one node per ray violated"
    return merged


class _Connector:
    def __init__(self, chains, web: SpiderWeb, params: DetectParams):
        self.web = web
        self.params = params
        self.index = RayIndex(chains, web.nb_rays)
        self.merges = 0

    def _sort_key(self, ch: Chain):
        return (-len(ch), ch.start, float(ch.radii[0]), ch.id)

    def candidates(self, support: Chain, direction: str) -> list[Chain]:
        seen = {}
        for ray, r in zip(support.rays.tolist(), support.radii.tolist()):
            cid = self.index.neighbor(ray, r, support.id, direction)
            if cid is not None:
                seen[cid] = True
        out = []
        for cid in seen:
            ch = self.index.chains[cid]
            if ch.is_closed:
                continue
            for ray, k in ((ch.start, 0), (ch.end, len(ch) - 1)):
                rs = support.radius_at(ray)
                if rs is not None and self.index.neighbor(ray, rs, support.id, direction) == cid:
                    out.append(ch)
                    break
        out.sort(key=lambda c: (c.start, float(c.radii[0])))
        return out

    def _blocked(self, left: Chain, gap_radii: np.ndarray, support: Chain,
                 direction: str, tol: float) -> bool:
        """A chain sits between the support and the interpolated nodes."""
        nr = self.web.nb_rays
        for i, r in enumerate(gap_radii.tolist()):
            ray = (left.end + 1 + i) % nr
            rs = support.radius_at(ray)
            for rm, cid in self.index.on_ray(ray):
                if direction == INWARD:
                    if rm > r - tol and (rs is None or rm < rs):
                        return True
                elif rm < r + tol and (rs is None or rm > rs):
                    return True
        return False

    @staticmethod
    def _support_dist(ch: Chain, ray: int, support: Chain) -> float:
        rs = support.radius_at(ray)
        return np.inf if rs is None else abs(rs - ch.radius_at(ray))

    def _layer_spacing(self, left: Chain, support: Chain) -> float:
        """Smallest distance from left's last nodes to any other chain on their rays."""
        n = min(self.params.n_nodes, len(left))
        best = np.inf
        for k in range(len(left) - n, len(left)):
            ray = (left.start + k) % self.web.nb_rays
            rl = float(left.radii[k])
            for r, cid in self.index.on_ray(ray):
                # pieces within a pixel of left are duplicates of its own edge
                if cid != left.id and abs(r - rl) > 1.0:
                    best = min(best, abs(r - rl))
        return min(best, self._support_dist(left, left.end, support))

    def best_partner(self, left: Chain, cands: list[Chain], support: Chain,
                     direction: str) -> Optional[tuple[Chain, np.ndarray]]:
        p = self.params
        # left's own B end counts as an endpoint ahead, but only for a chain
        # that already covers enough rays to be a ring; a short one would
        # close into a curve made almost entirely of interpolated nodes
        ring_like = len(left) >= max(3, p.min_ring_coverage * self.web.nb_rays - 1e-9)
        ahead = [(left, left)] if ring_like else []
        for c in cands:
            if c is left:
                continue
            if not chains_intersect(left, c):
                ahead.append((c, c))
                continue
            trimmed = _trim_overlap(left, c)
            if trimmed is not None:
                ahead.append((c, trimmed))
        if not ahead:
            return None
        # only the next endpoint ahead is eligible; several chains may share
        # it. An endpoint past the midpoint to the next layer belongs to that
        # layer, seen through a gap in left's; it is tried only when left's
        # own layer offers nothing.
        reach = self._support_dist(left, left.end, support) \
            + 0.5 * self._layer_spacing(left, support) + p.th_rt
        near = [(o, t) for o, t in ahead if self._support_dist(t, t.start, support) <= reach]
        far = [x for x in ahead if x not in near]
        return self._best_in(left, near or far, support, direction)

    def _best_in(self, left: Chain, pool, support: Chain, direction: str):
        p = self.params
        best = None
        nearest = min(_gap_len(left, t) for _, t in pool)
        for orig, right in pool:
            gap = _gap_len(left, right)
            if gap != nearest:
                continue
            gap_radii = interpolate_radii(left.radii[-1], right.radii[0], gap - 1)
            if self._blocked(left, gap_radii, support, direction, p.th_rt):
                continue
            try:
                ok = _goodness(left, right, support, p, gap_radii)
            except ChainTooShort:
                ok = False
            if not ok:
                continue
            try:
                delta = _radial_delta(left, right, support)
            except MissingSupportNode:
                delta = np.inf
            key = (delta, gap, right.start, orig.id)
            if best is None or key < best[0]:
                best = (key, orig, right, gap_radii)
        return None if best is None else best[1:]

    def merge_around(self, support: Chain, direction: str) -> bool:
        cands = self.candidates(support, direction)
        for left in cands:
            found = self.best_partner(left, cands, support, direction)
            if found is None:
                continue
            orig, right, gap_radii = found
            merged = _merge(left, right, gap_radii)
            self.index.remove(left)
            if orig is not left:
                self.index.remove(orig)
            self.index.add(merged)
            self.merges += 1
            return True
        return False

    def run_level(self) -> int:
        """One pass over all supports, longest first. Returns merges made."""
        before = self.merges
        done: set[int] = set()
        heap = [(self._sort_key(c), c.id) for c in self.index.chains.values()]
        heapq.heapify(heap)
        while heap:
            _, cid = heapq.heappop(heap)
            if cid in done or cid not in self.index.chains:
                continue
            support = self.index.chains[cid]
            done.add(cid)
            for direction in (INWARD, OUTWARD):
                while self.merge_around(support, direction):
                    pass
            # merged chains may serve as supports later in this pass
            for c in self.index.chains.values():
                if c.id not in done and c.id > cid:
                    heapq.heappush(heap, (self._sort_key(c), c.id))
        return self.merges - before


def connect_chains(chains: Sequence[Chain], web: SpiderWeb,
                   params: DetectParams = DetectParams()) -> list[Chain]:
    """Merge chains into longer ones, relaxing thresholds between rounds."""
    conn = _Connector(chains, web, params)
    for level in range(params.relax_iters):
        conn.params = params.relaxed(level)
        while conn.run_level():
            pass
    out = list(conn.index.chains.values())
    out.sort(key=conn._sort_key)
    return out


# -------------------------------------------------------------- closing

def close_chain(ch: Chain) -> np.ndarray:
    """Radii on every ray, the open gap bridged by polar interpolation."""
    nr = ch.web.nb_rays
    full = np.empty(nr)
    full[ch.rays] = ch.radii
    gap = nr - len(ch)
    if gap:
        fill = interpolate_radii(ch.radii[-1], ch.radii[0], gap)
        full[(ch.end + 1 + np.arange(gap)) % nr] = fill
    return full


def _compatible(a: np.ndarray, b: np.ndarray, margin: float = 1.0) -> bool:
    d = a - b
    return bool((d > margin).all() or (d < -margin).all())


def close_rings(chains: Sequence[Chain], web: SpiderWeb,
                params: DetectParams = DetectParams()) -> list[Ring]:
    """Turn chains covering enough rays into non-crossing rings.

    Coverage counts measured nodes only, so bridged gaps do not make a
    ring. Candidates are taken by decreasing coverage; one that comes within
    1 px of, or crosses, an already accepted ring is dropped.
    """
    need = params.min_ring_coverage * web.nb_rays
    cover = {c.id: int(np.count_nonzero(~c.interpolated)) for c in chains}
    cands = [c for c in chains if cover[c.id] >= need - 1e-9]
    cands.sort(key=lambda c: (-cover[c.id], -len(c), c.start, float(c.radii[0])))
    accepted: list[np.ndarray] = []
    for c in cands:
        radii = close_chain(c)
        if (radii <= 0).any():
            continue
        if all(_compatible(radii, other) for other in accepted):
            accepted.append(radii)
    accepted.sort(key=lambda r: r.mean())
    return [Ring(web, r) for r in accepted]


# -------------------------------------------------------------- pipeline

@dataclass
class DetectionResult:
    rings: list[Ring]
    web: SpiderWeb                 # web in the original image frame
    work_web: SpiderWeb            # web in the resized frame
    preprocessed: raster.PreprocessResult
    edges: list[EdgeChain] = field(default_factory=list)
    sampled: list[Chain] = field(default_factory=list)
    filtered: list[Chain] = field(default_factory=list)
    connected: list[Chain] = field(default_factory=list)
    elapsed: float = 0.0


def rescale_rings(rings: Sequence[Ring], pre: raster.PreprocessResult,
                  web: SpiderWeb) -> list[Ring]:
    """Map rings from the working frame back to ``web`` (original frame)."""
    if pre.scale == (1.0, 1.0):
        return [Ring(web, r.radii.copy()) for r in rings]
    out = []
    for r in rings:
        poly = pre.to_original(r.polygon)
        radii = polygon_radii(poly, web)
        if np.isnan(radii).any():  # pragma: no cover - star-shaped by construction
            continue
        out.append(Ring(web, radii))
    return out


def run_detection(image: np.ndarray, pith, params: DetectParams = DetectParams(),
                  mask: Optional[np.ndarray] = None) -> DetectionResult:
    t0 = time.perf_counter()
    pre = raster.preprocess(image, pith, params.target_size, mask)
    work_web = SpiderWeb(pre.pith, params.nb_rays)
    edges = detect_edges(pre.image, params.sigma, params.low_th, params.high_th)
    sampled = sample_chains(edges, work_web, params.min_chain_nodes)
    filtered = filter_by_gradient(sampled, work_web, params)
    connected = connect_chains(filtered, work_web, params)
    rings = close_rings(connected, work_web, params)
    web = SpiderWeb((float(pith[0]), float(pith[1])), params.nb_rays)
    rings = rescale_rings(rings, pre, web)
    elapsed = time.perf_counter() - t0
    log.info("detected %d rings from %d edge chains in %.2fs", len(rings), len(edges), elapsed)
    return DetectionResult(rings, web, work_web, pre, edges, sampled, filtered, connected, elapsed)


def detect(image: np.ndarray, pith, params: DetectParams = DetectParams(),
           mask: Optional[np.ndarray] = None) -> list[Ring]:
    """Full pipeline; rings are returned in the input image's frame."""
    return run_detection(image, pith, params, mask).rings
