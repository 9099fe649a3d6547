"""Spider-web sampling frame: rays from the pith, nodes, and chains.

Angle convention
----------------
Ray ``i`` leaves the center at angle ``theta_i = 2*pi*i/nb_rays`` measured
from the image +x axis towards +y. Because image y grows downwards, growing
ray index turns *clockwise on screen*::

        ray 3*Nr/4 (up)
              |
    ray Nr/2 -+- ray 0 (right)
              |
         ray Nr/4 (down)

A :class:`Chain` stores its nodes in growing ray index order. Its first
node is endpoint B and its last node is endpoint A, i.e. A is the node
reached last when turning clockwise on screen.
"""
from __future__ import annotations

import bisect
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .edges import EdgeChain
from .errors import BadRayCount

INWARD = "inward"
OUTWARD = "outward"


@dataclass(frozen=True)
class SpiderWeb:
    center: tuple[float, float]
    nb_rays: int = 360

    def __post_init__(self):
        if int(self.nb_rays) != self.nb_rays or self.nb_rays < 3:
            raise BadRayCount(f"nb_rays must be an integer >= 3, got {self.nb_rays}")
        object.__setattr__(self, "nb_rays", int(self.nb_rays))
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    @property
    def ray_angles(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.nb_rays) / self.nb_rays

    @property
    def directions(self) -> np.ndarray:
        a = self.ray_angles
        return np.column_stack([np.cos(a), np.sin(a)])

    def points(self, rays, radii) -> np.ndarray:
        """Image coordinates of nodes at ``radii`` along ``rays``."""
        rays = np.asarray(rays)
        radii = np.asarray(radii, dtype=float)
        a = 2.0 * np.pi * rays / self.nb_rays
        return np.column_stack([self.center[0] + radii * np.cos(a),
                                self.center[1] + radii * np.sin(a)])

    def ray_distance(self, a: int, b: int) -> int:
        """Steps needed to go from ray ``a`` to ray ``b`` with growing index."""
        return (b - a) % self.nb_rays


def build_spider_web(center, nb_rays: int = 360) -> SpiderWeb:
    return SpiderWeb(center, nb_rays)


@dataclass(frozen=True)
class Node:
    ray_index: int
    radius: float
    x: float
    y: float
    gradient: tuple[float, float] = (0.0, 0.0)


_ids = itertools.count(1)


def _new_id() -> int:
    return next(_ids)


@dataclass(eq=False)
class Chain:
    """Angularly contiguous run of nodes, one per ray.

    ``start`` is the ray of endpoint B; node ``k`` sits on ray
    ``(start + k) % nb_rays`` at distance ``radii[k]`` from the center.
    ``interpolated[k]`` marks nodes created to bridge a gap rather than
    measured on an edge.
    """
    web: SpiderWeb
    start: int
    radii: np.ndarray
    grad: Optional[np.ndarray] = None
    id: int = field(default_factory=_new_id)
    interpolated: Optional[np.ndarray] = None

    def __post_init__(self):
        self.radii = np.asarray(self.radii, dtype=float)
        self.start = int(self.start) % self.web.nb_rays
        if len(self.radii) > self.web.nb_rays:
            raise ValueError("chain longer than the number of rays")
        if self.grad is None:
            self.grad = np.zeros((len(self.radii), 2))
        else:
            self.grad = np.asarray(self.grad, dtype=float).reshape(len(self.radii), 2)
        if self.interpolated is None:
            self.interpolated = np.zeros(len(self.radii), dtype=bool)
        else:
            self.interpolated = np.asarray(self.interpolated, dtype=bool).reshape(len(self.radii))

    def __len__(self):
        return len(self.radii)

    def __repr__(self):
        return f"Chain(id={self.id}, start={self.start}, n={len(self)}, r~{self.radii.mean():.1f})"

    @property
    def rays(self) -> np.ndarray:
        return (self.start + np.arange(len(self.radii))) % self.web.nb_rays

    @property
    def end(self) -> int:
        """Ray of endpoint A."""
        return (self.start + len(self.radii) - 1) % self.web.nb_rays

    @property
    def is_closed(self) -> bool:
        return len(self.radii) == self.web.nb_rays

    @property
    def endpoint_a(self) -> Node:
        return self.node(len(self) - 1)

    @property
    def endpoint_b(self) -> Node:
        return self.node(0)

    def node(self, k: int) -> Node:
        ray = (self.start + k) % self.web.nb_rays
        x, y = self.web.points([ray], [self.radii[k]])[0]
        return Node(int(ray), float(self.radii[k]), float(x), float(y),
                    (float(self.grad[k, 0]), float(self.grad[k, 1])))

    @property
    def nodes(self) -> list[Node]:
        return [self.node(k) for k in range(len(self))]

    @property
    def xy(self) -> np.ndarray:
        return self.web.points(self.rays, self.radii)

    def offset(self, ray: int) -> Optional[int]:
        """Position of ``ray`` inside this chain, or None."""
        k = (ray - self.start) % self.web.nb_rays
        return k if k < len(self.radii) else None

    def radius_at(self, ray: int, measured_only: bool = False) -> Optional[float]:
        k = self.offset(ray)
        if k is None or (measured_only and self.interpolated[k]):
            return None
        return float(self.radii[k])


# ---------------------------------------------------------------- sampling

def _crossings(xy: np.ndarray, grad: np.ndarray, web: SpiderWeb, closed: bool):
    """Ordered ray crossings of a polyline: (ray, radius, gradient) arrays."""
    pts = np.asarray(xy, dtype=float)
    if closed and len(pts) > 2:
        pts = np.vstack([pts, pts[:1]])
        grad = np.vstack([grad, grad[:1]])
    if len(pts) < 2:
        return np.empty(0, int), np.empty(0), np.empty((0, 2))
    nr = web.nb_rays
    rel = pts - np.asarray(web.center)
    u = (np.arctan2(rel[:, 1], rel[:, 0]) % (2 * np.pi)) * nr / (2 * np.pi)
    du = np.diff(u)
    du = (du + nr / 2) % nr - nr / 2
    u0 = u[:-1]
    fu = np.floor(u).astype(np.int64)
    f0 = fu[:-1]
    # floor of the segment end taken from u itself (not u0 + du) so a point
    # lying exactly on a ray is counted by one segment only
    wraps = np.rint((u0 + du - u[1:]) / nr).astype(np.int64)
    f1 = fu[1:] + nr * wraps
    count = np.abs(f1 - f0)
    if count.sum() == 0:
        return np.empty(0, int), np.empty(0), np.empty((0, 2))
    seg = np.repeat(np.arange(len(du)), count)
    first = np.repeat(np.cumsum(count) - count, count)
    step = np.arange(len(seg)) - first
    fwd = du[seg] > 0
    # going forward we cross f0+1, f0+2, ...; backward f0, f0-1, ...
    k = np.where(fwd, f0[seg] + 1 + step, f0[seg] - step)
    ray = k % nr
    ang = 2 * np.pi * ray / nr
    d = np.column_stack([np.cos(ang), np.sin(ang)])
    p = rel[seg]
    e = rel[seg + 1] - p
    den = d[:, 0] * e[:, 1] - d[:, 1] * e[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (p[:, 0] * e[:, 1] - p[:, 1] * e[:, 0]) / den
        s = (p[:, 0] * d[:, 1] - p[:, 1] * d[:, 0]) / den
    # degenerate (ray-parallel) segments: fall back to the nearer endpoint
    bad = ~np.isfinite(t)
    if bad.any():
        t = np.where(bad, np.hypot(p[:, 0], p[:, 1]), t)
        s = np.where(bad, 0.0, s)
    s = np.clip(s, 0.0, 1.0)
    g = np.where((s < 0.5)[:, None], grad[seg], grad[seg + 1])
    return ray.astype(int), t, g


def _collapse_jitter(ray, radius, grad):
    """Merge odd runs of crossings of the same ray into one node.

    A polyline that wiggles across a ray three times (k, k, k) still passes
    it once overall; only even runs are genuine fold-backs.
    """
    if len(ray) < 3:
        return ray, radius, grad
    keep = []
    i = 0
    n = len(ray)
    while i < n:
        j = i
        while j + 1 < n and ray[j + 1] == ray[i]:
            j += 1
        run = j - i + 1
        if run % 2 == 1:
            keep.append(i + run // 2)
        else:
            keep.extend([i, j])
        i = j + 1
    keep = np.asarray(keep)
    return ray[keep], radius[keep], grad[keep]


def _split(ray, radius, grad, web, min_nodes=2) -> list[Chain]:
    nr = web.nb_rays
    out = []
    cur: list[int] = []
    direction = 0
    used: set[int] = set()

    def flush():
        if len(cur) >= min_nodes:
            idx = cur if direction >= 0 else cur[::-1]
            out.append(Chain(web, int(ray[idx[0]]), radius[idx], grad[idx]))

    for t in range(len(ray)):
        if radius[t] <= 0:
            flush()
            cur, direction, used = [], 0, set()
            continue
        k = int(ray[t])
        if cur:
            step = (k - int(ray[cur[-1]])) % nr
            d = 1 if step == 1 else (-1 if step == nr - 1 else 0)
            if d != 0 and (direction == 0 or d == direction) and k not in used:
                direction = d
                cur.append(t)
                used.add(k)
                continue
            flush()
            cur, direction, used = [], 0, set()
        cur.append(t)
        used.add(k)
    flush()
    return out


def sample_chain(edge_chain: EdgeChain, web: SpiderWeb, min_nodes: int = 1) -> list[Chain]:
    """Intersect one edge polyline with the rays and cut it into Chains."""
    ray, radius, grad = _crossings(edge_chain.xy, edge_chain.grad, web, edge_chain.closed)
    if len(ray) == 0:
        return []
    ray, radius, grad = _collapse_jitter(ray, radius, grad)
    return _split(ray, radius, grad, web, min_nodes)


def sample_chains(edge_chains: Iterable[EdgeChain], web: SpiderWeb, min_nodes: int = 1) -> list[Chain]:
    out = []
    for ec in edge_chains:
        out.extend(sample_chain(ec, web, min_nodes))
    return out


# ------------------------------------------------------------- relations

def chains_intersect(a: Chain, b: Chain) -> bool:
    """True iff some ray crosses both chains."""
    nr = a.web.nb_rays
    if len(a) + len(b) > nr:
        return True
    # b starts inside a, or a starts inside b
    return (b.start - a.start) % nr < len(a) or (a.start - b.start) % nr < len(b)


class RayIndex:
    """Per-ray sorted (radius, chain id) lists for visibility queries."""

    def __init__(self, chains: Iterable[Chain] = (), nb_rays: Optional[int] = None):
        self.chains: dict[int, Chain] = {}
        self._rays: list[list[tuple[float, int]]] | None = None
        self._nb_rays = nb_rays
        for ch in chains:
            self.add(ch)

    def _ensure(self, nr):
        if self._rays is None:
            self._nb_rays = nr
            self._rays = [[] for _ in range(nr)]

    def add(self, ch: Chain):
        self._ensure(ch.web.nb_rays)
        self.chains[ch.id] = ch
        for ray, r in zip(ch.rays.tolist(), ch.radii.tolist()):
            bisect.insort(self._rays[ray], (r, ch.id))

    def remove(self, ch: Chain):
        del self.chains[ch.id]
        for ray, r in zip(ch.rays.tolist(), ch.radii.tolist()):
            lst = self._rays[ray]
            i = bisect.bisect_left(lst, (r, ch.id))
            if i < len(lst) and lst[i] == (r, ch.id):
                lst.pop(i)
            else:  # pragma: no cover - structural invariant
                lst.remove((r, ch.id))

    def on_ray(self, ray: int) -> list[tuple[float, int]]:
        if self._rays is None:
            return []
        return self._rays[ray]

    def neighbor(self, ray: int, radius: float, chain_id: int, direction: str) -> Optional[int]:
        """Id of the first chain met on ``ray`` leaving ``radius`` in ``direction``."""
        lst = self.on_ray(ray)
        i = bisect.bisect_left(lst, (radius, chain_id))
        if direction == INWARD:
            j = i - 1
            while j >= 0 and lst[j][1] == chain_id:
                j -= 1
            return lst[j][1] if j >= 0 else None
        j = i
        while j < len(lst) and lst[j][1] == chain_id:
            j += 1
        return lst[j][1] if j < len(lst) else None


def visible_neighbors(ch: Chain, endpoint: str, direction: str,
                      all_chains: Sequence[Chain] | RayIndex) -> Optional[Chain]:
    """First chain met along the ray of ``ch``'s endpoint ('A' or 'B')."""
    index = all_chains if isinstance(all_chains, RayIndex) else RayIndex(all_chains)
    if ch.id not in index.chains:
        index = RayIndex(list(index.chains.values()) + [ch])
    k = len(ch) - 1 if endpoint.upper() == "A" else 0
    ray = (ch.start + k) % ch.web.nb_rays
    cid = index.neighbor(ray, float(ch.radii[k]), ch.id, direction)
    return None if cid is None else index.chains[cid]


# ---------------------------------------------------------- interpolation

def interpolate_radii(r0: float, r1: float, n_between: int) -> np.ndarray:
    """Radii linear in angle strictly between two nodes ``n_between + 1`` rays apart."""
    if n_between <= 0:
        return np.empty(0)
    t = np.arange(1, n_between + 1) / (n_between + 1)
    return r0 + (r1 - r0) * t


def interpolate_gap(src: Node, dst: Node, web: SpiderWeb) -> list[Node]:
    """Nodes on the rays strictly between ``src`` and ``dst``.

    Walks the shorter way round; an exact half-turn tie walks towards
    growing ray index.
    """
    if src.ray_index == dst.ray_index:
        raise ValueError("src and dst must lie on different rays")
    nr = web.nb_rays
    fwd = (dst.ray_index - src.ray_index) % nr
    step = 1 if fwd <= nr - fwd else -1
    gap = fwd if step == 1 else nr - fwd
    radii = interpolate_radii(src.radius, dst.radius, gap - 1)
    rays = (src.ray_index + step * np.arange(1, gap)) % nr
    xy = web.points(rays, radii)
    return [Node(int(k), float(r), float(x), float(y))
            for k, r, (x, y) in zip(rays, radii, xy)]


# ------------------------------------------------------------------ rings

@dataclass(eq=False)
class Ring:
    """Closed curve sampled on every ray of ``web``."""
    web: SpiderWeb
    radii: np.ndarray
    source: str = "detected"

    def __post_init__(self):
        self.radii = np.asarray(self.radii, dtype=float)
        if self.radii.shape != (self.web.nb_rays,):
            raise ValueError(f"ring needs {self.web.nb_rays} radii, got {self.radii.shape}")

    @property
    def polygon(self) -> np.ndarray:
        return self.web.points(np.arange(self.web.nb_rays), self.radii)

    @property
    def mean_radius(self) -> float:
        return float(self.radii.mean())


def _point_in_polygon(pt, poly: np.ndarray) -> bool:
    x, y = pt
    xi, yi = poly[:, 0], poly[:, 1]
    xj, yj = np.roll(xi, 1), np.roll(yi, 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cross = ((yi > y) != (yj > y)) & (x < (xj - xi) * (y - yi) / (yj - yi) + xi)
    return bool(np.count_nonzero(cross) % 2)


def polygon_radii(points, web: SpiderWeb, angles: Optional[np.ndarray] = None) -> np.ndarray:
    """Distance from the center to the outermost polygon crossing on each ray.

    ``angles`` defaults to the web's ray angles. Entries are NaN where the
    ray misses the polygon.
    """
    poly = np.asarray(points, dtype=float)
    if angles is None:
        angles = web.ray_angles
    d = np.column_stack([np.cos(angles), np.sin(angles)])
    p = poly - np.asarray(web.center)
    e = np.roll(p, -1, axis=0) - p
    # ray c + t*d meets edge p + u*e
    den = d[:, None, 0] * e[None, :, 1] - d[:, None, 1] * e[None, :, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (p[None, :, 0] * e[None, :, 1] - p[None, :, 1] * e[None, :, 0]) / den
        u = (p[None, :, 0] * d[:, None, 1] - p[None, :, 1] * d[:, None, 0]) / den
    ok = np.isfinite(t) & (t >= 0) & (u >= -1e-12) & (u <= 1 + 1e-12)
    t = np.where(ok, t, -np.inf)
    out = t.max(axis=1)
    out[~np.isfinite(out)] = np.nan
    return out
