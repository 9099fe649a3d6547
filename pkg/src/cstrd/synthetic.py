"""Synthetic cross-section images with known ring boundaries.

Each ring darkens gradually from its inner boundary outwards (earlywood to
latewood) and the next ring starts light again, so every boundary is a sharp
dark-to-light step seen from the pith. A last, unlabelled band of wood lies
beyond the outermost boundary; the dark background around it gives an
inward-pointing gradient that the orientation filter rejects.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage


@dataclass
class SyntheticSection:
    image: np.ndarray            # RGB uint8
    pith: tuple[float, float]
    rings: list[np.ndarray]      # GT polygons (n, 2), inner to outer
    radii: np.ndarray            # nominal boundary radii along the major axis
    mask: np.ndarray             # True inside the section


def _shape_factor(theta, ratio, rotation, wobble, lobes, phase):
    """Radius scale of the boundary family along polar angle ``theta``."""
    t = theta - rotation
    # ellipse with semi-axes (1, ratio) in polar form
    base = ratio / np.sqrt((ratio * np.cos(t)) ** 2 + np.sin(t) ** 2)
    return base * (1.0 + wobble * np.sin(lobes * theta + phase))


def make_section(size=(600, 600), n_rings=8, pith=None, inner=30.0, outer=None,
                 ratio=1.0, rotation=0.0, wobble=0.0, lobes=3, blur=1.5,
                 noise=2.0, light=210.0, dark=70.0, background=25.0,
                 n_points=720, seed=0) -> SyntheticSection:
    """Render ``n_rings`` nested boundaries on an image of ``size = (w, h)``.

    ``ratio`` < 1 squashes the rings into ellipses rotated by ``rotation``
    radians; ``wobble`` adds a ``lobes``-fold radial perturbation.
    """
    rng = np.random.default_rng(seed)
    w, h = size
    if pith is None:
        pith = (w / 2.0, h / 2.0)
    cx, cy = float(pith[0]), float(pith[1])
    if outer is None:
        outer = 0.8 * min(cx, cy, w - cx, h - cy) / (1.0 + wobble) - 0.8 * 0.5 * min(w, h) / (n_rings + 1)
    radii = np.linspace(inner, outer, n_rings)
    step = (outer - inner) / max(n_rings - 1, 1)
    bark = outer + step
    phase = rng.uniform(0, 2 * np.pi)

    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    dx, dy = xx - cx, yy - cy
    theta = np.arctan2(dy, dx)
    # normalized radius: a point on boundary k has rho == radii[k]
    rho = np.hypot(dx, dy) / _shape_factor(theta, ratio, rotation, wobble, lobes, phase)

    bounds = np.concatenate([radii, [bark]])
    edges = np.concatenate([[0.0], bounds])
    k = np.searchsorted(bounds, rho, side="right")
    inside = k <= n_rings
    kk = np.minimum(k, n_rings)
    lo, hi = edges[kk], edges[kk + 1]
    frac = np.clip((rho - lo) / (hi - lo), 0.0, 1.0)
    img = np.where(inside, light + (dark - light) * frac, background)
    if blur > 0:
        img = ndimage.gaussian_filter(img, blur)
    if noise > 0:
        # a segmented photograph has a clean background, so noise stays on wood
        img = img + np.where(inside, rng.normal(0.0, noise, img.shape), 0.0)
    img = np.clip(np.rint(img), 0, 255).astype(np.uint8)

    ang = 2 * np.pi * np.arange(n_points) / n_points
    f = _shape_factor(ang, ratio, rotation, wobble, lobes, phase)
    rings = [np.column_stack([cx + r * f * np.cos(ang), cy + r * f * np.sin(ang)])
             for r in radii]
    return SyntheticSection(np.dstack([img] * 3), (cx, cy), rings, radii, inside)
