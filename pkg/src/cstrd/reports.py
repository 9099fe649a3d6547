"""The five PNG artifacts written next to an evaluation."""
from __future__ import annotations

import os
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import IOFailure  # noqa: E402
from .evaluate import Assignment, build_influence_map, signed_errors  # noqa: E402
from .spider import Ring, SpiderWeb  # noqa: E402

REPORT_FILES = (
    "dots_curve_and_rays.png",
    "influence_area.png",
    "assigned_dt_gt.png",
    "rmse.png",
    "heat_map_Spectral.png",
)

# larger images are drawn downsampled; figures only need to be legible
MAX_SIDE = 1200


def _canvas(image: Optional[np.ndarray], rings: Sequence[Ring], web: SpiderWeb):
    """Background image and its downsampling step."""
    if image is None:
        r = max([float(x.radii.max()) for x in rings] + [10.0])
        w = int(np.ceil(web.center[0] + r + 10))
        h = int(np.ceil(web.center[1] + r + 10))
        image = np.full((h, w, 3), 255, dtype=np.uint8)
    img = np.asarray(image)
    if img.ndim == 2:
        img = np.dstack([img] * 3)
    step = int(np.ceil(max(img.shape[:2]) / MAX_SIDE))
    return (img[::step, ::step], step) if step > 1 else (img, 1)


def _figure(img, step):
    h, w = img.shape[:2]
    fig = plt.figure(figsize=(w / 100, h / 100), dpi=100)
    ax = fig.add_axes([0, 0, 1, 1])
    ax.imshow(img, extent=(0, w * step, h * step, 0))
    ax.set_xlim(0, w * step)
    ax.set_ylim(h * step, 0)
    ax.axis("off")
    return fig, ax


def _closed(xy):
    return np.vstack([xy, xy[:1]])


def _save(fig, path):
    try:
        fig.savefig(path, dpi=100)
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc
    finally:
        plt.close(fig)


def _colors(n):
    cmap = plt.get_cmap("tab20")
    return [cmap(i % 20) for i in range(n)]


def render_reports(image: Optional[np.ndarray], gt: Sequence[Ring], detections: Sequence[Ring],
                   assignment: Assignment, out_dir: str, web: Optional[SpiderWeb] = None,
                   section_bound=None) -> list[str]:
    """Write the five report images into ``out_dir`` and return their paths."""
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise IOFailure(f"cannot create {out_dir}: {exc}") from exc
    if web is None:
        src = list(gt) + list(detections)
        if not src:
            raise ValueError("need a web when there are no rings")
        web = src[0].web
    img, step = _canvas(image, list(gt) + list(detections), web)
    paths = [os.path.join(out_dir, f) for f in REPORT_FILES]
    cx, cy = web.center

    # rays, gt curves and detections with their nodes
    fig, ax = _figure(img, step)
    reach = max([float(r.radii.max()) for r in list(gt) + list(detections)] + [1.0])
    for d in web.directions[:: max(1, web.nb_rays // 72)]:
        ax.plot([cx, cx + reach * d[0]], [cy, cy + reach * d[1]], color="white", lw=0.3, alpha=0.6)
    for r in gt:
        xy = _closed(r.polygon)
        ax.plot(xy[:, 0], xy[:, 1], color="lime", lw=0.8)
    for r in detections:
        xy = r.polygon
        ax.plot(*_closed(xy).T, color="red", lw=0.8)
        ax.scatter(xy[:, 0], xy[:, 1], s=0.5, color="red")
    ax.plot([cx], [cy], "b+", ms=8)
    _save(fig, paths[0])

    # influence bands, one color per ring
    fig, ax = _figure(img, step)
    if len(gt):
        imap = build_influence_map(gt, web, section_bound)
        ang = np.append(web.ray_angles, 2 * np.pi)
        cols = _colors(len(gt))
        for k in range(len(imap.radii)):
            lo = np.append(imap.lower[k], imap.lower[k][0])
            hi = np.minimum(np.append(imap.upper[k], imap.upper[k][0]), reach * 1.5)
            outer = np.column_stack([cx + hi * np.cos(ang), cy + hi * np.sin(ang)])
            inner = np.column_stack([cx + lo * np.cos(ang), cy + lo * np.sin(ang)])[::-1]
            poly = np.vstack([outer, inner])
            ax.fill(poly[:, 0], poly[:, 1], color=cols[imap.order[k]], alpha=0.35, lw=0)
        for r in gt:
            ax.plot(*_closed(r.polygon).T, color="black", lw=0.6)
    _save(fig, paths[1])

    # matched pairs share a color; false positives in white
    fig, ax = _figure(img, step)
    cols = _colors(len(gt))
    det_color = {j: cols[g] for j, g in assignment.matches}
    for g, r in enumerate(gt):
        ax.plot(*_closed(r.polygon).T, color=cols[g], lw=0.6, ls="--")
    for j, r in enumerate(detections):
        ax.plot(*_closed(r.polygon).T, color=det_color.get(j, "white"), lw=1.2)
    _save(fig, paths[2])

    # per-ring RMSE bars, missed rings left empty
    fig, ax = plt.subplots(figsize=(8, 4), dpi=100)
    by_gt = {g: assignment.rmse.get((j, g)) for j, g in assignment.matches}
    idx = np.arange(1, len(gt) + 1)
    vals = [by_gt.get(g, 0.0) or 0.0 for g in range(len(gt))]
    ax.bar(idx, vals, color="tab:blue")
    ax.set_xlabel("ground-truth ring")
    ax.set_ylabel("RMSE (px)")
    if len(gt):
        ax.set_xticks(idx)
    fig.tight_layout()
    _save(fig, paths[3])

    # signed radial error per ray and matched ring
    fig, ax = plt.subplots(figsize=(6, 6), dpi=100, subplot_kw={"projection": "polar"})
    if assignment.matches:
        errs = np.vstack([signed_errors(detections[j], gt[g]) for j, g in assignment.matches])
        lim = max(float(np.abs(errs).max()), 1e-6)
        theta = np.append(web.ray_angles, 2 * np.pi)
        rad = np.arange(len(assignment.matches) + 1)
        mesh = ax.pcolormesh(theta, rad, errs, cmap="Spectral", vmin=-lim, vmax=lim, shading="flat")
        fig.colorbar(mesh, ax=ax, label="radial error (px), negative = inward")
    ax.set_theta_direction(-1)
    ax.set_yticklabels([])
    _save(fig, paths[4])
    return paths
