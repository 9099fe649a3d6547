"""Command-line entry point: detect, evaluate, measure, calibrate, batch.

Exit codes: 0 on success, 1 on bad input (files, arguments, data), 2 on an
unexpected internal error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from typing import Optional, Sequence

import cv2
import numpy as np

from . import annotation_io as aio
from . import raster
from .errors import CSTRDError, InputError, IOFailure
from .evaluate import (
    DEFAULT_TH,
    border_distance,
    evaluate,
    sample_polygon_on_rays,
)
from .measure import (
    calibrate,
    calibrate_directions,
    cardinal_csv,
    cardinal_widths,
    equivalent_series,
)
from .rings import DetectParams, Ring, run_detection
from .spider import SpiderWeb

log = logging.getLogger("cstrd")

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2

# DetectParams field -> (flag, help)
_PARAM_FLAGS = {
    "sigma": ("--sigma", "edge detector Gaussian scale"),
    "nb_rays": ("--nb-rays", "number of rays"),
    "angle_tol_deg": ("--angle-tol", "max angle between gradient and ray, degrees"),
    "th_rt": ("--th-rt", "radial tolerance at the joining endpoints, px"),
    "th_ds": ("--th-ds", "std-dev multiplier for the radial distance ranges"),
    "th_rd": ("--th-rd", "derivative tolerance factor"),
    "n_nodes": ("--n-nodes", "nodes per chain used by the criteria"),
    "relax_iters": ("--relax-iters", "relaxation rounds"),
    "relax_factor": ("--relax-factor", "multiplier on th_rt and th_rd per round"),
    "th_ds_step": ("--th-ds-step", "increment on th_ds per round"),
    "min_chain_nodes": ("--min-chain-nodes", "shortest chain kept after filtering"),
    "min_ring_coverage": ("--min-coverage", "fraction of rays a chain must cover to close"),
    "low_th": ("--low-th", "low hysteresis threshold; None uses the 70th gradient percentile"),
    "high_th": ("--high-th", "high hysteresis threshold; None uses the 85th gradient percentile"),
    "target_size": ("--target-size", "working image side, px"),
}


def _add_detect_params(p: argparse.ArgumentParser, title="detection parameters"):
    # every subcommand lists the full parameter set so runs can share one flag line
    g = p.add_argument_group(title)
    defaults = DetectParams()
    for f in fields(DetectParams):
        flag, text = _PARAM_FLAGS[f.name]
        default = getattr(defaults, f.name)
        kind = int if f.name in ("nb_rays", "n_nodes", "relax_iters", "min_chain_nodes",
                                 "target_size") else float
        g.add_argument(flag, dest=f.name, type=kind, default=default,
                       help=f"{text} [{f.name}, default: {default}]")


def _params(args) -> DetectParams:
    return DetectParams(**{f.name: getattr(args, f.name) for f in fields(DetectParams)})


def _add_pith(p: argparse.ArgumentParser):
    p.add_argument("--cx", type=float, help="pith x (column), px")
    p.add_argument("--cy", type=float, help="pith y (row), px")
    p.add_argument("--pith-csv", help="pith CSV (name,cx,cy); looked up by image file stem")


def _pith(args, image_path: Optional[str]) -> tuple[float, float]:
    if args.cx is not None and args.cy is not None:
        return args.cx, args.cy
    if getattr(args, "pith_csv", None):
        if image_path is None:
            raise InputError("--pith-csv needs an image name to look up")
        name = os.path.splitext(os.path.basename(image_path))[0]
        table = aio.load_pith_csv(args.pith_csv)
        if name not in table:
            raise InputError(f"{name!r} not found in {args.pith_csv}")
        rec = table[name]
        return rec.cx, rec.cy
    raise InputError("pith required: give --cx and --cy, or --pith-csv")


def _ensure_dir(path: str):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise IOFailure(f"cannot create {path}: {exc}") from exc


def _write_bytes(path: str, data: bytes):
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc


def _rings_json(rings: Sequence[Ring], image_path: str, shape) -> bytes:
    shapes = [aio.RingShape(points=[tuple(p) for p in r.polygon], label=str(i + 1))
              for i, r in enumerate(rings)]
    return aio.save_annotation(shapes, image_path=os.path.basename(image_path),
                               image_height=shape[0], image_width=shape[1])


def _overlay(image: np.ndarray, rings: Sequence[Ring], pith) -> np.ndarray:
    out = cv2.cvtColor(image, cv2.COLOR_RGB2BGR)
    thick = max(1, int(round(max(image.shape[:2]) / 800)))
    for r in rings:
        pts = np.round(r.polygon).astype(np.int32).reshape(-1, 1, 2)
        cv2.polylines(out, [pts], True, (0, 0, 255), thick, cv2.LINE_AA)
    cv2.drawMarker(out, (int(round(pith[0])), int(round(pith[1]))), (255, 0, 0),
                   cv2.MARKER_CROSS, 10 * thick, thick)
    return out


def _load_rings(path: str, web: SpiderWeb, source: str) -> list[Ring]:
    ann = aio.load_annotation(path)
    return [sample_polygon_on_rays(s, web, source) for s in ann.shapes]


# ------------------------------------------------------------- commands

def detect_one(image_path: str, pith, params: DetectParams, out_dir: str,
               mask_path: Optional[str] = None) -> dict:
    image = raster.load_image(image_path)
    mask = raster.load_mask(mask_path) if mask_path else None
    res = run_detection(image, pith, params, mask)
    _ensure_dir(out_dir)
    stem = os.path.splitext(os.path.basename(image_path))[0]
    json_path = os.path.join(out_dir, f"{stem}.json")
    _write_bytes(json_path, _rings_json(res.rings, image_path, image.shape))
    png_path = os.path.join(out_dir, f"{stem}_overlay.png")
    if not cv2.imwrite(png_path, _overlay(image, res.rings, pith)):
        raise IOFailure(f"cannot write {png_path}")
    return {"rings": res.rings, "elapsed": res.elapsed, "json": json_path,
            "overlay": png_path, "shape": image.shape, "web": res.web}


def cmd_detect(args) -> int:
    pith = _pith(args, args.image)
    out = detect_one(args.image, pith, _params(args), args.output_dir, args.mask)
    print(f"rings: {len(out['rings'])} elapsed: {out['elapsed']:.2f}s")
    print(f"wrote {out['json']}")
    return EXIT_OK


def evaluate_files(dt_path, gt_path, image_path, pith, out_dir, th, nb_rays=360,
                   exec_time=None, render=True):
    from .reports import render_reports

    web = SpiderWeb(pith, nb_rays)
    image = raster.load_image(image_path) if image_path else None
    if image is not None:
        bound = border_distance(web, image.shape[1], image.shape[0])
    else:
        ann = aio.load_annotation(gt_path)
        bound = None if ann.imageWidth is None or ann.imageHeight is None else \
            border_distance(web, ann.imageWidth, ann.imageHeight)
    gt = _load_rings(gt_path, web, "ground_truth")
    dt = _load_rings(dt_path, web, "detected")
    assignment, report = evaluate(dt, gt, web, th, bound, exec_time)
    if render:
        render_reports(image, gt, dt, assignment, out_dir, web, bound)
    return assignment, report


def cmd_evaluate(args) -> int:
    if not 0 < args.th <= 1:
        raise InputError("--th must be in (0, 1]")
    pith = _pith(args, args.image)
    _, report = evaluate_files(args.dt, args.gt, args.image, pith, args.output_dir,
                               args.th, args.nb_rays)
    print(report.summary())
    print(f"TP: {report.TP} FP: {report.FP} FN: {report.FN}")
    return EXIT_OK


def _read_calibration(path: str):
    """Rows of px,mm[,direction] with a header line."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}") from exc
    data: dict[str, tuple[list, list]] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or not "".join(row).strip():
            continue
        if len(row) not in (2, 3):
            raise InputError(f"{path}:{lineno}: expected px,mm[,direction]")
        try:
            px, mm = float(row[0]), float(row[1])
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: non-numeric value") from exc
        key = row[2].strip() if len(row) == 3 else "all"
        data.setdefault(key, ([], []))
        data[key][0].append(px)
        data[key][1].append(mm)
    return data


def cmd_measure(args) -> int:
    pith = _pith(args, args.rings)
    web = SpiderWeb(pith, args.nb_rays)
    rings = _load_rings(args.rings, web, "detected")
    series = equivalent_series(rings, web)
    m = args.mm_per_px
    if args.calibration:
        data = _read_calibration(args.calibration)
        px = [v for k in data for v in data[k][0]]
        mm = [v for k in data for v in data[k][1]]
        m = calibrate(px, mm).m
    if m is not None:
        series = series.calibrated(m)
    widths = cardinal_widths(rings, web)
    _ensure_dir(args.output_dir)
    g = os.path.join(args.output_dir, "growth.csv")
    c = os.path.join(args.output_dir, "cardinal.csv")
    _write_bytes(g, series.to_csv().encode())
    _write_bytes(c, cardinal_csv(widths).encode())
    print(f"rings: {len(series)}")
    print(f"wrote {g}")
    print(f"wrote {c}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    data = _read_calibration(args.data)
    if not data:
        from .errors import EmptyData
        raise EmptyData(f"no calibration rows in {args.data}")
    fits = calibrate_directions(data) if len(data) > 1 else {"combined": calibrate(*data.popitem()[1])}
    for name, fit in fits.items():
        print(f"{name}: m={fit.m!r} mm/px residual_rms={fit.residual_rms:.6g} mm n={fit.n_points}")
    return EXIT_OK


def _read_manifest(path: str) -> list[dict]:
    """CSV with header image,cx,cy[,gt[,mask]]; relative paths resolve next to it."""
    base = os.path.dirname(os.path.abspath(path))
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise IOFailure(f"cannot read manifest {path}: {exc}") from exc
    out = []
    for i, row in enumerate(rows, start=2):
        try:
            item = {"image": row["image"], "cx": float(row["cx"]), "cy": float(row["cy"])}
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{path}:{i}: need image,cx,cy columns") from exc
        for k in ("gt", "mask"):
            item[k] = (row.get(k) or "").strip() or None
        for k in ("image", "gt", "mask"):
            if item[k] and not os.path.isabs(item[k]):
                item[k] = os.path.join(base, item[k])
        out.append(item)
    return out


def _batch_item(item, params, out_root, th):
    stem = os.path.splitext(os.path.basename(item["image"]))[0]
    out_dir = os.path.join(out_root, stem)
    pith = (item["cx"], item["cy"])
    det = detect_one(item["image"], pith, params, out_dir, item["mask"])
    row = {"name": stem, "rings": len(det["rings"]), "time_s": det["elapsed"]}
    if item["gt"]:
        _, rep = evaluate_files(det["json"], item["gt"], item["image"], pith, out_dir, th,
                                params.nb_rays, det["elapsed"])
        row.update(TP=rep.TP, FP=rep.FP, FN=rep.FN, P=rep.precision, R=rep.recall,
                   F=rep.fscore, RMSE=rep.rmse_overall)
    return row


def cmd_batch(args) -> int:
    items = _read_manifest(args.manifest)
    params = _params(args)
    _ensure_dir(args.output_dir)
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as ex:
            futs = [ex.submit(_batch_item, it, params, args.output_dir, args.th) for it in items]
            rows = [f.result() for f in futs]
    else:
        rows = [_batch_item(it, params, args.output_dir, args.th) for it in items]
    cols = ["name", "rings", "TP", "FP", "FN", "P", "R", "F", "RMSE", "time_s"]
    scored = [r for r in rows if "F" in r]
    if scored:
        avg = {"name": "average"}
        for k in ("P", "R", "F", "RMSE", "time_s"):
            vals = [r[k] for r in scored if r.get(k) is not None]
            avg[k] = float(np.mean(vals)) if vals else None
        rows = rows + [avg]
    path = os.path.join(args.output_dir, "summary.csv")
    buf = [",".join(cols)]
    for r in rows:
        cells = []
        for k in cols:
            v = r.get(k)
            cells.append("" if v is None else (f"{v:.4f}" if isinstance(v, float) else str(v)))
        buf.append(",".join(cells))
    _write_bytes(path, ("\n".join(buf) + "\n").encode())
    print("\n".join(buf))
    print(f"wrote {path}")
    return EXIT_OK


# --------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cstrd", description=(
        "Tree-ring detection on cross-section images, evaluation against "
        "expert annotations, and ring measurements."))
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="detect rings on one image")
    p.add_argument("--image", required=True)
    _add_pith(p)
    p.add_argument("--mask", help="single-channel PNG, 0 = background")
    p.add_argument("--output-dir", required=True)
    _add_detect_params(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="score a detection file against ground truth")
    p.add_argument("--dt", required=True, help="detection annotation JSON")
    p.add_argument("--gt", required=True, help="ground-truth annotation JSON")
    p.add_argument("--image", help="image the rings belong to")
    _add_pith(p)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--th", type=float, default=DEFAULT_TH,
                   help=f"fraction of nodes that must fall in a ring's influence area "
                        f"(default: {DEFAULT_TH})")
    _add_detect_params(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("measure", help="growth series and cardinal widths from a rings file")
    p.add_argument("--rings", required=True, help="annotation JSON")
    _add_pith(p)
    p.add_argument("--output-dir", required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--mm-per-px", type=float, help="known scale")
    g.add_argument("--calibration", help="CSV px,mm[,direction] to fit the scale from")
    _add_detect_params(p)
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("calibrate", help="fit mm per px from paired measurements")
    p.add_argument("--data", required=True, help="CSV px,mm[,direction] with header")
    _add_detect_params(p, "detection parameters (not used by this subcommand)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("batch", help="detect (and evaluate) every row of a manifest")
    p.add_argument("--manifest", required=True, help="CSV image,cx,cy[,gt[,mask]]")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--th", type=float, default=DEFAULT_TH)
    p.add_argument("--workers", type=int, default=1)
    _add_detect_params(p)
    p.set_defaults(func=cmd_batch)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        code = args.func(args)
    except CSTRDError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - report anything else as internal
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    log.info("done in %.2fs", time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
