import json

import cv2
import numpy as np
import pytest

from cstrd import cli
from cstrd.annotation_io import load_annotation, shapes_from_points, write_annotation
from cstrd.reports import REPORT_FILES
from cstrd.rings import DetectParams
from cstrd.synthetic import make_section


@pytest.fixture(scope="module")
def section(tmp_path_factory):
    d = tmp_path_factory.mktemp("sec")
    s = make_section(size=(500, 500), n_rings=10, noise=0.0, seed=3)
    img = d / "sec.png"
    cv2.imwrite(str(img), cv2.cvtColor(s.image, cv2.COLOR_RGB2BGR))
    gt = d / "gt.json"
    write_annotation(gt, shapes_from_points(s.rings), image_height=500, image_width=500)
    return s, img, gt


def _circles(path, c, radii, n=720):
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    polys = [np.column_stack([c[0] + r * np.cos(t), c[1] + r * np.sin(t)]) for r in radii]
    write_annotation(path, shapes_from_points(polys))


def test_detect_synthetic(section, tmp_path, capsys):
    s, img, _ = section
    code = cli.main(["detect", "--image", str(img), "--cx", str(s.pith[0]), "--cy", str(s.pith[1]),
                     "--output-dir", str(tmp_path)])
    assert code == 0
    assert len(load_annotation(tmp_path / "sec.json").shapes) == 10
    assert (tmp_path / "sec_overlay.png").stat().st_size > 0
    out = capsys.readouterr().out
    assert "rings: 10" in out and "elapsed:" in out


def test_detect_is_idempotent(section, tmp_path):
    s, img, _ = section
    args = ["detect", "--image", str(img), "--cx", "250", "--cy", "250"]
    assert cli.main(args + ["--output-dir", str(tmp_path / "a")]) == 0
    assert cli.main(args + ["--output-dir", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a/sec.json").read_bytes() == (tmp_path / "b/sec.json").read_bytes()


def test_detect_blank(tmp_path):
    p = tmp_path / "blank.png"
    cv2.imwrite(str(p), np.full((200, 200, 3), 90, np.uint8))
    assert cli.main(["detect", "--image", str(p), "--cx", "100", "--cy", "100",
                     "--output-dir", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "blank.json").read_text())["shapes"] == []


def test_detect_missing_file(tmp_path, capsys):
    missing = tmp_path / "nope.png"
    assert cli.main(["detect", "--image", str(missing), "--cx", "1", "--cy", "1",
                     "--output-dir", str(tmp_path)]) == 1
    assert str(missing) in capsys.readouterr().err


def test_detect_pith_csv(section, tmp_path):
    s, img, _ = section
    pc = tmp_path / "pith.csv"
    pc.write_text(f"name,cx,cy\nsec,{s.pith[0]},{s.pith[1]}\n")
    assert cli.main(["detect", "--image", str(img), "--pith-csv", str(pc),
                     "--output-dir", str(tmp_path)]) == 0
    assert cli.main(["detect", "--image", str(img), "--output-dir", str(tmp_path)]) == 1


def test_internal_error_exit_code(section, tmp_path, monkeypatch):
    s, img, _ = section

    def boom(*a, **k):
        raise RuntimeError("unexpected")
    monkeypatch.setattr(cli, "run_detection", boom)
    assert cli.main(["detect", "--image", str(img), "--cx", "250", "--cy", "250",
                     "--output-dir", str(tmp_path)]) == 2


def test_evaluate_self(section, tmp_path, capsys):
    s, img, gt = section
    code = cli.main(["evaluate", "--dt", str(gt), "--gt", str(gt), "--image", str(img),
                     "--cx", "250", "--cy", "250", "--output-dir", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert "F1-score: 1.00" in out and "RMSE: 0.00" in out
    for name in REPORT_FILES:
        p = tmp_path / name
        assert p.stat().st_size > 0 and p.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    assert sorted(x.name for x in tmp_path.iterdir()) == sorted(REPORT_FILES)


def test_evaluate_extra_ring(section, tmp_path, capsys):
    s, img, gt = section
    ann = load_annotation(gt)
    t = np.linspace(0, 2 * np.pi, 360, endpoint=False)
    far = np.column_stack([250 + 245 * np.cos(t), 250 + 245 * np.sin(t)])
    dt = tmp_path / "dt.json"
    write_annotation(dt, ann.shapes + shapes_from_points([far]))
    assert cli.main(["evaluate", "--dt", str(dt), "--gt", str(gt), "--image", str(img),
                     "--cx", "250", "--cy", "250", "--output-dir", str(tmp_path / "r")]) == 0
    out = capsys.readouterr().out
    assert "FP: 1" in out and "Precision: 0.91" in out


def test_evaluate_bad_inputs(section, tmp_path):
    s, img, gt = section
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    base = ["--cx", "250", "--cy", "250", "--output-dir", str(tmp_path)]
    assert cli.main(["evaluate", "--dt", str(bad), "--gt", str(gt)] + base) == 1
    assert cli.main(["evaluate", "--dt", str(gt), "--gt", str(gt), "--th", "0"] + base) == 1


def test_measure(tmp_path, capsys):
    rings = tmp_path / "rings.json"
    _circles(rings, (100, 100), [10, 20, 30, 40])
    assert cli.main(["measure", "--rings", str(rings), "--cx", "100", "--cy", "100",
                     "--output-dir", str(tmp_path)]) == 0
    rows = (tmp_path / "growth.csv").read_text().splitlines()
    delta = [float(r.split(",")[3]) for r in rows[1:]]
    assert np.allclose(delta, 10, rtol=2e-3)
    first = (tmp_path / "growth.csv").read_bytes()
    assert cli.main(["measure", "--rings", str(rings), "--cx", "100", "--cy", "100",
                     "--output-dir", str(tmp_path)]) == 0
    assert (tmp_path / "growth.csv").read_bytes() == first
    assert (tmp_path / "cardinal.csv").read_text().startswith("ring_index,N_radius_px")


def test_measure_crossing(tmp_path, capsys):
    t = np.linspace(0, 2 * np.pi, 360, endpoint=False)
    a = np.column_stack([100 + 30 * np.cos(t), 100 + 10 * np.sin(t)])
    b = np.column_stack([100 + 10 * np.cos(t), 100 + 30 * np.sin(t)])
    p = tmp_path / "x.json"
    write_annotation(p, shapes_from_points([a, b]))
    assert cli.main(["measure", "--rings", str(p), "--cx", "100", "--cy", "100",
                     "--output-dir", str(tmp_path)]) == 1
    assert "NonNestedRings" in capsys.readouterr().err


def test_calibrate(tmp_path, capsys):
    p = tmp_path / "cal.csv"
    p.write_text("px,mm\n100,10\n200,20\n")
    assert cli.main(["calibrate", "--data", str(p)]) == 0
    assert "m=0.1 " in capsys.readouterr().out
    p.write_text("px,mm\n")
    assert cli.main(["calibrate", "--data", str(p)]) == 1


@pytest.mark.parametrize("sub", ["detect", "evaluate", "measure", "calibrate", "batch"])
def test_help_lists_params(sub, capsys):
    with pytest.raises(SystemExit):
        cli.main([sub, "--help"])
    text = " ".join(capsys.readouterr().out.split())
    defaults = DetectParams()
    for name in DetectParams.field_names():
        assert f"[{name}, default: {getattr(defaults, name)}]" in text


def test_batch(section, tmp_path):
    s, img, gt = section
    man = tmp_path / "m.csv"
    man.write_text(f"image,cx,cy,gt\n{img},250,250,{gt}\n{img},250,250,\n")
    assert cli.main(["batch", "--manifest", str(man), "--output-dir", str(tmp_path / "o"),
                     "--workers", "2"]) == 0
    lines = (tmp_path / "o/summary.csv").read_text().splitlines()
    assert lines[0] == "name,rings,TP,FP,FN,P,R,F,RMSE,time_s"
    assert lines[1].startswith("sec,10,10,0,0,1.0000,1.0000,1.0000")
    assert lines[2].startswith("sec,10,,,")
    assert lines[3].startswith("average")
