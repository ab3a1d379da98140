#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import csv
import os

import cv2
import pytest

from sketchfit.core import primitives
from sketchfit.core.geometry import icosphere
from sketchfit.core.mesh_io import save_obj
from sketchfit.main import main

FAST_CONFIG = "steps = 4\nresolutions = 16, 32\ntemplate_subdivisions = 1\nenable_sd = false\n"


@pytest.fixture
def workdir(tmp_path):
    save_obj(icosphere(1), str(tmp_path / "sphere.obj"))
    save_obj(primitives.cube(1.0), str(tmp_path / "cube.obj"))
    (tmp_path / "fast.cfg").write_text(FAST_CONFIG, encoding='utf-8')
    return tmp_path


def test_render(workdir):
    out = str(workdir / "sil.png")
    assert main(['render', str(workdir / "sphere.obj"), '--az', '30', '--res', '32', '--out', out]) == 0
    image = cv2.imread(out, cv2.IMREAD_UNCHANGED)
    assert image.shape == (32, 32)
    assert image[16, 16] == 255


def test_eval_prints_iou(workdir, capsys):
    cube = str(workdir / "cube.obj")
    assert main(['eval', '--pred', cube, '--gt', cube, '--res', '16']) == 0
    assert capsys.readouterr().out.strip() == "1.0000"


def test_synth_then_fit(workdir):
    sketch = str(workdir / "cube_sketch.png")
    assert main(['synth', '--mesh', str(workdir / "cube.obj"), '--res', '32', '--out', sketch]) == 0

    out_dir = str(workdir / "runs")
    code = main(['fit', sketch, '--config', str(workdir / "fast.cfg"), '-o', out_dir, '--seed', '3'])
    assert code == 0
    run_dir = os.path.join(out_dir, "cube_sketch")
    for name in ("cube_sketch.obj", "history.jsonl", "history_summary.csv", "report.html",
                 "stage_1_16px.png", "stage_2_32px.png", "stage_2.obj"):
        assert os.path.isfile(os.path.join(run_dir, name)), name
    with open(os.path.join(run_dir, "history_summary.csv"), encoding='utf-8') as f:
        assert list(csv.reader(f))[1][0] == '4'

    # Повторный запуск не перезаписывает предыдущий
    assert main(['fit', sketch, '--config', str(workdir / "fast.cfg"), '-o', out_dir, '--no-report']) == 0
    assert os.path.isdir(os.path.join(out_dir, "cube_sketch (1)"))


def test_fit_explicit_outputs(workdir):
    sketch = str(workdir / "s.pgm")
    assert main(['synth', '--mesh', str(workdir / "sphere.obj"), '--mode', 'edge', '--res', '32',
                 '--out', sketch]) == 0
    obj = str(workdir / "explicit" / "fit.obj")
    history = str(workdir / "explicit" / "log.jsonl")
    assert main(['fit', sketch, '--config', str(workdir / "fast.cfg"), '-o', str(workdir / "runs"),
                 '--template', str(workdir / "sphere.obj"), '--out', obj, '--history', history,
                 '--no-sp', '--no-report']) == 0
    assert os.path.isfile(obj)
    assert os.path.isfile(str(workdir / "explicit" / "log_summary.csv"))


def test_gradcheck_single_term(capsys):
    assert main(['gradcheck', '--term', 'lap']) == 0
    out = capsys.readouterr().out
    assert out.startswith("lap")
    assert "OK" in out


@pytest.mark.slow
def test_gradcheck_all_terms_pass(capsys):
    assert main(['gradcheck', '--term', 'all']) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 8
    assert all("OK" in line for line in lines)


def test_usage_errors_exit_one(workdir):
    assert main([]) == 1
    assert main(['render']) == 1
    assert main(['gradcheck', '--term', 'bogus']) == 1
    assert main(['fit', str(workdir / "missing.png")]) == 1
    assert main(['render', str(workdir / "sphere.obj"), '--res', '12', '--out', str(workdir / "x.png")]) == 1


def test_bad_config_exit_one(workdir):
    bad = workdir / "bad.cfg"
    bad.write_text("steps = many\n", encoding='utf-8')
    assert main(['render', str(workdir / "sphere.obj"), '--config', str(bad), '--out', str(workdir / "y.png")]) == 1


def test_help_exits_zero(capsys):
    assert main(['--help']) == 0
    assert "fit" in capsys.readouterr().out
