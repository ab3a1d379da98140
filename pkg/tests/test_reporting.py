#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import csv
import math
import os
import re

import pytest
import torch

from sketchfit.config import FitConfig, LossWeights
from sketchfit.core.discriminator import DiscStepMetrics
from sketchfit.core.fitter import FitHistory, StageSnapshot, StepRecord, fit
from sketchfit.core.geometry import icosphere
from sketchfit.core.losses import LossReport
from sketchfit.core.renderer import camera_from_angles
from sketchfit.core.sketch_io import save_sketch, synth_sketch
from sketchfit.reporting.ablation import (
    ASYMMETRY_CSV, IOU_CSV, AblationResult, AblationRunner, suite_targets, toy_targets, write_ablation_csv,
)
from sketchfit.reporting.history_writer import RECORD_KEYS, read_jsonl, write_report
from sketchfit.reporting.report_generator import ReportGenerator, thin_records
from sketchfit.errors import SketchIOError, ValidationError


def _history(steps=3, diverged=False):
    records = []
    for step in range(steps):
        report = LossReport(l_sp=0.5 - 0.1 * step, l_r=0.01, l_sd=-1.3, l_vsym=1e-4, l_isym=0.2,
                            total=0.7 - 0.1 * step, laplacian=0.05, flatten=0.4)
        disc = DiscStepMetrics(-1.3, 1.3, 1.0, 0.5) if step % 2 else None
        records.append(StepRecord(step, 32, 1e-4, report, 0.1 * (step + 1), disc))
    snapshot = StageSnapshot(0, 32, steps, icosphere(0), torch.zeros(32, 32, dtype=torch.float64), 0.75)
    return FitHistory(records, [snapshot], final_iou=0.8125, final_asymmetry=1.5e-5, wall_time=2.25,
                      diverged=diverged, error="Слагаемое 'total' не конечно" if diverged else None)


def test_history_jsonl_and_summary(tmp_path):
    path = str(tmp_path / "run" / "history.jsonl")
    summary_path = write_report(_history(), path)
    assert summary_path == str(tmp_path / "run" / "history_summary.csv")

    rows = read_jsonl(path)
    assert len(rows) == 3
    assert tuple(rows[0].keys()) == RECORD_KEYS
    assert list(rows[0])[-1] == 'wall_time'
    assert rows[0]['disc_accuracy'] is None
    assert rows[1]['disc_accuracy'] == pytest.approx(0.75)
    assert rows[2]['total'] == pytest.approx(0.5)

    with open(summary_path, encoding='utf-8') as f:
        table = list(csv.reader(f))
    assert table[0] == ['steps', 'final_iou', 'asymmetry_distance', 'wall_time_sec', 'diverged']
    assert table[1] == ['3', '0.812500', '1.5e-05', '2.250', 'false']


def test_diverged_summary(tmp_path):
    summary_path = write_report(_history(steps=1, diverged=True), str(tmp_path / "h.jsonl"))
    with open(summary_path, encoding='utf-8') as f:
        assert list(csv.reader(f))[1][-1] == 'true'


def test_rerun_history_identical_except_wall_time(tmp_path):
    target = toy_targets(16)['cube']
    cfg = FitConfig(resolutions=(16,), steps=3, sd_views=2, isym_views=2, sd_resolution=16)
    paths = []
    for run in ('a', 'b'):
        _, history = fit(target, icosphere(1), cfg)
        paths.append(str(tmp_path / run / "history.jsonl"))
        write_report(history, paths[-1])

    lines = []
    for path in paths:
        with open(path, encoding='utf-8') as f:
            lines.append([re.sub(r'"wall_time": [^,}]+', '"wall_time": 0', line) for line in f])
    assert len(lines[0]) == 3
    assert lines[0] == lines[1]


def test_thin_records_keeps_last_step():
    rows = thin_records(_history(steps=120), max_rows=50)
    assert len(rows) <= 51
    assert rows[0]['step'] == 0
    assert rows[-1]['step'] == 119
    assert thin_records(FitHistory()) == []


def test_html_report_with_templates(tmp_path):
    history = _history(diverged=True)
    html_path = str(tmp_path / "report" / "report.html")
    generator = ReportGenerator()
    assert generator.use_jinja
    assert generator.create_fit_report(history, html_path, "Подгонка: cube",
                                       [(history.snapshots[0], "stage_1_32px.png")], "cube.obj")
    text = open(html_path, encoding='utf-8').read()
    assert "Подгонка: cube" in text
    assert "stage_1_32px.png" in text
    assert "cube.obj" in text
    assert "0.8125" in text
    assert os.path.isfile(str(tmp_path / "report" / "styles.css"))


def test_html_report_fallback(tmp_path):
    generator = ReportGenerator(template_path="no_such_templates")
    assert not generator.use_jinja
    html_path = str(tmp_path / "basic.html")
    assert generator.create_fit_report(_history(), html_path, "basic")
    text = open(html_path, encoding='utf-8').read()
    assert "<h1>basic</h1>" in text
    assert "0.8125" in text


def test_ablation_csv_layout(tmp_path):
    results = [
        AblationResult('baseline', False, False, {'cube': 0.9, 'egg': 0.8}, {'cube': 1e-3, 'egg': 2e-3}),
        AblationResult('+SD+SP', True, True, {'cube': 0.95, 'egg': 0.85}, {'cube': 1e-5, 'egg': 3e-5}),
    ]
    iou_path, asym_path = write_ablation_csv(results, str(tmp_path / "abl"))
    assert os.path.basename(iou_path) == IOU_CSV
    assert os.path.basename(asym_path) == ASYMMETRY_CSV
    with open(iou_path, encoding='utf-8') as f:
        table = list(csv.reader(f))
    assert table[0] == ['config', 'SD', 'SP', 'cube', 'egg', 'mean']
    assert table[1] == ['baseline', '-', '-', '0.9000', '0.8000', '0.8500']
    assert table[2][:3] == ['+SD+SP', '+', '+']
    with pytest.raises(ValidationError):
        write_ablation_csv([], str(tmp_path))


def test_ablation_result_means():
    empty = AblationResult('x', False, False)
    assert math.isnan(empty.mean_iou)
    full = AblationResult('x', False, False, {'a': 1.0, 'b': 0.5}, {'a': 0.0, 'b': 1.0})
    assert full.mean_iou == 0.75
    assert full.mean_asymmetry == 0.5


def test_toy_targets():
    targets = toy_targets(32)
    assert list(targets) == ['cube', 'slab', 'tower', 'egg', 'disc']
    for target in targets.values():
        assert target.shape == (32, 32)
        assert set(target.unique().tolist()) == {0.0, 1.0}
    perturbed = toy_targets(32, perturb=0.4)
    assert not torch.equal(perturbed['cube'], targets['cube'])


def test_suite_targets(tmp_path):
    cam = camera_from_angles(0, 0, image_size=32)
    save_sketch(synth_sketch(icosphere(1), cam), str(tmp_path / "b.png"))
    save_sketch(synth_sketch(icosphere(1).scaled(0.5), cam), str(tmp_path / "a.pgm"))
    (tmp_path / "notes.txt").write_text("skip me", encoding='utf-8')
    targets = suite_targets(str(tmp_path))
    assert list(targets) == ['a', 'b']
    with pytest.raises(SketchIOError):
        suite_targets(str(tmp_path / "missing"))
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(ValidationError):
        suite_targets(str(empty))


@pytest.mark.slow
def test_symmetry_prior_ablation_direction():
    targets = toy_targets(32, perturb=0.4)
    cfg = FitConfig(resolutions=(32,), steps=80, base_lr=0.01)
    grid = (('baseline', False, False), ('+SP', False, True))
    baseline, with_sp = AblationRunner(cfg, icosphere(2), grid=grid).run(targets)
    assert set(baseline.iou) == set(targets)
    assert with_sp.mean_asymmetry < baseline.mean_asymmetry


@pytest.mark.slow
def test_ablation_grid_keeps_iou_and_lowers_asymmetry():
    weights = LossWeights(lambda_laplacian=0.1, lambda_flatten=0.01)
    cfg = FitConfig(weights=weights, resolutions=(32,), steps=300, base_lr=0.01, lr_decay=0.3, lr_period=100,
                    sd_resolution=32)
    runner = AblationRunner(cfg, icosphere(2))

    baseline, with_sd, with_sd_sp = runner.run(toy_targets(32))
    assert [r.name for r in (baseline, with_sd, with_sd_sp)] == ['baseline', '+SD', '+SD+SP']
    assert with_sd_sp.mean_iou >= baseline.mean_iou - 0.01

    _, with_sd, with_sd_sp = runner.run(toy_targets(32, perturb=0.4))
    assert with_sd_sp.mean_asymmetry < with_sd.mean_asymmetry
