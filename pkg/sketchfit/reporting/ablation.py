#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Сравнительные прогоны с включением и выключением SD и SP.

Сетка конфигураций: baseline (без SD и SP), +SD, +SD+SP. Для каждой
конфигурации и каждой цели фиксируются итоговый IoU силуэта и
асимметрия подогнанной сетки.
"""

import csv
import dataclasses
import glob
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import torch
from tqdm import tqdm

from sketchfit.config import FitConfig, RenderConfig
from sketchfit.core import primitives
from sketchfit.core.fitter import MeshFitter, canonical_camera
from sketchfit.core.geometry import Mesh
from sketchfit.core.renderer import SoftRenderer, binarize
from sketchfit.core.sketch_io import SUPPORTED_EXTENSIONS, load_sketch
from sketchfit.errors import SketchIOError, ValidationError
from sketchfit.utils.fs_utils import ensure_directory_exists
from sketchfit.utils.logging_utils import get_logger

# (имя, enable_sd, enable_sp)
ABLATION_GRID: Tuple[Tuple[str, bool, bool], ...] = (
    ('baseline', False, False),
    ('+SD', True, False),
    ('+SD+SP', True, True),
)
IOU_CSV = 'ablation_iou.csv'
ASYMMETRY_CSV = 'ablation_asymmetry.csv'

logger = get_logger('Ablation')


@dataclass
class AblationResult:
    name: str
    enable_sd: bool
    enable_sp: bool
    iou: Dict[str, float] = field(default_factory=dict)
    asymmetry: Dict[str, float] = field(default_factory=dict)

    @property
    def mean_iou(self) -> float:
        return sum(self.iou.values()) / len(self.iou) if self.iou else float('nan')

    @property
    def mean_asymmetry(self) -> float:
        return sum(self.asymmetry.values()) / len(self.asymmetry) if self.asymmetry else float('nan')


def toy_targets(resolution: int, perturb: float = 0.0, seed: int = 0,
                render_cfg: Optional[RenderConfig] = None) -> Dict[str, torch.Tensor]:
    """Бинарные силуэты игрушечного набора в каноническом ракурсе.

    Args:
        resolution: Размер силуэта
        perturb: Величина асимметричного искажения целей (0 - без искажения)
        seed: Зерно искажения
    """
    renderer = SoftRenderer(render_cfg)
    cam = canonical_camera(resolution)
    targets = {}
    for name, mesh in primitives.toy_suite().items():
        if perturb > 0:
            mesh = primitives.perturb_asymmetric(mesh, perturb, seed)
        with torch.no_grad():
            targets[name] = binarize(renderer.render(mesh, cam))
    return targets


def suite_targets(suite_dir: str) -> Dict[str, torch.Tensor]:
    """Целевые силуэты всех эскизов PNG/PGM из директории, по алфавиту."""
    if not os.path.isdir(suite_dir):
        raise SketchIOError(f"Директория набора не найдена: {suite_dir}")
    paths = []
    for extension in SUPPORTED_EXTENSIONS:
        paths.extend(glob.glob(os.path.join(suite_dir, f"*{extension}")))
    if not paths:
        raise ValidationError(f"В директории {suite_dir} нет эскизов PNG или PGM")
    targets = {}
    for path in sorted(paths):
        _, target = load_sketch(path)
        targets[os.path.splitext(os.path.basename(path))[0]] = target
    return targets


class AblationRunner:
    """Прогоняет подгонку для каждой конфигурации сетки и каждой цели."""

    def __init__(self, base_cfg: FitConfig, template: Mesh, render_cfg: Optional[RenderConfig] = None,
                 grid: Sequence[Tuple[str, bool, bool]] = ABLATION_GRID):
        self.logger = get_logger('AblationRunner')
        self.base_cfg = base_cfg
        self.template = template
        self.render_cfg = render_cfg
        self.grid = tuple(grid)

    def run(self, targets: Dict[str, torch.Tensor], show_progress: bool = False) -> List[AblationResult]:
        if not targets:
            raise ValidationError("Нет целей для сравнительного прогона")
        results = []
        total = len(self.grid) * len(targets)
        with tqdm(total=total, desc="Абляция", unit="прогон", disable=not show_progress) as progress:
            for name, enable_sd, enable_sp in self.grid:
                cfg = dataclasses.replace(self.base_cfg, enable_sd=enable_sd, enable_sp=enable_sp)
                result = AblationResult(name, enable_sd, enable_sp)
                for target_name, target in targets.items():
                    fitter = MeshFitter(target, self.template, cfg, self.render_cfg)
                    _, history = fitter.run()
                    if history.diverged:
                        self.logger.warning(f"{name}/{target_name}: подгонка разошлась ({history.error})")
                    result.iou[target_name] = history.final_iou
                    result.asymmetry[target_name] = history.final_asymmetry
                    progress.update(1)
                self.logger.info(
                    f"{name}: средний IoU {result.mean_iou:.4f}, средняя асимметрия {result.mean_asymmetry:.6f}"
                )
                results.append(result)
        return results


def _write_table(results: Sequence[AblationResult], metric: str, path: str, fmt: str) -> None:
    target_names = list(getattr(results[0], metric).keys())
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['config', 'SD', 'SP'] + target_names + ['mean'])
        for result in results:
            values = getattr(result, metric)
            mean = result.mean_iou if metric == 'iou' else result.mean_asymmetry
            writer.writerow(
                [result.name, '+' if result.enable_sd else '-', '+' if result.enable_sp else '-']
                + [format(values[name], fmt) for name in target_names]
                + [format(mean, fmt)]
            )


def write_ablation_csv(results: Sequence[AblationResult], out_dir: str) -> Tuple[str, str]:
    """Пишет две таблицы: строки - конфигурации, столбцы - цели и среднее.

    Returns:
        Пути (IoU, асимметрия)
    """
    if not results:
        raise ValidationError("Нет результатов для записи")
    if not ensure_directory_exists(out_dir):
        raise SketchIOError(f"Не удалось создать директорию {out_dir}")
    iou_path = os.path.join(out_dir, IOU_CSV)
    asym_path = os.path.join(out_dir, ASYMMETRY_CSV)
    try:
        _write_table(results, 'iou', iou_path, '.4f')
        _write_table(results, 'asymmetry', asym_path, '.6g')
    except OSError as e:
        raise SketchIOError(f"Ошибка записи таблиц абляции: {e}") from e
    logger.info(f"Таблицы абляции сохранены: {iou_path}, {asym_path}")
    return iou_path, asym_path
