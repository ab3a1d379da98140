#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import csv
import json
from typing import Any, Dict

from sketchfit.core.fitter import FitHistory, StepRecord
from sketchfit.errors import SketchIOError
from sketchfit.utils.fs_utils import ensure_parent_exists, sibling_path
from sketchfit.utils.logging_utils import get_logger

# Порядок ключей записи JSONL фиксирован; wall_time всегда последний
RECORD_KEYS = (
    'step', 'stage_resolution', 'lr',
    'l_sp', 'l_r', 'l_sd', 'l_vsym', 'l_isym',
    'laplacian', 'flatten', 'total',
    'disc_accuracy', 'wall_time',
)
SUMMARY_HEADER = ('steps', 'final_iou', 'asymmetry_distance', 'wall_time_sec', 'diverged')
SUMMARY_SUFFIX = '_summary.csv'


def record_to_dict(record: StepRecord) -> Dict[str, Any]:
    report = record.report
    return {
        'step': record.step,
        'stage_resolution': record.stage_resolution,
        'lr': record.lr,
        'l_sp': report.l_sp,
        'l_r': report.l_r,
        'l_sd': report.l_sd,
        'l_vsym': report.l_vsym,
        'l_isym': report.l_isym,
        'laplacian': report.laplacian,
        'flatten': report.flatten,
        'total': report.total,
        'disc_accuracy': None if record.disc is None else record.disc.accuracy,
        'wall_time': record.wall_time,
    }


class HistoryWriter:
    """Запись истории подгонки: JSONL по шагам и итоговый CSV."""

    def __init__(self):
        self.logger = get_logger('HistoryWriter')

    def write_jsonl(self, history: FitHistory, path: str) -> None:
        """Одна строка JSON на каждый выполненный шаг.

        Args:
            history: История подгонки
            path: Путь к файлу .jsonl
        """
        ensure_parent_exists(path)
        try:
            with open(path, 'w', encoding='utf-8') as f:
                for record in history.records:
                    row = record_to_dict(record)
                    f.write(json.dumps({key: row[key] for key in RECORD_KEYS}) + '\n')
        except OSError as e:
            raise SketchIOError(f"Ошибка записи истории {path}: {e}") from e
        self.logger.info(f"История подгонки сохранена: {path} ({history.steps} записей)")

    def write_summary(self, history: FitHistory, path: str) -> None:
        ensure_parent_exists(path)
        try:
            with open(path, 'w', encoding='utf-8', newline='') as f:
                writer = csv.writer(f, lineterminator='\n')
                writer.writerow(SUMMARY_HEADER)
                writer.writerow([
                    history.steps,
                    f"{history.final_iou:.6f}",
                    f"{history.final_asymmetry:.9g}",
                    f"{history.wall_time:.3f}",
                    'true' if history.diverged else 'false',
                ])
        except OSError as e:
            raise SketchIOError(f"Ошибка записи сводки {path}: {e}") from e
        self.logger.info(f"Сводка подгонки сохранена: {path}")


def write_report(history: FitHistory, path: str) -> str:
    """Пишет JSONL в path и сводку в <stem>_summary.csv рядом.

    Returns:
        Путь к файлу сводки
    """
    writer = HistoryWriter()
    writer.write_jsonl(history, path)
    summary_path = sibling_path(path, SUMMARY_SUFFIX)
    writer.write_summary(history, summary_path)
    return summary_path


def read_jsonl(path: str) -> list:
    """Читает записи JSONL в виде списка словарей."""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return [json.loads(line) for line in f if line.strip()]
    except OSError as e:
        raise SketchIOError(f"Ошибка чтения истории {path}: {e}") from e
