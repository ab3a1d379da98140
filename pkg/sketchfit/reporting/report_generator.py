#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import os
import shutil
from typing import Any, Dict, List, Optional, Sequence, Tuple

from jinja2 import Environment, FileSystemLoader, select_autoescape

from sketchfit.core.fitter import FitHistory, StageSnapshot
from sketchfit.utils.fs_utils import ensure_directory_exists
from sketchfit.utils.logging_utils import get_logger
from sketchfit.utils.time_utils import format_duration

MAX_LOSS_ROWS = 50


def thin_records(history: FitHistory, max_rows: int = MAX_LOSS_ROWS) -> List[Dict[str, Any]]:
    """Прореживает записи до max_rows строк, последний шаг всегда включается."""
    records = history.records
    if not records:
        return []
    stride = max(1, -(-len(records) // max_rows))
    picked = list(records[::stride])
    if picked[-1] is not records[-1]:
        picked.append(records[-1])
    return [
        {
            'step': r.step,
            'resolution': r.stage_resolution,
            'lr': f"{r.lr:.3g}",
            'l_sp': f"{r.report.l_sp:.5f}",
            'l_r': f"{r.report.l_r:.5f}",
            'l_sd': f"{r.report.l_sd:.5f}",
            'l_vsym': f"{r.report.l_vsym:.6f}",
            'l_isym': f"{r.report.l_isym:.5f}",
            'total': f"{r.report.total:.5f}",
        }
        for r in picked
    ]


class ReportGenerator:
    """Класс для генерации HTML-отчетов о подгонке."""

    def __init__(self, template_path="templates"):
        """Инициализация генератора отчетов."""
        self.logger = get_logger('ReportGenerator')
        self.template_dir = os.path.join(os.path.dirname(__file__), template_path)
        self.template_name = "fit_report.html"

        self.use_jinja = False
        self.env = None
        try:
            template_file = os.path.join(self.template_dir, self.template_name)
            if not os.path.exists(template_file):
                raise FileNotFoundError(f"Файл шаблона не найден: {template_file}")

            self.env = Environment(
                loader=FileSystemLoader(self.template_dir),
                autoescape=select_autoescape(['html', 'xml'])
            )
            self.env.get_template(self.template_name)
            self.use_jinja = True
            self.logger.debug("Шаблонизатор Jinja2 успешно инициализирован.")
        except Exception as e:
            self.logger.warning(f"Не удалось инициализировать Jinja2. Будет использован базовый генератор HTML. Ошибка: {e}")

    def create_fit_report(self, history: FitHistory, html_path: str, title: str,
                          snapshots: Sequence[Tuple[StageSnapshot, str]] = (),
                          mesh_file: Optional[str] = None) -> bool:
        """Создает HTML-отчет о подгонке.

        Args:
            history: История подгонки
            html_path: Путь для сохранения HTML файла
            title: Заголовок (обычно имя эскиза)
            snapshots: Пары (снимок стадии, имя файла PNG рядом с отчетом)
            mesh_file: Имя итогового OBJ рядом с отчетом

        Returns:
            True если отчет создан успешно, иначе False
        """
        self.logger.info(f"Генерация HTML отчета: {html_path}")
        report_dir = os.path.dirname(os.path.abspath(html_path))
        if not ensure_directory_exists(report_dir):
            return False

        summary = {
            'steps': history.steps,
            'final_iou': f"{history.final_iou:.4f}",
            'asymmetry': f"{history.final_asymmetry:.6f}",
            'wall_time': format_duration(history.wall_time),
            'diverged': history.diverged,
            'error': history.error,
        }
        stages = [
            {'stage': snap.stage + 1, 'resolution': snap.resolution, 'step': snap.step,
             'iou': f"{snap.iou:.4f}", 'image': image}
            for snap, image in snapshots
        ]
        rows = thin_records(history)

        if self.use_jinja and self.env:
            try:
                src_css_path = os.path.join(self.template_dir, 'styles.css')
                shutil.copy2(src_css_path, os.path.join(report_dir, 'styles.css'))

                template = self.env.get_template(self.template_name)
                html_content = template.render(title=title, summary=summary, stages=stages,
                                               rows=rows, mesh_file=mesh_file)
                with open(html_path, 'w', encoding='utf-8') as f:
                    f.write(html_content)

                self.logger.info(f"HTML отчет успешно сохранен: {html_path}")
                return True
            except Exception as e:
                self.logger.error(f"Ошибка при создании HTML отчета с помощью Jinja2: {e}")

        return self._write_basic_report(html_path, title, summary, stages, rows, mesh_file)

    def _write_basic_report(self, html_path: str, title: str, summary: Dict[str, Any],
                            stages: List[Dict[str, Any]], rows: List[Dict[str, Any]],
                            mesh_file: Optional[str]) -> bool:
        """Запасной вариант - HTML без шаблонизатора."""
        try:
            html_content = f"""<!DOCTYPE html>
<html lang="ru">
<head>
    <meta charset="UTF-8">
    <title>{title}</title>
    <style>
        body {{ font-family: sans-serif; }}
        table {{ border-collapse: collapse; margin-top: 20px; }}
        th, td {{ border: 1px solid #ddd; padding: 6px; text-align: right; }}
        th {{ background-color: #f2f2f2; }}
        img {{ width: 256px; image-rendering: pixelated; }}
    </style>
</head>
<body>
    <h1>{title}</h1>
    <p>Шагов: {summary['steps']}, IoU: {summary['final_iou']}, асимметрия: {summary['asymmetry']},
       время: {summary['wall_time']}</p>
"""
            if summary['diverged']:
                html_content += f"    <p><b>Подгонка разошлась:</b> {summary['error']}</p>\n"
            if mesh_file:
                html_content += f'    <p>Сетка: <a href="{mesh_file}">{mesh_file}</a></p>\n'

            html_content += "    <h2>Стадии</h2>\n    <table>\n"
            html_content += "        <tr><th>Стадия</th><th>Разрешение</th><th>Шаг</th><th>IoU</th><th>Силуэт</th></tr>\n"
            for stage in stages:
                html_content += (
                    f"        <tr><td>{stage['stage']}</td><td>{stage['resolution']}</td>"
                    f"<td>{stage['step']}</td><td>{stage['iou']}</td>"
                    f"<td><img src=\"{stage['image']}\" alt=\"Стадия {stage['stage']}\"></td></tr>\n"
                )
            html_content += "    </table>\n"

            html_content += "    <h2>Потери</h2>\n    <table>\n        <tr>"
            columns = ('step', 'resolution', 'lr', 'l_sp', 'l_r', 'l_sd', 'l_vsym', 'l_isym', 'total')
            html_content += ''.join(f"<th>{c}</th>" for c in columns) + "</tr>\n"
            for row in rows:
                html_content += "        <tr>" + ''.join(f"<td>{row[c]}</td>" for c in columns) + "</tr>\n"
            html_content += """    </table>
</body>
</html>"""

            with open(html_path, 'w', encoding='utf-8') as f:
                f.write(html_content)

            self.logger.info(f"HTML отчет успешно сохранен: {html_path}")
            return True
        except IOError as e:
            self.logger.error(f"Ошибка записи HTML отчета {html_path}: {e}")
            return False
