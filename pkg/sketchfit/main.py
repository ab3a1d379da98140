#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import argparse
import dataclasses
import logging
import os
import sys
from typing import List, Optional, Sequence

from sketchfit.config import RunConfig, load_run_config
from sketchfit.core import primitives
from sketchfit.core.fitter import MeshFitter
from sketchfit.core.geometry import Mesh, icosphere, voxel_iou
from sketchfit.core.gradcheck import GRADCHECK_TERMS, run_gradcheck_suite
from sketchfit.core.mesh_io import load_obj, save_obj
from sketchfit.core.renderer import (
    DEFAULT_DISTANCE, DEFAULT_FOV, SoftRenderer, camera_from_angles,
)
from sketchfit.core.sketch_io import SKETCH_MODES, load_sketch, save_silhouette, save_sketch, synth_sketch
from sketchfit.errors import NumericError, SketchFitError, ValidationError
from sketchfit.reporting.ablation import AblationRunner, suite_targets, toy_targets, write_ablation_csv
from sketchfit.reporting.history_writer import write_report
from sketchfit.reporting.report_generator import ReportGenerator
from sketchfit.utils.fs_utils import ensure_directory_exists, get_unique_output_dir
from sketchfit.utils.logging_utils import setup_logging


class UsageError(ValidationError):
    """Некорректные аргументы командной строки."""


class CliArgumentParser(argparse.ArgumentParser):
    """argparse с кодом возврата 1 вместо 2 для ошибок использования."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _resolutions(text: str) -> tuple:
    try:
        return tuple(int(item) for item in text.split(',') if item.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"ожидается список чисел через запятую: {text}") from None


def parse_arguments(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """Парсинг аргументов командной строки."""
    common = CliArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true",
                        help="Включить подробный вывод для отладки.")
    common.add_argument("--log-file",
                        help="Путь к файлу для записи логов. Если не указан, логи выводятся только в консоль.")
    common.add_argument("--config", help="Файл конфигурации 'ключ = значение'.")

    parser = CliArgumentParser(description="Восстановление 3D-сетки по силуэту эскиза.")
    commands = parser.add_subparsers(dest="command", required=True)

    fit = commands.add_parser("fit", parents=[common], help="Подогнать шаблон под эскиз.")
    fit.add_argument("sketch", help="Эскиз: 8-битный PNG или PGM.")
    fit.add_argument("--template", help="Шаблон OBJ (по умолчанию икосфера).")
    fit.add_argument("-o", "--output", default="userdata",
                     help="Базовая директория для папок с результатами (по умолчанию: userdata).")
    fit.add_argument("--out", dest="out_obj", help="Путь к итоговому OBJ.")
    fit.add_argument("--history", help="Путь к истории JSONL.")
    fit.add_argument("--steps", type=int, help="Число шагов оптимизации.")
    fit.add_argument("--seed", type=int, help="Зерно генераторов случайных чисел.")
    fit.add_argument("--lr", type=float, help="Начальная скорость обучения.")
    fit.add_argument("--resolutions", type=_resolutions, help="Разрешения стадий, например 32,64,128.")
    fit.add_argument("--no-sd", action="store_true", help="Выключить дискриминатор формы.")
    fit.add_argument("--no-sp", action="store_true", help="Выключить априорную симметрию.")
    fit.add_argument("--no-report", action="store_true", help="Не создавать HTML-отчет.")

    render = commands.add_parser("render", parents=[common], help="Отрендерить силуэт сетки.")
    render.add_argument("mesh", help="Сетка OBJ.")
    render.add_argument("--az", type=float, default=0.0, help="Азимут, градусы.")
    render.add_argument("--el", type=float, default=0.0, help="Возвышение, градусы.")
    render.add_argument("--res", type=int, default=64, help="Размер изображения.")
    render.add_argument("--distance", type=float, default=DEFAULT_DISTANCE)
    render.add_argument("--fov", type=float, default=DEFAULT_FOV, help="Полный угол обзора, градусы.")
    render.add_argument("--out", required=True, help="Путь к PNG.")

    grad = commands.add_parser("gradcheck", parents=[common], help="Сверить градиенты с конечными разностями.")
    grad.add_argument("--term", default="all", choices=("all", *GRADCHECK_TERMS))
    grad.add_argument("--mesh", help="Сетка OBJ (по умолчанию искаженная икосфера 1).")
    grad.add_argument("--res", type=int, default=16)
    grad.add_argument("--step-size", dest="h", type=float, default=1e-4, help="Шаг конечных разностей.")
    grad.add_argument("--tol", type=float, default=1e-3)
    grad.add_argument("--seed", type=int, default=0)

    evaluate = commands.add_parser("eval", parents=[common], help="Voxel IoU двух сеток.")
    evaluate.add_argument("--pred", required=True, help="Предсказанная сетка OBJ.")
    evaluate.add_argument("--gt", required=True, help="Эталонная сетка OBJ.")
    evaluate.add_argument("--res", type=int, default=32)

    synth = commands.add_parser("synth", parents=[common], help="Синтетический эскиз сетки.")
    synth.add_argument("--mesh", required=True, help="Сетка OBJ.")
    synth.add_argument("--mode", default="silhouette", choices=SKETCH_MODES)
    synth.add_argument("--az", type=float, default=0.0)
    synth.add_argument("--el", type=float, default=0.0)
    synth.add_argument("--res", type=int, default=128)
    synth.add_argument("--out", required=True, help="Путь к PNG или PGM.")

    ablate = commands.add_parser("ablate", parents=[common], help="Сравнительные прогоны SD/SP.")
    ablate.add_argument("--suite", help="Директория с эскизами (по умолчанию игрушечный набор).")
    ablate.add_argument("-o", "--output", default="userdata/ablation", help="Директория для таблиц.")
    ablate.add_argument("--steps", type=int, help="Число шагов на прогон.")
    ablate.add_argument("--res", type=int, default=64, help="Разрешение игрушечных целей.")
    ablate.add_argument("--perturb", type=float, default=0.0,
                        help="Асимметричное искажение игрушечных целей.")

    return parser.parse_args(argv)


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """Конфигурация из файла с переопределениями из командной строки."""
    config = load_run_config(args.config) if args.config else RunConfig()
    fit = config.fit
    overrides = {}
    for name, field_name in (('steps', 'steps'), ('seed', 'seed'), ('lr', 'base_lr'), ('resolutions', 'resolutions')):
        value = getattr(args, name, None)
        if value is not None:
            overrides[field_name] = value
    if getattr(args, 'no_sd', False):
        overrides['enable_sd'] = False
    if getattr(args, 'no_sp', False):
        overrides['enable_sp'] = False
    if overrides:
        fit = dataclasses.replace(fit, **overrides)
    config = dataclasses.replace(config, fit=fit)
    config.validate()
    return config


def _template(args: argparse.Namespace, config: RunConfig) -> Mesh:
    if getattr(args, 'template', None):
        return load_obj(args.template)
    return icosphere(config.template_subdivisions)


def run_fit(args: argparse.Namespace) -> int:
    """Полный цикл: эскиз -> подгонка -> OBJ, история, отчет."""
    logger = logging.getLogger('SketchFit')
    config = build_run_config(args)
    _, target = load_sketch(args.sketch)
    template = _template(args, config)

    base_name = os.path.splitext(os.path.basename(args.sketch))[0]
    run_output_dir = get_unique_output_dir(args.output, base_name)
    if not ensure_directory_exists(run_output_dir):
        return 1
    logger.info(f"Результаты будут сохранены в: {run_output_dir}")

    fitter = MeshFitter(target, template, config.fit, config.render)
    mesh, history = fitter.run(show_progress=True)

    obj_path = args.out_obj or os.path.join(run_output_dir, f"{base_name}.obj")
    history_path = args.history or os.path.join(run_output_dir, "history.jsonl")
    save_obj(mesh, obj_path)
    write_report(history, history_path)

    snapshot_files = []
    for snap in history.snapshots:
        image_name = f"stage_{snap.stage + 1}_{snap.resolution}px.png"
        save_silhouette(snap.render, os.path.join(run_output_dir, image_name))
        save_obj(snap.mesh, os.path.join(run_output_dir, f"stage_{snap.stage + 1}.obj"))
        snapshot_files.append((snap, image_name))

    if not args.no_report:
        mesh_link = os.path.relpath(obj_path, run_output_dir)
        ReportGenerator().create_fit_report(history, os.path.join(run_output_dir, "report.html"),
                                            f"Подгонка: {base_name}", snapshot_files, mesh_link)

    if history.diverged:
        logger.error(f"Подгонка разошлась: {history.error}")
        return NumericError.exit_code
    print(f"IoU {history.final_iou:.4f}  асимметрия {history.final_asymmetry:.6f}")
    return 0


def run_render(args: argparse.Namespace) -> int:
    config = build_run_config(args)
    mesh = load_obj(args.mesh)
    cam = camera_from_angles(args.az, args.el, args.distance, args.res, args.fov)
    silhouette = SoftRenderer(config.render).render(mesh, cam)
    save_silhouette(silhouette, args.out)
    logging.getLogger('SketchFit').info(f"Силуэт сохранен: {args.out}")
    return 0


def run_gradcheck(args: argparse.Namespace) -> int:
    config = build_run_config(args)
    if args.mesh:
        mesh = load_obj(args.mesh)
    else:
        mesh = primitives.perturb_asymmetric(icosphere(1), 0.1, seed=args.seed)
    terms: List[str] = list(GRADCHECK_TERMS) if args.term == 'all' else [args.term]
    results = run_gradcheck_suite(mesh, terms, args.res, args.h, args.seed, config.render)

    failed = False
    for term, result in results.items():
        status = "OK" if result.passed(args.tol) else "FAIL"
        failed = failed or not result.passed(args.tol)
        print(f"{term:<6} {result.max_rel_error:.3e}  {status}  "
              f"(негладких {len(result.non_smooth)} из {result.checked})")
    return NumericError.exit_code if failed else 0


def run_eval(args: argparse.Namespace) -> int:
    iou = voxel_iou(load_obj(args.pred), load_obj(args.gt), args.res)
    print(f"{iou:.4f}")
    return 0


def run_synth(args: argparse.Namespace) -> int:
    config = build_run_config(args)
    mesh = load_obj(args.mesh)
    cam = camera_from_angles(args.az, args.el, image_size=args.res)
    save_sketch(synth_sketch(mesh, cam, args.mode, config.render), args.out)
    logging.getLogger('SketchFit').info(f"Эскиз сохранен: {args.out}")
    return 0


def run_ablate(args: argparse.Namespace) -> int:
    config = build_run_config(args)
    if args.suite:
        targets = suite_targets(args.suite)
    else:
        targets = toy_targets(args.res, args.perturb, config.fit.seed, config.render)
    template = icosphere(config.template_subdivisions)
    results = AblationRunner(config.fit, template, config.render).run(targets, show_progress=True)
    write_ablation_csv(results, args.output)
    for result in results:
        print(f"{result.name:<8} IoU {result.mean_iou:.4f}  асимметрия {result.mean_asymmetry:.6g}")
    return 0


COMMANDS = {
    'fit': run_fit,
    'render': run_render,
    'gradcheck': run_gradcheck,
    'eval': run_eval,
    'synth': run_synth,
    'ablate': run_ablate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Точка входа в приложение."""
    try:
        args = parse_arguments(argv)
    except UsageError as e:
        print(f"Ошибка: {e}", file=sys.stderr)
        return UsageError.exit_code
    except SystemExit as e:
        return int(e.code or 0)

    setup_logging(args.verbose, args.log_file)
    logger = logging.getLogger('SketchFit')

    try:
        logger.debug(f"SketchFit: команда {args.command}")
        return COMMANDS[args.command](args)
    except SketchFitError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except KeyboardInterrupt:
        logger.info("Прервано пользователем.")
        return 130
    except Exception as e:
        logger.exception(f"Необработанная ошибка: {e}")
        return 1


cli_main = main

if __name__ == "__main__":
    sys.exit(main())
