#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Чтение и запись треугольных сеток в формате Wavefront OBJ.

Поддерживаются только записи `v` и треугольные `f` с положительными
индексами (с единицы). Служебные записи (vt, vn, o, g, s, usemtl)
пропускаются, любая другая запись - ошибка формата.
"""

import os

import numpy as np

from sketchfit.core.geometry import Mesh
from sketchfit.errors import FormatError, SketchIOError, ValidationError
from sketchfit.utils.fs_utils import ensure_parent_exists
from sketchfit.utils.logging_utils import get_logger

logger = get_logger('MeshIO')

_IGNORED_RECORDS = {'vt', 'vn', 'vp', 'o', 'g', 's', 'usemtl', 'mtllib', 'l'}


def save_obj(mesh: Mesh, path: str) -> None:
    """Записывает сетку; координаты с 9 значащими цифрами."""
    mesh.validate()
    ensure_parent_exists(path)
    vertices = mesh.vertices.detach().cpu().numpy()
    faces = mesh.faces.cpu().numpy() + 1
    with open(path, 'w', encoding='utf-8') as f:
        f.write(f"# sketchfit: {len(vertices)} vertices, {len(faces)} faces\n")
        for x, y, z in vertices:
            f.write(f"v {x:.9g} {y:.9g} {z:.9g}\n")
        for a, b, c in faces:
            f.write(f"f {a} {b} {c}\n")
    logger.debug(f"OBJ сохранен: {path}")


def _parse_index(token: str, vertex_count: int, line_no: int) -> int:
    head = token.split('/', 1)[0]
    try:
        index = int(head)
    except ValueError:
        raise FormatError(f"Строка {line_no}: некорректный индекс '{token}'") from None
    if index < 0:
        raise FormatError(f"Строка {line_no}: отрицательные индексы не поддерживаются")
    if index == 0 or index > vertex_count:
        raise FormatError(f"Строка {line_no}: индекс {index} вне диапазона 1..{vertex_count}")
    return index - 1


def load_obj(path: str) -> Mesh:
    """Читает сетку из OBJ.

    Индексы граней проверяются по числу вершин, объявленных в файле
    целиком, поэтому порядок записей v и f не важен.

    Raises:
        SketchIOError: Файл не найден или не читается
        FormatError: Нетреугольная грань, некорректный индекс или запись
    """
    if not os.path.isfile(path):
        raise SketchIOError(f"Файл сетки не найден: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            lines = f.readlines()
    except (OSError, UnicodeDecodeError) as e:
        raise SketchIOError(f"Не удалось прочитать {path}: {e}") from e

    vertices = []
    face_records = []
    for line_no, line in enumerate(lines, start=1):
        parts = line.split('#', 1)[0].split()
        if not parts:
            continue
        record, args = parts[0], parts[1:]
        if record == 'v':
            if len(args) < 3:
                raise FormatError(f"Строка {line_no}: у вершины меньше трех координат")
            try:
                vertices.append([float(value) for value in args[:3]])
            except ValueError:
                raise FormatError(f"Строка {line_no}: некорректная координата") from None
        elif record == 'f':
            if len(args) != 3:
                raise FormatError(f"Строка {line_no}: поддерживаются только треугольники, вершин: {len(args)}")
            face_records.append((line_no, args))
        elif record not in _IGNORED_RECORDS:
            raise FormatError(f"Строка {line_no}: неизвестная запись '{record}'")

    faces = [[_parse_index(token, len(vertices), line_no) for token in args] for line_no, args in face_records]
    try:
        mesh = Mesh.from_arrays(np.asarray(vertices, dtype=np.float64).reshape(-1, 3),
                                np.asarray(faces, dtype=np.int64).reshape(-1, 3))
    except ValidationError as e:
        raise FormatError(f"Некорректная сетка в {path}: {e}") from e
    logger.debug(f"OBJ загружен: {path} ({mesh.num_vertices} вершин, {mesh.num_faces} граней)")
    return mesh
