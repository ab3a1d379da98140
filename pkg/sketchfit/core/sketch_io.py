#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Эскизы: чтение, заливка внутренней области, синтез из сетки, запись.

Соглашение эскиза: 0 - штрих, 1 - фон. Пиксель исходного изображения
со значением < 128 считается штрихом.
"""

import os
from dataclasses import dataclass
from typing import Optional, Tuple

import cv2
import numpy as np
import torch

from sketchfit.config import RenderConfig
from sketchfit.core.geometry import DTYPE, Mesh
from sketchfit.core.renderer import Camera, soft_silhouette
from sketchfit.errors import DegenerateInputError, FormatError, SketchIOError, ValidationError
from sketchfit.utils.fs_utils import ensure_parent_exists
from sketchfit.utils.logging_utils import get_logger

STROKE_THRESHOLD = 128
SUPPORTED_EXTENSIONS = ('.png', '.pgm')
SKETCH_MODES = ('silhouette', 'edge')
_OUTSIDE = 128

logger = get_logger('SketchIO')


@dataclass(frozen=True)
class SketchImage:
    """Бинарный эскиз H×W: uint8, 0 - штрих, 1 - фон."""

    pixels: np.ndarray

    def __post_init__(self):
        if self.pixels.ndim != 2:
            raise FormatError(f"Эскиз должен быть двумерным, получено {self.pixels.shape}")
        if self.pixels.dtype != np.uint8 or not np.isin(self.pixels, (0, 1)).all():
            raise ValidationError("Пиксели эскиза должны быть 0 или 1 (uint8)")

    @classmethod
    def from_strokes(cls, strokes: np.ndarray) -> 'SketchImage':
        return cls(np.where(strokes, 0, 1).astype(np.uint8))

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def strokes(self) -> np.ndarray:
        return self.pixels == 0


def fill_interior(strokes: np.ndarray) -> np.ndarray:
    """Маска цели: все, что не достижимо от края изображения в обход штрихов.

    Заливка 4-связная; изображение окаймляется рамкой фона в 1 пиксель,
    чтобы заливка обошла все края.
    """
    height, width = strokes.shape
    canvas = np.zeros((height + 2, width + 2), dtype=np.uint8)
    canvas[1:-1, 1:-1] = np.where(strokes, 255, 0).astype(np.uint8)
    cv2.floodFill(canvas, None, (0, 0), _OUTSIDE, flags=4)
    outside = canvas[1:-1, 1:-1] == _OUTSIDE
    return ~outside


def sketch_to_target(sketch: SketchImage) -> torch.Tensor:
    """Целевой силуэт эскиза (float64, 0/1) с предупреждениями о вырожденных случаях."""
    strokes = sketch.strokes
    target = fill_interior(strokes)
    if not target.any():
        logger.warning("Эскиз пуст: целевой силуэт не содержит ни одного пикселя")
    elif not (target & ~strokes).any():
        logger.warning("Замкнутый контур не найден: целью служит маска штрихов")
    return torch.as_tensor(target.astype(np.float64), dtype=DTYPE)


def load_sketch(path: str) -> Tuple[SketchImage, torch.Tensor]:
    """Читает эскиз и строит целевой силуэт.

    Args:
        path: 8-битный одноканальный PNG или PGM

    Returns:
        Кортеж (эскиз, целевой силуэт H×W)

    Raises:
        SketchIOError: Файл не найден или не читается
        FormatError: Неподдерживаемый формат, глубина цвета или число каналов
    """
    if not os.path.isfile(path):
        raise SketchIOError(f"Файл эскиза не найден: {path}")
    extension = os.path.splitext(path)[1].lower()
    if extension not in SUPPORTED_EXTENSIONS:
        raise FormatError(f"Неподдерживаемый формат эскиза '{extension}', ожидается PNG или PGM")

    image = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if image is None:
        raise SketchIOError(f"OpenCV не смог прочитать эскиз: {path}")
    if image.dtype != np.uint8:
        raise FormatError(f"Ожидается 8-битное изображение, получено {image.dtype}")
    if image.ndim != 2:
        raise FormatError(f"Ожидается одноканальное изображение, получено каналов: {image.shape[2]}")

    sketch = SketchImage.from_strokes(image < STROKE_THRESHOLD)
    logger.debug(f"Эскиз загружен: {path} ({sketch.width}×{sketch.height})")
    return sketch, sketch_to_target(sketch)


def save_sketch(sketch: SketchImage, path: str) -> None:
    """Записывает эскиз как 8-битное изображение: штрих 0, фон 255."""
    _write_gray(path, sketch.pixels * 255)


def save_silhouette(s: torch.Tensor, path: str) -> None:
    """Записывает силуэт как 8-битное изображение: 1 - белый."""
    values = np.clip(np.rint(s.detach().cpu().numpy() * 255.0), 0, 255).astype(np.uint8)
    _write_gray(path, values)


def _write_gray(path: str, image: np.ndarray) -> None:
    ensure_parent_exists(path)
    if not cv2.imwrite(path, image.astype(np.uint8)):
        raise SketchIOError(f"Ошибка OpenCV при сохранении изображения: {path}")
    logger.debug(f"Изображение сохранено: {path}")


def synth_sketch(mesh: Mesh, cam: Camera, mode: str = 'silhouette',
                 cfg: Optional[RenderConfig] = None) -> SketchImage:
    """Синтетический эскиз сетки.

    Args:
        mesh: Сетка
        cam: Камера
        mode: 'silhouette' - залитый силуэт, 'edge' - контур толщиной в пиксель
        cfg: Параметры растеризации

    Returns:
        SketchImage

    Raises:
        DegenerateInputError: Силуэт пуст
    """
    if mode not in SKETCH_MODES:
        raise ValidationError(f"Неизвестный режим эскиза '{mode}', ожидается один из {SKETCH_MODES}")
    with torch.no_grad():
        silhouette = soft_silhouette(mesh.detach(), cam, cfg)
    mask = (silhouette > 0.5).numpy()
    if not mask.any():
        raise DegenerateInputError("Силуэт пуст: эскиз не из чего строить")

    if mode == 'edge':
        eroded = cv2.erode(mask.astype(np.uint8), np.ones((3, 3), dtype=np.uint8)).astype(bool)
        mask = mask & ~eroded
    return SketchImage.from_strokes(mask)
