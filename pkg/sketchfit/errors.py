#!/usr/bin/env python3
# -*- coding: utf-8 -*-

from typing import Optional


class SketchFitError(Exception):
    """Базовая ошибка приложения. Несет код возврата для CLI."""

    exit_code = 1


class ValidationError(SketchFitError):
    """Некорректные входные данные или параметры."""


class ShapeError(ValidationError):
    """Несовпадение размерностей."""


class FormatError(ValidationError):
    """Неподдерживаемый или поврежденный формат файла."""


class CapacityError(ValidationError):
    """Запрошенный объем превышает допустимый предел."""


class DegenerateInputError(ValidationError):
    """Вырожденный вход (пустая сетка, пустой рендер и т.п.)."""


class NonManifoldError(ValidationError):
    """Ребро сетки принадлежит более чем двум граням."""


class SketchIOError(SketchFitError):
    """Файл не найден или не читается."""


class NumericError(SketchFitError):
    """Численный сбой: NaN или бесконечность.

    Args:
        message: Текст ошибки
        term: Имя слагаемого функции потерь, в котором возник сбой
    """

    exit_code = 2

    def __init__(self, message: str, term: Optional[str] = None):
        super().__init__(message)
        self.term = term
