#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Конфигурация подгонки: веса потерь, параметры рендера, расписание.

Файл конфигурации - плоский текст `ключ = значение`, по строке на ключ.
Ключи совпадают с именами полей LossWeights, RenderConfig, FitConfig
и RunConfig; неизвестные ключи отклоняются.
"""

import dataclasses
import math
import typing
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

from sketchfit.errors import SketchIOError, ValidationError
from sketchfit.utils.logging_utils import get_logger

logger = get_logger('Config')

# Свертка пикселей в слагаемом симметрии изображений
ISYM_REDUCTIONS = ('sum', 'mean')


def is_power_of_two(value: int) -> bool:
    return isinstance(value, int) and value > 0 and (value & (value - 1)) == 0


@dataclass(frozen=True)
class LossWeights:
    """Веса слагаемых полной функции потерь."""

    scale_weights: Tuple[float, ...] = (0.25, 0.25, 0.25, 0.25)
    lambda_sd: float = 0.1
    lambda_sv: float = 0.1
    lambda_isym: float = 0.1
    # Внутренние веса регуляризатора L_r
    lambda_laplacian: float = 1.0
    lambda_flatten: float = 1.0

    @property
    def num_scales(self) -> int:
        return len(self.scale_weights)

    def validate(self) -> None:
        if not self.scale_weights:
            raise ValidationError("scale_weights должен содержать хотя бы один вес")
        values = list(self.scale_weights) + [
            self.lambda_sd, self.lambda_sv, self.lambda_isym,
            self.lambda_laplacian, self.lambda_flatten,
        ]
        for value in values:
            if not math.isfinite(value) or value < 0:
                raise ValidationError(f"Веса потерь должны быть конечными и неотрицательными: {value}")


@dataclass(frozen=True)
class RenderConfig:
    """Параметры мягкого растеризатора силуэтов.

    sigma задается в квадратных единицах NDC.
    cull_threshold - максимальное влияние грани на пиксель, которое
    разрешено отбросить при отсечении по ограничивающему прямоугольнику.
    """

    sigma: float = 1e-4
    background: float = 0.0
    near: float = 1e-6
    cull_threshold: float = 1e-15

    def validate(self) -> None:
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValidationError(f"sigma должна быть положительной: {self.sigma}")
        if not 0.0 <= self.background <= 1.0:
            raise ValidationError(f"background должен лежать в [0, 1]: {self.background}")
        if not self.near > 0:
            raise ValidationError(f"near должен быть положительным: {self.near}")
        if not 0.0 < self.cull_threshold < 1e-6:
            raise ValidationError(f"cull_threshold вне (0, 1e-6): {self.cull_threshold}")


@dataclass(frozen=True)
class FitConfig:
    """Параметры оптимизации смещений шаблона."""

    weights: LossWeights = field(default_factory=LossWeights)
    resolutions: Tuple[int, ...] = (32, 64, 128)
    steps: int = 2400
    base_lr: float = 1e-4
    lr_decay: float = 0.3
    lr_period: int = 800
    seed: int = 0
    enable_sd: bool = True
    enable_sp: bool = True
    sd_views: int = 4
    sd_resolution: int = 64
    sd_lr: float = 1e-4
    real_batch: int = 1
    isym_views: int = 4
    isym_reduction: str = 'mean'
    mirrored_sd_views: bool = False
    snapshot_stages: bool = True

    def stage_steps(self) -> List[int]:
        """Делит шаги поровну между стадиями, остаток - последней стадии."""
        count = len(self.resolutions)
        base = self.steps // count
        plan = [base] * count
        plan[-1] += self.steps - base * count
        return plan

    def effective_weights(self) -> LossWeights:
        """Веса с учетом переключателей SD и SP."""
        weights = self.weights
        if not self.enable_sp:
            weights = dataclasses.replace(weights, lambda_sv=0.0, lambda_isym=0.0)
        if not self.enable_sd:
            weights = dataclasses.replace(weights, lambda_sd=0.0)
        return weights

    def validate(self) -> None:
        self.weights.validate()
        if not self.resolutions:
            raise ValidationError("Список разрешений пуст")
        for res in self.resolutions:
            if not is_power_of_two(res) or res < 2:
                raise ValidationError(f"Разрешение должно быть степенью двойки: {res}")
        if any(b <= a for a, b in zip(self.resolutions, self.resolutions[1:])):
            raise ValidationError(f"Разрешения должны строго возрастать: {self.resolutions}")
        coarsest = self.resolutions[0] >> (self.weights.num_scales - 1)
        if coarsest < 1:
            raise ValidationError(
                f"Разрешение {self.resolutions[0]} слишком мало для {self.weights.num_scales} масштабов"
            )
        if self.steps < 0:
            raise ValidationError(f"Число шагов не может быть отрицательным: {self.steps}")
        if self.base_lr < 0 or self.sd_lr < 0:
            raise ValidationError("Скорость обучения не может быть отрицательной")
        if not self.lr_decay > 0:
            raise ValidationError(f"lr_decay должен быть положительным: {self.lr_decay}")
        if self.lr_period <= 0:
            raise ValidationError(f"lr_period должен быть положительным: {self.lr_period}")
        if self.sd_views < 1 or self.isym_views < 1 or self.real_batch < 1:
            raise ValidationError("Число видов и размер батча должны быть не меньше 1")
        if not is_power_of_two(self.sd_resolution) or self.sd_resolution < 16:
            raise ValidationError(f"sd_resolution должно быть степенью двойки >= 16: {self.sd_resolution}")
        if self.isym_reduction not in ISYM_REDUCTIONS:
            raise ValidationError(f"isym_reduction должен быть одним из {ISYM_REDUCTIONS}: {self.isym_reduction!r}")


@dataclass(frozen=True)
class RunConfig:
    """Полная конфигурация запуска CLI."""

    fit: FitConfig = field(default_factory=FitConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    template_subdivisions: int = 3

    def validate(self) -> None:
        self.fit.validate()
        self.render.validate()
        if not 0 <= self.template_subdivisions <= 5:
            raise ValidationError(f"template_subdivisions вне [0, 5]: {self.template_subdivisions}")


# Порядок секций при сериализации: сначала веса, затем рендер, затем расписание
_SECTIONS = (
    ('weights', LossWeights),
    ('render', RenderConfig),
    ('fit', FitConfig),
    ('run', RunConfig),
)


def _flat_fields() -> Dict[str, Tuple[str, Any]]:
    """Соответствие плоский ключ -> (секция, тип)."""
    result: Dict[str, Tuple[str, Any]] = {}
    for section, cls in _SECTIONS:
        hints = typing.get_type_hints(cls)
        for f in dataclasses.fields(cls):
            if f.name in ('weights', 'fit', 'render'):
                continue
            result[f.name] = (section, hints[f.name])
    return result


def _parse_value(key: str, raw: str, hint: Any) -> Any:
    raw = raw.strip()
    try:
        if hint is bool:
            lowered = raw.lower()
            if lowered not in ('true', 'false'):
                raise ValueError(raw)
            return lowered == 'true'
        if hint is int:
            return int(raw)
        if hint is str:
            return raw
        if hint is float:
            return float(raw)
        if typing.get_origin(hint) is tuple:
            item_type = typing.get_args(hint)[0]
            items = [item.strip() for item in raw.split(',') if item.strip()]
            return tuple(item_type(item) for item in items)
    except ValueError:
        raise ValidationError(f"Некорректное значение для ключа '{key}': {raw!r}") from None
    raise ValidationError(f"Неподдерживаемый тип поля '{key}'")


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, tuple):
        return ', '.join(_format_value(item) for item in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_run_config(text: str) -> RunConfig:
    """Разбирает текст конфигурации.

    Args:
        text: Содержимое файла `ключ = значение`

    Returns:
        Провалидированный RunConfig
    """
    known = _flat_fields()
    values: Dict[str, Dict[str, Any]] = {section: {} for section, _ in _SECTIONS}

    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.split('#', 1)[0].strip()
        if not stripped:
            continue
        if '=' not in stripped:
            raise ValidationError(f"Строка {line_no}: ожидается 'ключ = значение'")
        key, raw = (part.strip() for part in stripped.split('=', 1))
        if key not in known:
            raise ValidationError(f"Строка {line_no}: неизвестный ключ '{key}'")
        section, hint = known[key]
        values[section][key] = _parse_value(key, raw, hint)

    weights = LossWeights(**values['weights'])
    render = RenderConfig(**values['render'])
    fit = FitConfig(weights=weights, **values['fit'])
    config = RunConfig(fit=fit, render=render, **values['run'])
    config.validate()
    return config


def dump_run_config(config: RunConfig) -> str:
    """Сериализует конфигурацию в текст с фиксированным порядком ключей."""
    sources = {
        'weights': config.fit.weights,
        'render': config.render,
        'fit': config.fit,
        'run': config,
    }
    lines = []
    for section, cls in _SECTIONS:
        lines.append(f"# {section}")
        for f in dataclasses.fields(cls):
            if f.name in ('weights', 'fit', 'render'):
                continue
            lines.append(f"{f.name} = {_format_value(getattr(sources[section], f.name))}")
    return '\n'.join(lines) + '\n'


def load_run_config(path: str) -> RunConfig:
    """Читает конфигурацию из файла."""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            text = f.read()
    except OSError as e:
        raise SketchIOError(f"Не удалось прочитать конфигурацию {path}: {e}") from e
    config = parse_run_config(text)
    logger.info(f"Конфигурация загружена: {path}")
    return config


def save_run_config(config: RunConfig, path: str) -> None:
    """Записывает конфигурацию в файл."""
    with open(path, 'w', encoding='utf-8') as f:
        f.write(dump_run_config(config))
