#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Дискриминатор формы по многоракурсным силуэтам и GAN-потери.

Выход дискриминатора - логит "реалистичности": большой для силуэтов
настоящих форм, малый для силуэтов подгоняемой сетки.

Формат файла параметров (little endian):
    4 байта  b"SKSD"
    uint32   версия (1)
    uint32   число ракурсов V
    uint32   разрешение R
    float64  все параметры в порядке state_dict()
"""

import math
import os
import struct
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn

from sketchfit.config import is_power_of_two
from sketchfit.core.geometry import DTYPE, Mesh
from sketchfit.core.optimizer import AdamState, adam_step
from sketchfit.core.renderer import Camera, SoftRenderer
from sketchfit.errors import FormatError, NumericError, ShapeError, SketchIOError, ValidationError
from sketchfit.utils.logging_utils import get_logger

CHECKPOINT_MAGIC = b"SKSD"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct('<4sIII')
CHANNELS = (16, 32, 64)
LEAKY_SLOPE = 0.2

logger = get_logger('Discriminator')


@dataclass
class ViewBatch:
    """Пачка силуэтов B×V×R×R и признак их происхождения."""

    silhouettes: torch.Tensor
    real: bool

    def __post_init__(self):
        if self.silhouettes.ndim != 4:
            raise ShapeError(f"Ожидается пачка B×V×R×R, получено {tuple(self.silhouettes.shape)}")

    @property
    def size(self) -> int:
        return int(self.silhouettes.shape[0])


@dataclass(frozen=True)
class DiscStepMetrics:
    generator_loss: float
    disc_loss: float
    real_accuracy: float
    fake_accuracy: float

    @property
    def accuracy(self) -> float:
        return 0.5 * (self.real_accuracy + self.fake_accuracy)


class ShapeDiscriminator(nn.Module):
    """Три свертки 4×4 с шагом 2 и линейный слой до одного логита.

    Ракурсы подаются как каналы, поэтому сеть оценивает весь набор
    силуэтов одновременно.
    """

    def __init__(self, views: int = 4, resolution: int = 64, seed: int = 0, zero_final: bool = True):
        super().__init__()
        if views < 1:
            raise ValidationError(f"Число ракурсов должно быть не меньше 1: {views}")
        if not is_power_of_two(resolution) or resolution < 16:
            raise ValidationError(f"Разрешение дискриминатора должно быть степенью двойки >= 16: {resolution}")
        self.views = views
        self.resolution = resolution

        layers: List[nn.Module] = []
        in_channels = views
        for out_channels in CHANNELS:
            layers.append(nn.Conv2d(in_channels, out_channels, kernel_size=4, stride=2, padding=1))
            layers.append(nn.LeakyReLU(LEAKY_SLOPE))
            in_channels = out_channels
        self.features = nn.Sequential(*layers)
        side = resolution // 2 ** len(CHANNELS)
        self.head = nn.Linear(CHANNELS[-1] * side * side, 1)
        self.double()
        self.reset_parameters(seed, zero_final)

    def reset_parameters(self, seed: int, zero_final: bool = True) -> None:
        """Равномерная инициализация ±1/sqrt(fan_in) из генератора с зерном seed."""
        generator = torch.Generator().manual_seed(seed)
        layers = [m for m in self.features if isinstance(m, nn.Conv2d)] + [self.head]
        with torch.no_grad():
            for layer in layers:
                bound = 1.0 / math.sqrt(layer.weight[0].numel())
                for param in (layer.weight, layer.bias):
                    values = torch.rand(param.shape, generator=generator, dtype=DTYPE)
                    param.copy_((2.0 * values - 1.0) * bound)
            if zero_final:
                self.head.weight.zero_()
                self.head.bias.zero_()

    def forward(self, silhouettes: torch.Tensor) -> torch.Tensor:
        features = self.features(silhouettes)
        return self.head(features.flatten(start_dim=1)).squeeze(-1)


def disc_init(views: int, resolution: int, seed: int) -> ShapeDiscriminator:
    return ShapeDiscriminator(views, resolution, seed)


def disc_forward(disc: ShapeDiscriminator, batch: ViewBatch) -> torch.Tensor:
    """Логиты для каждого элемента пачки, форма (B,).

    Raises:
        ShapeError: Пачка не соответствует числу ракурсов или разрешению
        NumericError: Во входе или на выходе NaN
    """
    expected = (disc.views, disc.resolution, disc.resolution)
    if tuple(batch.silhouettes.shape[1:]) != expected:
        raise ShapeError(f"Ожидается пачка B×{expected}, получено {tuple(batch.silhouettes.shape)}")
    if bool(torch.isnan(batch.silhouettes).any()):
        raise NumericError("Вход дискриминатора содержит NaN", term='shape_disc')
    logits = disc(batch.silhouettes.to(DTYPE))
    if not bool(torch.isfinite(logits).all()):
        raise NumericError("Логиты дискриминатора не конечны", term='shape_disc')
    return logits


def nonsat_f(u: torch.Tensor) -> torch.Tensor:
    """f(u) = -log(1 + exp(-u)), устойчиво для больших |u|."""
    u = torch.as_tensor(u, dtype=DTYPE)
    return -torch.logaddexp(torch.zeros_like(u), -u)


def _gan_terms(disc: ShapeDiscriminator, fake: ViewBatch,
               real: ViewBatch) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    if fake.size == 0 or real.size == 0:
        raise ValidationError("Пустая пачка силуэтов для дискриминатора")
    fake_logits = disc_forward(disc, fake)
    real_logits = disc_forward(disc, real)
    l_sd = nonsat_f(real_logits).mean() + nonsat_f(-fake_logits).mean()
    return l_sd, real_logits, fake_logits


def gan_losses(disc: ShapeDiscriminator, fake: ViewBatch, real: ViewBatch) -> Tuple[torch.Tensor, torch.Tensor]:
    """Потери генератора и дискриминатора.

    L_sd = E f(D(real)) + E f(-D(fake)), где D - логит "реалистичности":
    положительный логит означает, что силуэт похож на настоящий. Запись
    E f(SD(fake)) + E f(-SD(real)) с SD = -D дает ту же величину. При
    нулевых логитах L_sd = -2 ln 2; уверенно распознанный фейк
    (D(fake) -> -inf) дает f(+inf) = 0, и генератор не насыщается.

    Returns:
        Кортеж (L_sd, -L_sd). Генератор минимизирует L_sd, дискриминатор
        максимизирует ту же величину, то есть минимизирует -L_sd
    """
    l_sd, _, _ = _gan_terms(disc, fake, real)
    return l_sd, -l_sd


def disc_train_step(disc: ShapeDiscriminator, real: ViewBatch, fake: ViewBatch, state: AdamState,
                    lr: float) -> Tuple[AdamState, DiscStepMetrics]:
    """Один шаг Adam по параметрам дискриминатора.

    Силуэты подгоняемой сетки отсоединяются от графа, поэтому шаг не
    затрагивает вершины.
    """
    detached = ViewBatch(fake.silhouettes.detach(), real=False)
    params = list(disc.parameters())
    l_sd, real_logits, fake_logits = _gan_terms(disc, detached, real)
    disc_loss = -l_sd
    grads = torch.autograd.grad(disc_loss, params)
    new_params, new_state = adam_step(params, grads, state, lr)
    with torch.no_grad():
        for param, value in zip(params, new_params):
            param.copy_(value)

    metrics = DiscStepMetrics(
        generator_loss=l_sd.item(),
        disc_loss=disc_loss.item(),
        real_accuracy=(real_logits > 0).to(DTYPE).mean().item(),
        fake_accuracy=(fake_logits < 0).to(DTYPE).mean().item(),
    )
    return new_state, metrics


def init_disc_state(disc: ShapeDiscriminator) -> AdamState:
    return AdamState.for_params([p.detach() for p in disc.parameters()])


def render_view_batch(meshes: Sequence[Mesh], cams: Sequence[Camera], renderer: SoftRenderer,
                      real: bool) -> ViewBatch:
    """Рендерит каждую сетку со всех ракурсов: пачка len(meshes)×len(cams)×R×R."""
    stacks = [renderer.render_views(mesh, cams) for mesh in meshes]
    return ViewBatch(torch.stack(stacks), real=real)


def save_disc_params(disc: ShapeDiscriminator, path: str) -> None:
    """Сохраняет параметры дискриминатора в бинарный файл."""
    header = _HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, disc.views, disc.resolution)
    flat = [t.detach().reshape(-1).numpy() for t in disc.state_dict().values()]
    payload = np.concatenate(flat).astype('<f8')
    with open(path, 'wb') as f:
        f.write(header)
        f.write(payload.tobytes())
    logger.info(f"Параметры дискриминатора сохранены: {path} ({payload.size} чисел)")


def load_disc_params(path: str) -> ShapeDiscriminator:
    """Читает параметры дискриминатора.

    Raises:
        SketchIOError: Файл не читается
        FormatError: Неверная сигнатура, версия или длина
    """
    if not os.path.isfile(path):
        raise SketchIOError(f"Файл параметров не найден: {path}")
    with open(path, 'rb') as f:
        data = f.read()
    if len(data) < _HEADER.size:
        raise FormatError(f"Файл параметров слишком короткий: {path}")
    magic, version, views, resolution = _HEADER.unpack_from(data)
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"Неверная сигнатура файла параметров: {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"Неподдерживаемая версия файла параметров: {version}")

    disc = ShapeDiscriminator(views, resolution)
    body = data[_HEADER.size:]
    expected = sum(t.numel() for t in disc.state_dict().values())
    if len(body) != expected * 8:
        raise FormatError(f"Ожидалось {expected} параметров, в файле {len(body) // 8}")

    values = torch.from_numpy(np.frombuffer(body, dtype='<f8').astype(np.float64))
    offset = 0
    with torch.no_grad():
        for tensor in disc.state_dict().values():
            count = tensor.numel()
            tensor.copy_(values[offset:offset + count].reshape(tensor.shape))
            offset += count
    logger.debug(f"Параметры дискриминатора загружены: V={views}, R={resolution}")
    return disc
