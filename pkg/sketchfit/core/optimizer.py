#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Adam с коррекцией смещения и ступенчатое расписание скорости обучения."""

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import torch

from sketchfit.errors import NumericError, ShapeError, ValidationError


@dataclass
class AdamState:
    """Состояние Adam: счетчик шагов и моменты по каждому параметру."""

    t: int = 0
    m: List[torch.Tensor] = field(default_factory=list)
    v: List[torch.Tensor] = field(default_factory=list)
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[torch.Tensor], betas: Tuple[float, float] = (0.9, 0.999),
                   eps: float = 1e-8) -> 'AdamState':
        return cls(
            t=0,
            m=[torch.zeros_like(p, requires_grad=False) for p in params],
            v=[torch.zeros_like(p, requires_grad=False) for p in params],
            betas=betas,
            eps=eps,
        )


def adam_step(params: Sequence[torch.Tensor], grads: Sequence[torch.Tensor], state: AdamState,
              lr: float) -> Tuple[List[torch.Tensor], AdamState]:
    """Один шаг Adam.

    Функция не изменяет входные тензоры: возвращает новые параметры
    и новое состояние.

    Args:
        params: Параметры
        grads: Градиенты той же формы
        state: Текущее состояние
        lr: Скорость обучения

    Returns:
        Кортеж (новые параметры, новое состояние с t + 1)

    Raises:
        NumericError: В градиенте есть NaN или бесконечность
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError(
            f"Число параметров ({len(params)}), градиентов ({len(grads)}) и моментов ({len(state.m)}) различается"
        )
    beta1, beta2 = state.betas
    t = state.t + 1
    correction1 = 1.0 - beta1 ** t
    correction2 = 1.0 - beta2 ** t

    new_params, new_m, new_v = [], [], []
    with torch.no_grad():
        for index, (p, g, m, v) in enumerate(zip(params, grads, state.m, state.v)):
            if tuple(p.shape) != tuple(g.shape):
                raise ShapeError(f"Параметр {index}: форма {tuple(p.shape)}, градиент {tuple(g.shape)}")
            if not bool(torch.isfinite(g).all()):
                raise NumericError(f"Градиент параметра {index} содержит NaN или бесконечность")
            m = beta1 * m + (1.0 - beta1) * g
            v = beta2 * v + (1.0 - beta2) * g * g
            step = (m / correction1) / (torch.sqrt(v / correction2) + state.eps)
            new_params.append(p.detach() - lr * step)
            new_m.append(m)
            new_v.append(v)

    return new_params, AdamState(t=t, m=new_m, v=new_v, betas=state.betas, eps=state.eps)


def lr_at(step: int, base: float, decay: float, period: int) -> float:
    """base · decay^⌊step/period⌋."""
    if period <= 0:
        raise ValidationError(f"Период расписания должен быть положительным: {period}")
    return base * decay ** (step // period)
