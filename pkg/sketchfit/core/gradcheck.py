#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Сверка аналитических градиентов по вершинам с центральными разностями."""

from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import torch
from tqdm import tqdm

from sketchfit.config import FitConfig, LossWeights, RenderConfig
from sketchfit.core import primitives
from sketchfit.core.discriminator import ShapeDiscriminator, gan_losses, init_disc_state, render_view_batch
from sketchfit.core.fitter import MeshFitter
from sketchfit.core.geometry import Mesh
from sketchfit.core.losses import (
    flatten_loss, image_symmetry_loss, iou_loss, laplacian_loss, multiscale_silhouette_loss,
    vertex_symmetry_loss,
)
from sketchfit.core.renderer import SoftRenderer, binarize, camera_from_angles, sample_random_views
from sketchfit.errors import ValidationError
from sketchfit.utils.logging_utils import get_logger

LossFn = Callable[[Mesh], torch.Tensor]
GradFn = Callable[[Mesh], torch.Tensor]
Coordinate = Tuple[int, int]

REL_FLOOR = 1e-8
# Отношение соседних разностей оценок для гладкой координаты близко к 4
CONVERGENCE_RATIO = (3.0, 6.0)
# Оценки, совпадающие с такой относительной точностью, считаются сошедшимися
_AGREEMENT = 1e-6
_NOISE_FLOOR = 1e-10

logger = get_logger('Gradcheck')


@dataclass(frozen=True)
class GradcheckResult:
    """Итог проверки.

    coordinate - (вершина, ось) с наибольшей относительной ошибкой среди
    гладких координат; non_smooth - исключенные координаты.
    """

    max_rel_error: float
    coordinate: Optional[Coordinate]
    non_smooth: List[Coordinate] = field(default_factory=list)
    checked: int = 0

    def passed(self, tolerance: float = 1e-3) -> bool:
        return self.max_rel_error < tolerance


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), REL_FLOOR)


def autograd_vertex_grad(loss_fn: LossFn, mesh: Mesh) -> torch.Tensor:
    verts = mesh.vertices.detach().clone().requires_grad_(True)
    loss = loss_fn(Mesh(verts, mesh.faces))
    if not loss.requires_grad:
        return torch.zeros_like(verts)
    (grad,) = torch.autograd.grad(loss, verts, allow_unused=True)
    return torch.zeros_like(verts) if grad is None else grad.detach()


def _central_difference(loss_fn: LossFn, mesh: Mesh, coord: Coordinate, h: float) -> float:
    base = mesh.vertices.detach()
    values = []
    for sign in (1.0, -1.0):
        shifted = base.clone()
        shifted[coord] += sign * h
        with torch.no_grad():
            values.append(loss_fn(Mesh(shifted, mesh.faces)).item())
    return (values[0] - values[1]) / (2.0 * h)


def extrapolated_difference(coarse: float, fine: float) -> float:
    """Экстраполяция Ричардсона по разностям с шагами h и h/2.

    Погрешность центральной разности равна c·h² + O(h⁴); комбинация
    (4·fine - coarse) / 3 убирает член c·h².
    """
    return (4.0 * fine - coarse) / 3.0


def is_converging(estimates: Sequence[float]) -> bool:
    """Проверяет, что оценки при h, h/2, h/4 сходятся как O(h²).

    Гладкая функция дает разности соседних оценок, убывающие примерно
    в 4 раза. Излом внутри шага (смена ближайшего соседа, граница
    области Вороного, излом LeakyReLU) нарушает это отношение.
    """
    scale = max(max(abs(e) for e in estimates), REL_FLOOR)
    noise = max(_AGREEMENT * scale, _NOISE_FLOOR)
    diffs = [a - b for a, b in zip(estimates, estimates[1:])]
    if all(abs(d) <= noise for d in diffs):
        return True
    if len(diffs) < 2 or abs(diffs[1]) <= noise or diffs[0] * diffs[1] <= 0:
        return False
    low, high = CONVERGENCE_RATIO
    return low <= diffs[0] / diffs[1] <= high


def gradcheck(loss_fn: LossFn, mesh: Mesh, h: float = 1e-4, grad_fn: Optional[GradFn] = None,
              coordinates: Optional[Iterable[Coordinate]] = None,
              show_progress: bool = False) -> GradcheckResult:
    """Сравнивает градиент с центральными разностями.

    Для каждой координаты считаются разности с шагами h, h/2 и, если
    первые две расходятся, h/4. Координата, чьи оценки не сходятся как
    O(h²), лежит на изломе и исключается из максимума. Для остальных
    ошибка считается при шаге h по экстраполированной разности.

    Args:
        loss_fn: Скалярная функция сетки
        mesh: Точка проверки
        h: Шаг конечных разностей
        grad_fn: Аналитический градиент V×3; по умолчанию autograd
        coordinates: Подмножество координат (вершина, ось)
        show_progress: Показывать индикатор прогресса

    Returns:
        GradcheckResult
    """
    if not h > 0:
        raise ValidationError(f"Шаг h должен быть положительным: {h}")
    analytic = grad_fn(mesh) if grad_fn is not None else autograd_vertex_grad(loss_fn, mesh)
    if tuple(analytic.shape) != tuple(mesh.vertices.shape):
        raise ValidationError(f"Градиент формы {tuple(analytic.shape)} не совпадает с вершинами")

    if coordinates is None:
        coordinates = [(i, k) for i in range(mesh.num_vertices) for k in range(3)]
    coordinates = list(coordinates)

    worst = 0.0
    worst_coord: Optional[Coordinate] = None
    non_smooth: List[Coordinate] = []
    for coord in tqdm(coordinates, desc="Градиенты", unit="коорд", disable=not show_progress):
        estimates = [_central_difference(loss_fn, mesh, coord, h),
                     _central_difference(loss_fn, mesh, coord, h / 2.0)]
        if not is_converging(estimates):
            estimates.append(_central_difference(loss_fn, mesh, coord, h / 4.0))
            if not is_converging(estimates):
                non_smooth.append(coord)
                continue
        err = relative_error(analytic[coord].item(), extrapolated_difference(estimates[0], estimates[1]))
        if worst_coord is None or err > worst:
            worst, worst_coord = err, coord

    if non_smooth:
        logger.debug(f"Исключено негладких координат: {len(non_smooth)}")
    return GradcheckResult(worst, worst_coord, non_smooth, len(coordinates))


GRADCHECK_TERMS = ('iou', 'sp', 'vsym', 'isym', 'lap', 'flat', 'sd', 'total')


def term_loss_functions(mesh: Mesh, resolution: int = 16, seed: int = 0,
                        render_cfg: Optional[RenderConfig] = None) -> Dict[str, LossFn]:
    """Скалярные функции сетки для каждого слагаемого и для полной функции потерь.

    Цель для силуэтных слагаемых - канонический силуэт параллелепипеда.
    Дискриминатор инициализируется без обнуления последнего слоя, иначе
    градиент L_sd по вершинам тождественно равен нулю.
    """
    if resolution < 16:
        raise ValidationError(f"Для проверки градиентов нужно разрешение >= 16: {resolution}")
    renderer = SoftRenderer(render_cfg)
    cam = camera_from_angles(0.0, 0.0, image_size=resolution)
    with torch.no_grad():
        target = binarize(renderer.render(primitives.box((1.2, 0.9, 0.9)), cam))
    scales = (0.25, 0.25, 0.25, 0.25)
    views = sample_random_views(2, seed, image_size=resolution)

    sd_cams = [c.with_size(16) for c in views]
    disc = ShapeDiscriminator(len(sd_cams), 16, seed=seed, zero_final=False)
    with torch.no_grad():
        real = render_view_batch([primitives.cube(1.0)], sd_cams, renderer, real=True)

    cfg = FitConfig(
        weights=LossWeights(scale_weights=scales),
        resolutions=(resolution,), steps=1, seed=seed,
        sd_views=len(sd_cams), sd_resolution=16, isym_views=len(views),
    )
    fitter = MeshFitter(target, mesh, cfg, render_cfg)
    fitter.disc = disc
    fitter.disc_state = init_disc_state(disc)

    def total(m: Mesh) -> torch.Tensor:
        return fitter.objective(m.vertices - mesh.vertices.detach(), views, resolution, real)

    return {
        'iou': lambda m: iou_loss(renderer.render(m, cam), target),
        'sp': lambda m: multiscale_silhouette_loss(renderer.render(m, cam), target, scales),
        'vsym': lambda m: vertex_symmetry_loss(m),
        'isym': lambda m: image_symmetry_loss(m, views, renderer=renderer),
        'lap': lambda m: laplacian_loss(m),
        'flat': lambda m: flatten_loss(m),
        'sd': lambda m: gan_losses(disc, render_view_batch([m], sd_cams, renderer, real=False), real)[0],
        'total': total,
    }


def run_gradcheck_suite(mesh: Mesh, terms: Sequence[str] = GRADCHECK_TERMS, resolution: int = 16,
                        h: float = 1e-4, seed: int = 0,
                        render_cfg: Optional[RenderConfig] = None) -> Dict[str, GradcheckResult]:
    """Проверяет градиенты выбранных слагаемых на одной сетке."""
    unknown = [t for t in terms if t not in GRADCHECK_TERMS]
    if unknown:
        raise ValidationError(f"Неизвестные слагаемые: {unknown}; допустимы {GRADCHECK_TERMS}")
    functions = term_loss_functions(mesh, resolution, seed, render_cfg)
    results = {}
    for term in terms:
        results[term] = gradcheck(functions[term], mesh, h)
        result = results[term]
        logger.info(
            f"{term}: max rel error {result.max_rel_error:.3e} в {result.coordinate}, "
            f"исключено {len(result.non_smooth)} из {result.checked}"
        )
    return results
