#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Слагаемые функции потерь подгонки.

Полная функция потерь:
    L = L_sp + L_r + λ_sd·L_sd + λ_sv·L_Vsym + λ_isym·L_Isym
где L_r = λ_lap·laplacian + λ_flat·flatten.
"""

from dataclasses import dataclass, fields
from typing import Optional, Sequence, Tuple

import torch

from sketchfit.config import ISYM_REDUCTIONS, LossWeights, RenderConfig
from sketchfit.core.geometry import (
    DTYPE, Mesh, MeshAdjacency, SymmetryPlane, adjacency, nearest_reflected_sq_distances,
)
from sketchfit.core.renderer import Camera, SoftRenderer, downsample, hflip, mirror_camera
from sketchfit.errors import NumericError, ShapeError, ValidationError
from sketchfit.utils.logging_utils import get_logger

logger = get_logger('Losses')

IOU_EPS = 1e-8
# Крыло ребра с меньшей площадью считается вырожденным
DEGENERATE_WING = 1e-24


@dataclass
class LossTerms:
    """Невзвешенные слагаемые функции потерь (скалярные тензоры)."""

    silhouette: torch.Tensor
    laplacian: torch.Tensor
    flatten: torch.Tensor
    shape_disc: torch.Tensor
    vertex_sym: torch.Tensor
    image_sym: torch.Tensor
    boundary_edges: int = 0

    @classmethod
    def zeros(cls) -> 'LossTerms':
        zero = torch.zeros((), dtype=DTYPE)
        return cls(zero, zero, zero, zero, zero, zero)


@dataclass(frozen=True)
class LossReport:
    """Значения слагаемых после взвешивания L_r; остальные - до умножения на λ."""

    l_sp: float
    l_r: float
    l_sd: float
    l_vsym: float
    l_isym: float
    total: float
    laplacian: float
    flatten: float
    boundary_edges: int = 0


def _check_same_shape(s1: torch.Tensor, s2: torch.Tensor) -> None:
    if tuple(s1.shape) != tuple(s2.shape):
        raise ShapeError(f"Размеры силуэтов не совпадают: {tuple(s1.shape)} и {tuple(s2.shape)}")
    if s1.ndim < 2:
        raise ShapeError(f"Силуэт должен быть как минимум двумерным: {tuple(s1.shape)}")


def iou_loss(s1: torch.Tensor, s2: torch.Tensor) -> torch.Tensor:
    """Мягкий IoU: 1 - Σ s1·s2 / Σ(s1 + s2 - s1·s2).

    Суммирование по двум последним осям; по остальным осям - среднее.
    """
    _check_same_shape(s1, s2)
    product = s1 * s2
    intersection = product.sum(dim=(-2, -1))
    union = (s1 + s2 - product).sum(dim=(-2, -1))
    loss = 1.0 - intersection / union.clamp_min(IOU_EPS)
    return loss.mean()


def multiscale_silhouette_loss(pred: torch.Tensor, target: torch.Tensor,
                               weights: Sequence[float]) -> torch.Tensor:
    """Σ w_i · iou_loss на масштабах 1, 1/2, 1/4, ...

    Args:
        pred: Отрендеренный силуэт
        target: Целевой силуэт того же размера
        weights: Веса масштабов, начиная с полного разрешения
    """
    _check_same_shape(pred, target)
    if not weights:
        raise ValidationError("Нужен хотя бы один масштаб")
    loss = torch.zeros((), dtype=DTYPE)
    for i, weight in enumerate(weights):
        factor = 2 ** i
        loss = loss + weight * iou_loss(downsample(pred, factor), downsample(target, factor))
    return loss


def silhouette_iou(pred: torch.Tensor, target: torch.Tensor, threshold: float = 0.5) -> float:
    """Жесткий IoU бинаризованных масок; две пустые маски дают 1.0."""
    _check_same_shape(pred, target)
    a = pred.detach() > threshold
    b = target.detach() > threshold
    union = int((a | b).sum())
    if union == 0:
        return 1.0
    return int((a & b).sum()) / union


def vertex_symmetry_loss(mesh: Mesh, plane: Optional[SymmetryPlane] = None) -> torch.Tensor:
    """Средний квадрат расстояния от отраженной вершины до ближайшей вершины."""
    return nearest_reflected_sq_distances(mesh.vertices, plane or SymmetryPlane()).mean()


def flip_residual(direct: torch.Tensor, mirrored: torch.Tensor) -> torch.Tensor:
    """Σ по пикселям (hflip(direct) - mirrored)²."""
    _check_same_shape(direct, mirrored)
    return ((hflip(direct) - mirrored) ** 2).sum()


def image_symmetry_loss(mesh: Mesh, views: Sequence[Camera], plane: Optional[SymmetryPlane] = None,
                        cfg: Optional[RenderConfig] = None,
                        renderer: Optional[SoftRenderer] = None,
                        reduction: str = 'sum') -> torch.Tensor:
    """Сравнивает отраженный рендер с рендером из зеркальной камеры.

    Args:
        mesh: Сетка
        views: Ракурсы (не пустой список)
        plane: Плоскость симметрии, по умолчанию x = 0
        cfg: Параметры растеризации, если renderer не передан
        renderer: Готовый растеризатор
        reduction: 'sum' - сумма квадратов по пикселям, 'mean' - та же
            сумма, деленная на число пикселей ракурса

    Returns:
        Среднее по ракурсам от суммы (или среднего) квадратов разностей пикселей
    """
    if not views:
        raise ValidationError("Для симметрии изображений нужен хотя бы один ракурс")
    if reduction not in ISYM_REDUCTIONS:
        raise ValidationError(f"reduction должен быть одним из {ISYM_REDUCTIONS}: {reduction!r}")
    plane = plane or SymmetryPlane()
    renderer = renderer or SoftRenderer(cfg)
    total = torch.zeros((), dtype=DTYPE)
    for cam in views:
        direct = renderer.render(mesh, cam)
        mirrored = renderer.render(mesh, mirror_camera(cam, plane))
        residual = flip_residual(direct, mirrored)
        if reduction == 'mean':
            residual = residual / direct.numel()
        total = total + residual
    return total / len(views)


def laplacian_loss(mesh: Mesh, adj: Optional[MeshAdjacency] = None) -> torch.Tensor:
    """Σ_i ||v_i - центроид соседей||² с равными весами."""
    adj = adj or adjacency(mesh)
    verts = mesh.vertices
    if adj.num_edges == 0:
        return torch.zeros((), dtype=DTYPE)
    src = torch.cat([adj.edges[:, 0], adj.edges[:, 1]])
    dst = torch.cat([adj.edges[:, 1], adj.edges[:, 0]])
    sums = torch.zeros_like(verts).index_add(0, src, verts[dst])
    degree = torch.zeros(verts.shape[0], dtype=DTYPE).index_add(0, src, torch.ones(src.shape[0], dtype=DTYPE))
    has_neighbors = (degree > 0)[:, None]
    centroid = sums / degree.clamp_min(1.0)[:, None]
    diff = torch.where(has_neighbors, verts - centroid, torch.zeros_like(verts))
    return (diff ** 2).sum()


def flatten_terms(mesh: Mesh, adj: MeshAdjacency) -> torch.Tensor:
    """(cos θ + 1)² для каждого внутреннего ребра; θ - двугранный угол.

    Угол измеряется между перпендикулярами, опущенными из противолежащих
    вершин на ребро, поэтому от обхода граней не зависит.
    """
    interior = adj.interior_mask()
    edges = adj.edges[interior]
    opposite = adj.edge_opposite[interior]
    verts = mesh.vertices
    if edges.shape[0] == 0:
        return torch.zeros(0, dtype=DTYPE)

    origin = verts[edges[:, 0]]
    edge = verts[edges[:, 1]] - origin
    edge_sq = (edge * edge).sum(dim=1, keepdim=True)
    safe_edge_sq = torch.where(edge_sq > 0, edge_sq, torch.ones_like(edge_sq))

    wings = []
    for side in range(2):
        arm = verts[opposite[:, side]] - origin
        along = (arm * edge).sum(dim=1, keepdim=True) / safe_edge_sq
        wings.append(arm - along * edge)

    dot = (wings[0] * wings[1]).sum(dim=1)
    norms = (wings[0] * wings[0]).sum(dim=1) * (wings[1] * wings[1]).sum(dim=1)
    valid = (norms > DEGENERATE_WING) & (edge_sq[:, 0] > 0)
    safe_norms = torch.where(valid, norms, torch.ones_like(norms))
    cos = torch.where(valid, dot / torch.sqrt(safe_norms), -torch.ones_like(dot))
    return (cos + 1.0) ** 2


def flatten_loss(mesh: Mesh, adj: Optional[MeshAdjacency] = None) -> torch.Tensor:
    """Сумма flatten_terms; граничные ребра пропускаются с предупреждением."""
    adj = adj or adjacency(mesh)
    skipped = adj.boundary_edge_count
    if skipped:
        logger.warning(f"Пропущено граничных ребер в flatten: {skipped}")
    return flatten_terms(mesh, adj).sum()


_TERM_NAMES = ('silhouette', 'laplacian', 'flatten', 'shape_disc', 'vertex_sym', 'image_sym')


def total_loss(terms: LossTerms, weights: LossWeights) -> Tuple[torch.Tensor, LossReport]:
    """Собирает полную функцию потерь из слагаемых.

    Args:
        terms: Невзвешенные слагаемые
        weights: Веса

    Returns:
        Кортеж (скалярный тензор с графом, LossReport)

    Raises:
        NumericError: Слагаемое равно NaN или бесконечности
    """
    for name in _TERM_NAMES:
        value = getattr(terms, name)
        if not bool(torch.isfinite(value).all()):
            raise NumericError(f"Слагаемое '{name}' не конечно: {value.item()}", term=name)

    regularizer = weights.lambda_laplacian * terms.laplacian + weights.lambda_flatten * terms.flatten
    total = (terms.silhouette + regularizer
             + weights.lambda_sd * terms.shape_disc
             + weights.lambda_sv * terms.vertex_sym
             + weights.lambda_isym * terms.image_sym)

    report = LossReport(
        l_sp=terms.silhouette.item(),
        l_r=regularizer.item(),
        l_sd=terms.shape_disc.item(),
        l_vsym=terms.vertex_sym.item(),
        l_isym=terms.image_sym.item(),
        total=total.item(),
        laplacian=terms.laplacian.item(),
        flatten=terms.flatten.item(),
        boundary_edges=terms.boundary_edges,
    )
    return total, report


def report_fields() -> Tuple[str, ...]:
    """Имена полей LossReport в порядке объявления."""
    return tuple(f.name for f in fields(LossReport))
