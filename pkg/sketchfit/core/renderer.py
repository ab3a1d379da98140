#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Камера, выбор ракурсов, зеркальные камеры и мягкий растеризатор силуэтов."""

import dataclasses
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F

from sketchfit.config import RenderConfig, is_power_of_two
from sketchfit.core.geometry import DTYPE, Mesh, SymmetryPlane, reflect_points
from sketchfit.errors import ShapeError, ValidationError
from sketchfit.utils.logging_utils import get_logger

# Силуэт - тензор H×W float64 со значениями в [0, 1]
Silhouette = torch.Tensor

DEFAULT_DISTANCE = 2.732
# Полный вертикальный угол обзора, градусы (половинный угол 30°)
DEFAULT_FOV = 60.0
RANDOM_ELEVATION_RANGE = (-20.0, 40.0)
WORLD_UP = np.array([0.0, 1.0, 0.0])
# Мягкая агрегация не должна давать ровно 0 или 1
SATURATION_EPS = 1e-12
MIN_PROJECTED_AREA = 1e-12

logger = get_logger('Renderer')


@dataclass(frozen=True)
class Camera:
    """Камера, смотрящая на target с точки на сфере радиуса distance.

    Углы в градусах; fov - полный вертикальный угол обзора.
    """

    azimuth: float = 0.0
    elevation: float = 0.0
    distance: float = DEFAULT_DISTANCE
    fov: float = DEFAULT_FOV
    image_size: int = 64
    target: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def validate(self) -> None:
        if not self.distance > 0:
            raise ValidationError(f"Расстояние камеры должно быть положительным: {self.distance}")
        if not 0.0 < self.fov < 180.0:
            raise ValidationError(f"Угол обзора вне (0, 180): {self.fov}")
        if not is_power_of_two(self.image_size) or self.image_size < 8:
            raise ValidationError(f"Размер изображения должен быть степенью двойки >= 8: {self.image_size}")
        if not abs(self.elevation) < 90.0:
            raise ValidationError(
                f"Возвышение {self.elevation}° вырождает вектор 'вверх'; допустимо |e| < 90"
            )

    def direction(self) -> np.ndarray:
        a = math.radians(self.azimuth)
        e = math.radians(self.elevation)
        return np.array([math.cos(e) * math.sin(a), math.sin(e), math.cos(e) * math.cos(a)])

    def eye(self) -> np.ndarray:
        return np.asarray(self.target, dtype=np.float64) + self.distance * self.direction()

    def with_size(self, image_size: int) -> 'Camera':
        return dataclasses.replace(self, image_size=image_size)


def camera_from_angles(azimuth: float, elevation: float, distance: float = DEFAULT_DISTANCE,
                       image_size: int = 64, fov: float = DEFAULT_FOV) -> Camera:
    """Создает и проверяет камеру; канонический вид - азимут 0, возвышение 0."""
    cam = Camera(float(azimuth), float(elevation), float(distance), float(fov), int(image_size))
    cam.validate()
    return cam


def mirror_camera(cam: Camera, plane: Optional[SymmetryPlane] = None) -> Camera:
    """Отражает точку обзора камеры относительно плоскости симметрии.

    Для плоскости x = 0 это просто смена знака азимута. Для других
    вертикальных плоскостей, проходящих через target, азимут отражается
    относительно направления плоскости. В общем случае отражаются и
    положение камеры, и target.
    """
    plane = plane or SymmetryPlane()
    plane.validate()
    n = np.asarray(plane.normal, dtype=np.float64)
    target = np.asarray(cam.target, dtype=np.float64)
    through_target = abs(float(n @ target) - plane.offset) < 1e-12

    if through_target and n[1] == 0.0 and n[2] == 0.0:
        return dataclasses.replace(cam, azimuth=-cam.azimuth)
    if through_target and abs(n[1]) < 1e-12:
        psi = math.degrees(math.atan2(n[0], n[2]))
        azimuth = (2.0 * psi + 180.0 - cam.azimuth + 180.0) % 360.0 - 180.0
        return dataclasses.replace(cam, azimuth=azimuth)

    logger.debug("Наклонная плоскость симметрии: зеркальный кадр не совпадет с отражением по горизонтали")
    points = torch.as_tensor(np.stack([cam.eye(), target]), dtype=DTYPE)
    eye_r, target_r = reflect_points(points, plane).numpy()
    offset = eye_r - target_r
    distance = float(np.linalg.norm(offset))
    d = offset / distance
    mirrored = Camera(
        azimuth=math.degrees(math.atan2(d[0], d[2])),
        elevation=math.degrees(math.asin(max(-1.0, min(1.0, d[1])))),
        distance=distance,
        fov=cam.fov,
        image_size=cam.image_size,
        target=tuple(float(c) for c in target_r),
    )
    mirrored.validate()
    return mirrored


def sample_random_views(count: int, seed: Union[int, np.random.Generator] = 0,
                        distance: float = DEFAULT_DISTANCE, image_size: int = 64,
                        fov: float = DEFAULT_FOV) -> List[Camera]:
    """Случайные ракурсы: азимут U[0, 360), возвышение U[-20, 40].

    Args:
        count: Число ракурсов
        seed: Зерно или уже созданный генератор numpy

    Returns:
        Список камер; для одного и того же зерна список одинаков
    """
    if count < 0:
        raise ValidationError(f"Число ракурсов не может быть отрицательным: {count}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    azimuths = rng.uniform(0.0, 360.0, size=count)
    elevations = rng.uniform(*RANDOM_ELEVATION_RANGE, size=count)
    return [camera_from_angles(a, e, distance, image_size, fov) for a, e in zip(azimuths, elevations)]


def _view_basis(cam: Camera) -> Tuple[torch.Tensor, torch.Tensor]:
    """Положение камеры и матрица 3×3 со строками right, up, forward."""
    eye = cam.eye()
    forward = np.asarray(cam.target, dtype=np.float64) - eye
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, WORLD_UP)
    right /= np.linalg.norm(right)
    up = np.cross(right, forward)
    basis = np.stack([right, up, forward])
    return torch.as_tensor(eye, dtype=DTYPE), torch.as_tensor(basis, dtype=DTYPE)


def project(vertices: torch.Tensor, cam: Camera) -> Tuple[torch.Tensor, torch.Tensor]:
    """Перспективная проекция вершин в NDC.

    Returns:
        Кортеж (координаты NDC V×2, глубина V)
    """
    eye, basis = _view_basis(cam)
    local = (vertices - eye) @ basis.T
    depth = local[:, 2]
    focal = 1.0 / math.tan(math.radians(cam.fov) / 2.0)
    safe_depth = torch.where(depth.abs() > 1e-12, depth, torch.ones_like(depth))
    ndc = local[:, :2] * (focal / safe_depth)[:, None]
    return ndc, depth


def pixel_centers(size: int) -> torch.Tensor:
    """Центры пикселей в NDC, порядок строк сверху вниз: P×2 (x, y)."""
    coords = (2.0 * torch.arange(size, dtype=DTYPE) + 1.0) / size - 1.0
    ys = -coords
    grid_y, grid_x = torch.meshgrid(ys, coords, indexing='ij')
    return torch.stack([grid_x.reshape(-1), grid_y.reshape(-1)], dim=1)


class SoftRenderer:
    """Мягкий растеризатор силуэтов с вероятностной агрегацией покрытия.

    Влияние грани j на пиксель p: D = sigmoid(δ·d²/σ), где d - расстояние
    от пикселя до проекции треугольника, δ = +1 внутри и -1 снаружи.
    Силуэт S = 1 - Π(1 - D), произведение считается в логарифмах.
    """

    def __init__(self, config: Optional[RenderConfig] = None):
        """Инициализация растеризатора.

        Args:
            config: Параметры растеризации (sigma, фон, отсечение)
        """
        self.config = config or RenderConfig()
        self.config.validate()
        self.logger = get_logger('SoftRenderer')
        self._grids: Dict[int, torch.Tensor] = {}
        # Грань дальше этого расстояния от пикселя дает влияние меньше cull_threshold
        self._margin = math.sqrt(self.config.sigma * math.log(1.0 / self.config.cull_threshold))

    def _pixels(self, size: int) -> torch.Tensor:
        grid = self._grids.get(size)
        if grid is None:
            grid = pixel_centers(size)
            self._grids[size] = grid
        return grid

    def _background(self, size: int) -> Silhouette:
        return torch.full((size, size), float(self.config.background), dtype=DTYPE)

    def render(self, mesh: Mesh, cam: Camera) -> Silhouette:
        """Рендерит мягкий силуэт сетки.

        Args:
            mesh: Сетка (вершины могут требовать градиент)
            cam: Камера

        Returns:
            Тензор image_size×image_size, дифференцируемый по вершинам
        """
        cam.validate()
        size = cam.image_size
        if mesh.vertices.ndim != 2 or mesh.vertices.shape[-1] != 3:
            raise ShapeError(f"Ожидается массив вершин V×3, получено {tuple(mesh.vertices.shape)}")
        if bool(torch.isnan(mesh.vertices).any()):
            raise ValidationError("Вершина сетки содержит NaN")
        if mesh.num_faces == 0:
            return self._background(size)

        ndc, depth = project(mesh.vertices, cam)
        tri = ndc[mesh.faces]  # F×3×2
        with torch.no_grad():
            in_front = (depth[mesh.faces] > self.config.near).all(dim=1)
            e1 = tri[:, 1] - tri[:, 0]
            e2 = tri[:, 2] - tri[:, 0]
            area2 = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
            valid = in_front & (0.5 * area2.abs() >= MIN_PROJECTED_AREA)
            face_ids = torch.nonzero(valid, as_tuple=True)[0]
        if face_ids.numel() == 0:
            self.logger.debug("Нет видимых граней: силуэт заполнен фоном")
            return self._background(size)

        tri = tri[face_ids]
        orientation = torch.sign(area2[face_ids])
        pixels = self._pixels(size)

        with torch.no_grad():
            lo = tri.min(dim=1).values - self._margin
            hi = tri.max(dim=1).values + self._margin
            px, py = pixels[:, 0:1], pixels[:, 1:2]
            near_face = ((px >= lo[None, :, 0]) & (px <= hi[None, :, 0])
                         & (py >= lo[None, :, 1]) & (py <= hi[None, :, 1]))
            pix_idx, pair_face = torch.nonzero(near_face, as_tuple=True)

        log_outside = torch.zeros(pixels.shape[0], dtype=DTYPE)
        if pix_idx.numel() > 0:
            x = self._signed_scaled_distance(pixels[pix_idx], tri[pair_face], orientation[pair_face])
            log_outside = log_outside.index_add(0, pix_idx, F.logsigmoid(-x))

        coverage = -torch.expm1(log_outside)
        coverage = coverage.clamp(SATURATION_EPS, 1.0 - SATURATION_EPS)
        background = float(self.config.background)
        if background != 0.0:
            coverage = coverage * (1.0 - background) + background
        return coverage.reshape(size, size)

    def _signed_scaled_distance(self, points: torch.Tensor, tri: torch.Tensor,
                                orientation: torch.Tensor) -> torch.Tensor:
        """δ·d²/σ для пар (пиксель, треугольник).

        d² - точный квадрат расстояния до границы треугольника; при равных
        расстояниях выбирается ребро с меньшим индексом.
        """
        sq_dists = []
        inside = torch.ones(points.shape[0], dtype=torch.bool)
        for k in range(3):
            start = tri[:, k]
            edge = tri[:, (k + 1) % 3] - start
            rel = points - start
            edge_sq = (edge * edge).sum(dim=1)
            t = ((rel * edge).sum(dim=1) / edge_sq).clamp(0.0, 1.0)
            diff = rel - t[:, None] * edge
            sq_dists.append((diff * diff).sum(dim=1))
            with torch.no_grad():
                cross = edge[:, 0] * rel[:, 1] - edge[:, 1] * rel[:, 0]
                inside &= (cross * orientation) > 0
        d2 = torch.stack(sq_dists, dim=1).min(dim=1).values
        sign = torch.where(inside, 1.0, -1.0).to(DTYPE)
        return sign * d2 / self.config.sigma

    def render_views(self, mesh: Mesh, cams: Sequence[Camera]) -> torch.Tensor:
        """Рендер набора ракурсов: тензор V×H×W."""
        if not cams:
            raise ValidationError("Список ракурсов пуст")
        return torch.stack([self.render(mesh, cam) for cam in cams])


def soft_silhouette(mesh: Mesh, cam: Camera, cfg: Optional[RenderConfig] = None) -> Silhouette:
    """Мягкий силуэт сетки из камеры cam."""
    return SoftRenderer(cfg).render(mesh, cam)


def silhouette_vertex_grad(mesh: Mesh, cam: Camera, cfg: Optional[RenderConfig],
                           upstream: torch.Tensor) -> torch.Tensor:
    """Градиент по вершинам для заданного градиента по пикселям силуэта.

    Args:
        upstream: dL/dS, тензор H×W

    Returns:
        dL/dV, тензор V×3
    """
    verts = mesh.vertices.detach().clone().requires_grad_(True)
    sil = soft_silhouette(Mesh(verts, mesh.faces), cam, cfg)
    if tuple(upstream.shape) != tuple(sil.shape):
        raise ShapeError(f"Градиент {tuple(upstream.shape)} не совпадает с силуэтом {tuple(sil.shape)}")
    if not sil.requires_grad:
        return torch.zeros_like(verts)
    (grad,) = torch.autograd.grad(sil, verts, grad_outputs=upstream.to(DTYPE), allow_unused=True)
    return torch.zeros_like(verts) if grad is None else grad


def downsample(s: Silhouette, factor: int) -> Silhouette:
    """Усреднение блоками factor×factor."""
    if not is_power_of_two(factor):
        raise ValidationError(f"Коэффициент уменьшения должен быть степенью двойки: {factor}")
    height, width = s.shape[-2], s.shape[-1]
    if height % factor or width % factor:
        raise ShapeError(f"Коэффициент {factor} не делит размер {height}×{width}")
    if factor == 1:
        return s
    batch = s.reshape(-1, 1, height, width)
    pooled = F.avg_pool2d(batch, kernel_size=factor, stride=factor)
    return pooled.reshape(*s.shape[:-2], height // factor, width // factor)


def hflip(s: Silhouette) -> Silhouette:
    """Отражение изображения по горизонтали."""
    return torch.flip(s, dims=(-1,))


def binarize(s: Silhouette, threshold: float = 0.5) -> Silhouette:
    return (s > threshold).to(DTYPE)
