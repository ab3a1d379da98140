#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Треугольные сетки, шаблон-икосфера, смежность, отражение и voxel IoU."""

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np
import torch

from sketchfit.errors import (
    CapacityError,
    DegenerateInputError,
    NonManifoldError,
    ShapeError,
    ValidationError,
)
from sketchfit.utils.logging_utils import get_logger

DTYPE = torch.float64
MAX_SUBDIVISIONS = 5

logger = get_logger('Geometry')

ArrayLike = Union[torch.Tensor, np.ndarray, Sequence]


@dataclass(frozen=True)
class Mesh:
    """Треугольная сетка M = (V, F).

    vertices: тензор V×3 float64 (может требовать градиент).
    faces: тензор F×3 int64, обход против часовой стрелки = внешняя нормаль.
    """

    vertices: torch.Tensor
    faces: torch.Tensor

    @classmethod
    def from_arrays(cls, vertices: ArrayLike, faces: ArrayLike) -> 'Mesh':
        """Создает сетку из списков или массивов и проверяет инварианты."""
        verts = torch.as_tensor(np.asarray(vertices, dtype=np.float64).reshape(-1, 3), dtype=DTYPE)
        tris = torch.as_tensor(np.asarray(faces, dtype=np.int64).reshape(-1, 3), dtype=torch.int64)
        mesh = cls(verts, tris)
        mesh.validate()
        return mesh

    @classmethod
    def empty(cls) -> 'Mesh':
        return cls(torch.zeros((0, 3), dtype=DTYPE), torch.zeros((0, 3), dtype=torch.int64))

    @property
    def num_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def num_faces(self) -> int:
        return int(self.faces.shape[0])

    def validate(self) -> None:
        """Проверяет инварианты сетки.

        Raises:
            ValidationError: Неверная форма, индекс вне диапазона,
                повтор вершины в грани или нечисловые координаты
        """
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ShapeError(f"Ожидается массив вершин V×3, получено {tuple(self.vertices.shape)}")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise ShapeError(f"Ожидается массив граней F×3, получено {tuple(self.faces.shape)}")
        if not bool(torch.isfinite(self.vertices).all()):
            raise ValidationError("Координаты вершин содержат NaN или бесконечность")
        if self.num_faces == 0:
            return
        if int(self.faces.min()) < 0 or int(self.faces.max()) >= self.num_vertices:
            raise ValidationError("Индекс грани вне диапазона вершин")
        f = self.faces
        if bool(((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])).any()):
            raise ValidationError("Грань содержит повторяющийся индекс вершины")

    def detach(self) -> 'Mesh':
        return Mesh(self.vertices.detach().clone(), self.faces.clone())

    def scaled(self, factor: float) -> 'Mesh':
        return Mesh(self.vertices * factor, self.faces)

    def translated(self, offset: Sequence[float]) -> 'Mesh':
        return Mesh(self.vertices + torch.as_tensor(offset, dtype=DTYPE), self.faces)


@dataclass(frozen=True)
class SymmetryPlane:
    """Плоскость симметрии {x : n·x = offset} с единичной нормалью n."""

    normal: Tuple[float, float, float] = (1.0, 0.0, 0.0)
    offset: float = 0.0

    def validate(self) -> None:
        norm = math.sqrt(sum(c * c for c in self.normal))
        if len(self.normal) != 3 or abs(norm - 1.0) > 1e-9:
            raise ValidationError(f"Нормаль плоскости должна быть единичной: {self.normal}")

    def normal_tensor(self) -> torch.Tensor:
        return torch.tensor(self.normal, dtype=DTYPE)


@dataclass(frozen=True)
class VoxelGrid:
    """Воксельная сетка R×R×R, индексы occupancy[ix, iy, iz]."""

    resolution: int
    bounds_min: np.ndarray
    bounds_max: np.ndarray
    occupancy: np.ndarray

    @property
    def count(self) -> int:
        return int(self.occupancy.sum())


@dataclass(frozen=True)
class MeshAdjacency:
    """Ребра и соседство вершин.

    edges: E×2, i < j, каждое неориентированное ребро один раз.
    edge_faces: E×2 индексы смежных граней, -1 если грани нет.
    edge_opposite: E×2 противолежащие вершины в этих гранях, -1 если нет.
    """

    edges: torch.Tensor
    edge_faces: torch.Tensor
    edge_opposite: torch.Tensor
    neighbors: List[Set[int]]

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def boundary_edge_count(self) -> int:
        return int((self.edge_faces[:, 1] < 0).sum())

    def interior_mask(self) -> torch.Tensor:
        return self.edge_faces[:, 1] >= 0


# Икосаэдр: вершины (±1, ±φ, 0) и циклические перестановки.
# Множество вершин и граней симметрично относительно x = 0.
_PHI = (1.0 + math.sqrt(5.0)) / 2.0
_ICOSAHEDRON_VERTICES = [
    (-1.0, _PHI, 0.0), (1.0, _PHI, 0.0), (-1.0, -_PHI, 0.0), (1.0, -_PHI, 0.0),
    (0.0, -1.0, _PHI), (0.0, 1.0, _PHI), (0.0, -1.0, -_PHI), (0.0, 1.0, -_PHI),
    (_PHI, 0.0, -1.0), (_PHI, 0.0, 1.0), (-_PHI, 0.0, -1.0), (-_PHI, 0.0, 1.0),
]
_ICOSAHEDRON_FACES = [
    (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
    (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
    (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
    (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
]


def icosphere(subdivisions: int = 0) -> Mesh:
    """Строит икосферу единичного радиуса.

    Каждый шаг делит треугольник на четыре по серединам ребер,
    новые вершины проецируются на сферу.

    Args:
        subdivisions: Число подразбиений, 0..5

    Returns:
        Замкнутая сетка с 10·4^s + 2 вершинами и 20·4^s гранями
    """
    if subdivisions < 0:
        raise ValidationError(f"Число подразбиений не может быть отрицательным: {subdivisions}")
    if subdivisions > MAX_SUBDIVISIONS:
        raise CapacityError(
            f"Подразбиение {subdivisions} превышает предел {MAX_SUBDIVISIONS}"
        )

    verts = np.array(_ICOSAHEDRON_VERTICES, dtype=np.float64)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    vertices: List[np.ndarray] = list(verts)
    faces: List[Tuple[int, int, int]] = list(_ICOSAHEDRON_FACES)

    for _ in range(subdivisions):
        midpoint_cache: Dict[Tuple[int, int], int] = {}

        def midpoint(i: int, j: int) -> int:
            key = (i, j) if i < j else (j, i)
            index = midpoint_cache.get(key)
            if index is None:
                point = vertices[i] + vertices[j]
                vertices.append(point / np.linalg.norm(point))
                index = len(vertices) - 1
                midpoint_cache[key] = index
            return index

        refined = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            refined.extend([(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)])
        faces = refined

    return Mesh(
        torch.as_tensor(np.stack(vertices), dtype=DTYPE),
        torch.as_tensor(np.array(faces, dtype=np.int64), dtype=torch.int64),
    )


def adjacency(mesh: Mesh) -> MeshAdjacency:
    """Строит список ребер со смежными гранями и соседей вершин.

    Raises:
        NonManifoldError: Ребро принадлежит более чем двум граням
    """
    edge_index: Dict[Tuple[int, int], int] = {}
    edges: List[Tuple[int, int]] = []
    edge_faces: List[List[int]] = []
    edge_opposite: List[List[int]] = []
    neighbors: List[Set[int]] = [set() for _ in range(mesh.num_vertices)]

    for face_id, (a, b, c) in enumerate(mesh.faces.tolist()):
        for u, v, w in ((a, b, c), (b, c, a), (c, a, b)):
            key = (u, v) if u < v else (v, u)
            index = edge_index.get(key)
            if index is None:
                index = len(edges)
                edge_index[key] = index
                edges.append(key)
                edge_faces.append([face_id, -1])
                edge_opposite.append([w, -1])
            elif edge_faces[index][1] < 0:
                edge_faces[index][1] = face_id
                edge_opposite[index][1] = w
            else:
                raise NonManifoldError(f"Ребро {key} принадлежит более чем двум граням")
            neighbors[u].add(v)
            neighbors[v].add(u)

    return MeshAdjacency(
        edges=torch.tensor(edges, dtype=torch.int64).reshape(-1, 2),
        edge_faces=torch.tensor(edge_faces, dtype=torch.int64).reshape(-1, 2),
        edge_opposite=torch.tensor(edge_opposite, dtype=torch.int64).reshape(-1, 2),
        neighbors=neighbors,
    )


def reflection_matrix(plane: SymmetryPlane) -> torch.Tensor:
    """Матрица Хаусхолдера T = I - 2 n nᵀ."""
    plane.validate()
    n = plane.normal_tensor()
    return torch.eye(3, dtype=DTYPE) - 2.0 * torch.outer(n, n)


def reflect_points(points: torch.Tensor, plane: SymmetryPlane) -> torch.Tensor:
    """Отражает точки: x -> T(x - d·n) + d·n."""
    t = reflection_matrix(plane)
    if plane.offset == 0.0:
        return points @ t.T
    shift = plane.offset * plane.normal_tensor()
    return (points - shift) @ t.T + shift


def reflect_mesh(mesh: Mesh, plane: SymmetryPlane) -> Mesh:
    """Зеркальная копия сетки; обход граней меняется, чтобы нормали остались внешними."""
    return Mesh(reflect_points(mesh.vertices, plane), mesh.faces[:, [0, 2, 1]])


def merge_meshes(a: Mesh, b: Mesh) -> Mesh:
    """Объединение двух сеток без слияния вершин."""
    return Mesh(
        torch.cat([a.vertices, b.vertices], dim=0),
        torch.cat([a.faces, b.faces + a.num_vertices], dim=0),
    )


def apply_offsets(template: Mesh, offsets: torch.Tensor) -> Mesh:
    """Деформирует шаблон смещениями вершин; грани не меняются."""
    offsets = torch.as_tensor(offsets, dtype=DTYPE)
    if tuple(offsets.shape) != tuple(template.vertices.shape):
        raise ShapeError(
            f"Число смещений {tuple(offsets.shape)} не совпадает с вершинами {tuple(template.vertices.shape)}"
        )
    return Mesh(template.vertices + offsets, template.faces)


def nearest_reflected_sq_distances(
    vertices: torch.Tensor, plane: SymmetryPlane, chunk_size: int = 2048
) -> torch.Tensor:
    """Для каждой вершины: min_j ||T v_i - v_j||^2.

    Ближайший сосед ищется точно; при равенстве берется меньший индекс.
    Градиент проходит и в v_i, и в найденную v_j.
    """
    if vertices.shape[0] == 0:
        raise DegenerateInputError("Пустая сетка: симметрия не определена")
    reflected = reflect_points(vertices, plane)
    parts = []
    for start in range(0, reflected.shape[0], chunk_size):
        block = reflected[start:start + chunk_size]
        with torch.no_grad():
            diff = block[:, None, :] - vertices[None, :, :]
            nearest = (diff * diff).sum(dim=-1).argmin(dim=1)
        matched = vertices[nearest]
        parts.append(((block - matched) ** 2).sum(dim=-1))
    return torch.cat(parts)


def asymmetry_distance(mesh: Mesh, plane: Optional[SymmetryPlane] = None) -> float:
    """Средний квадрат расстояния от отраженной вершины до ближайшей вершины сетки."""
    plane = plane or SymmetryPlane()
    with torch.no_grad():
        return float(nearest_reflected_sq_distances(mesh.vertices.detach(), plane).mean())


def _union_bounds(meshes: Sequence[Mesh], pad: float = 0.05) -> Tuple[np.ndarray, np.ndarray]:
    points = np.concatenate([m.vertices.detach().cpu().numpy() for m in meshes], axis=0)
    if points.shape[0] == 0:
        raise DegenerateInputError("Нет вершин для построения воксельной сетки")
    lo, hi = points.min(axis=0), points.max(axis=0)
    extent = hi - lo
    span = float(extent.max())
    if span <= 0:
        raise DegenerateInputError("Ограничивающий прямоугольник вырожден")
    # Плоская по одной оси сетка все равно получает ненулевую толщину
    extent = np.where(extent > 0, extent, span)
    return lo - pad * extent, hi + pad * extent


def voxelize(mesh: Mesh, bounds_min: np.ndarray, bounds_max: np.ndarray, resolution: int) -> VoxelGrid:
    """Вокселизация замкнутой сетки тестом четности луча вдоль +x.

    Ячейка занята, если ее центр внутри сетки. Лучи сдвинуты на малую
    фиксированную долю ячейки, чтобы не проходить точно через ребра.
    """
    if resolution < 1:
        raise ValidationError(f"Разрешение вокселизации должно быть положительным: {resolution}")
    lo = np.asarray(bounds_min, dtype=np.float64)
    hi = np.asarray(bounds_max, dtype=np.float64)
    if not np.all(hi > lo):
        raise DegenerateInputError("Границы воксельной сетки вырождены")

    cell = (hi - lo) / resolution
    centers = [lo[k] + (np.arange(resolution) + 0.5) * cell[k] for k in range(3)]
    occupancy = np.zeros((resolution, resolution, resolution), dtype=bool)
    if mesh.num_faces == 0:
        return VoxelGrid(resolution, lo, hi, occupancy)

    tri = mesh.vertices.detach().cpu().numpy()[mesh.faces.cpu().numpy()]  # F×3×3
    nudge_y = 1.234567e-7 * cell[1]
    nudge_z = 2.345678e-7 * cell[2]
    ray_y, ray_z = np.meshgrid(centers[1] + nudge_y, centers[2] + nudge_z, indexing='ij')
    ray_y, ray_z = ray_y.ravel(), ray_z.ravel()  # R² лучей, индекс iy*R + iz

    # Пересечения считаем в проекции на плоскость yz
    y0, z0 = tri[:, 0, 1], tri[:, 0, 2]
    y1, z1 = tri[:, 1, 1], tri[:, 1, 2]
    y2, z2 = tri[:, 2, 1], tri[:, 2, 2]
    det = (y1 - y0) * (z2 - z0) - (y2 - y0) * (z1 - z0)
    usable = np.abs(det) > 1e-300
    crossings = np.zeros((ray_y.size, resolution + 1), dtype=np.int64)

    chunk = max(1, 4_000_000 // max(1, tri.shape[0]))
    for start in range(0, ray_y.size, chunk):
        py = ray_y[start:start + chunk, None]
        pz = ray_z[start:start + chunk, None]
        safe_det = np.where(usable, det, 1.0)
        w1 = ((py - y0) * (z2 - z0) - (y2 - y0) * (pz - z0)) / safe_det
        w2 = ((y1 - y0) * (pz - z0) - (py - y0) * (z1 - z0)) / safe_det
        w0 = 1.0 - w1 - w2
        hit = usable & (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        rows, faces = np.nonzero(hit)
        if rows.size == 0:
            continue
        x_hit = (w0[rows, faces] * tri[faces, 0, 0]
                 + w1[rows, faces] * tri[faces, 1, 0]
                 + w2[rows, faces] * tri[faces, 2, 0])
        # Число центров ячеек левее точки пересечения
        slot = np.searchsorted(centers[0], x_hit, side='left')
        np.add.at(crossings, (rows + start, slot), 1)

    # Для ячейки k: число пересечений с x_hit > x_k = сумма по slot > k
    ahead = np.cumsum(crossings[:, ::-1], axis=1)[:, ::-1][:, 1:]
    inside = (ahead % 2 == 1).reshape(resolution, resolution, resolution)  # iy, iz, ix
    occupancy = np.transpose(inside, (2, 0, 1)).copy()
    return VoxelGrid(resolution, lo, hi, occupancy)


def voxel_iou(a: Mesh, b: Mesh, resolution: int = 32) -> float:
    """IoU воксельных представлений двух сеток на общей сетке.

    Raises:
        DegenerateInputError: Обе вокселизации пусты
    """
    lo, hi = _union_bounds([a, b])
    grid_a = voxelize(a, lo, hi, resolution)
    grid_b = voxelize(b, lo, hi, resolution)
    union = int(np.logical_or(grid_a.occupancy, grid_b.occupancy).sum())
    if union == 0:
        raise DegenerateInputError("Обе вокселизации пусты: IoU не определен")
    inter = int(np.logical_and(grid_a.occupancy, grid_b.occupancy).sum())
    logger.debug(f"Voxel IoU: пересечение {inter}, объединение {union}, разрешение {resolution}")
    return inter / union


def euler_characteristic(mesh: Mesh) -> int:
    """V - E + F."""
    return mesh.num_vertices - adjacency(mesh).num_edges + mesh.num_faces
