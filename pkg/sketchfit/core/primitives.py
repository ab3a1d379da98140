#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Процедурные сетки: куб, тетраэдр, эллипсоид и игрушечные наборы целей."""

import math
from typing import Dict, List, Sequence

import numpy as np
import torch

from sketchfit.core.geometry import DTYPE, Mesh, icosphere

# Вершина i куба: биты (x, y, z) задают знак координаты
_BOX_VERTICES = [
    (-1, -1, -1), (1, -1, -1), (1, 1, -1), (-1, 1, -1),
    (-1, -1, 1), (1, -1, 1), (1, 1, 1), (-1, 1, 1),
]
_BOX_FACES = [
    (0, 2, 1), (0, 3, 2),  # z-
    (4, 5, 6), (4, 6, 7),  # z+
    (0, 1, 5), (0, 5, 4),  # y-
    (3, 7, 6), (3, 6, 2),  # y+
    (0, 4, 7), (0, 7, 3),  # x-
    (1, 2, 6), (1, 6, 5),  # x+
]


def box(size: Sequence[float] = (1.0, 1.0, 1.0)) -> Mesh:
    """Прямоугольный параллелепипед с центром в начале координат (8 вершин, 12 граней)."""
    half = np.asarray(size, dtype=np.float64) / 2.0
    vertices = np.asarray(_BOX_VERTICES, dtype=np.float64) * half
    return Mesh.from_arrays(vertices, _BOX_FACES)


def cube(edge: float = 1.0) -> Mesh:
    return box((edge, edge, edge))


def tetrahedron(edge: float = 1.0) -> Mesh:
    """Правильный тетраэдр с центром в начале координат."""
    scale = edge / (2.0 * math.sqrt(2.0))
    vertices = np.array([
        (1, 1, 1), (-1, -1, 1), (-1, 1, -1), (1, -1, -1),
    ], dtype=np.float64) * scale
    faces = [(0, 1, 3), (0, 2, 1), (0, 3, 2), (1, 2, 3)]
    return Mesh.from_arrays(vertices, faces)


def ellipsoid(radii: Sequence[float] = (1.0, 1.0, 1.0), subdivisions: int = 2) -> Mesh:
    sphere = icosphere(subdivisions)
    return Mesh(sphere.vertices * torch.as_tensor(radii, dtype=DTYPE), sphere.faces)


def perturb_asymmetric(mesh: Mesh, amount: float, seed: int = 0) -> Mesh:
    """Сдвигает вершины с x > 0 вдоль оси y, нарушая зеркальную симметрию."""
    rng = np.random.default_rng(seed)
    verts = mesh.vertices.detach().cpu().numpy().copy()
    right = verts[:, 0] > 1e-9
    noise = rng.uniform(0.5, 1.0, size=int(right.sum()))
    verts[right, 1] += amount * noise * verts[right, 0]
    return Mesh(torch.as_tensor(verts, dtype=DTYPE), mesh.faces.clone())


def toy_suite() -> Dict[str, Mesh]:
    """Пять симметричных целей для сравнительных прогонов."""
    return {
        'cube': cube(1.0),
        'slab': box((1.2, 0.6, 0.8)),
        'tower': box((0.6, 1.3, 0.6)),
        'egg': ellipsoid((0.55, 0.75, 0.55), subdivisions=2),
        'disc': ellipsoid((0.8, 0.45, 0.8), subdivisions=2),
    }


def real_pool(count: int = 8, seed: int = 0) -> List[Mesh]:
    """Набор симметричных примитивов - "настоящие" формы для дискриминатора.

    Чередует сферы, параллелепипеды и эллипсоиды со случайными размерами.
    """
    rng = np.random.default_rng(seed)
    pool: List[Mesh] = []
    for i in range(count):
        kind = i % 3
        if kind == 0:
            pool.append(ellipsoid((rng.uniform(0.5, 0.8),) * 3, subdivisions=2))
        elif kind == 1:
            pool.append(box(tuple(rng.uniform(0.6, 1.2, size=3))))
        else:
            pool.append(ellipsoid(tuple(rng.uniform(0.4, 0.9, size=3)), subdivisions=2))
    return pool
