#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import math

import numpy as np
import pytest
import torch

from sketchfit.core import primitives
from sketchfit.core.geometry import (
    Mesh, SymmetryPlane, adjacency, apply_offsets, asymmetry_distance, euler_characteristic, icosphere,
    merge_meshes, reflect_mesh, reflect_points, reflection_matrix, voxel_iou, voxelize,
)
from sketchfit.errors import CapacityError, NonManifoldError, ShapeError, ValidationError


@pytest.mark.parametrize("subdivisions", [0, 1, 2, 3])
def test_icosphere_counts_and_radius(subdivisions):
    mesh = icosphere(subdivisions)
    assert mesh.num_vertices == 10 * 4 ** subdivisions + 2
    assert mesh.num_faces == 20 * 4 ** subdivisions
    radii = torch.linalg.norm(mesh.vertices, dim=1)
    assert float((radii - 1.0).abs().max()) < 1e-7
    assert euler_characteristic(mesh) == 2


def test_icosphere_rejects_bad_subdivisions():
    with pytest.raises(ValidationError):
        icosphere(-1)
    with pytest.raises(CapacityError):
        icosphere(6)


def test_icosphere_faces_point_outward(ico1):
    tri = ico1.vertices[ico1.faces]
    normals = torch.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0], dim=1)
    centers = tri.mean(dim=1)
    assert bool(((normals * centers).sum(dim=1) > 0).all())


def test_mesh_validation_errors():
    with pytest.raises(ShapeError):
        Mesh.from_arrays(np.zeros((4, 2)), [(0, 1, 2)])
    with pytest.raises(ValidationError):
        Mesh.from_arrays(np.zeros((3, 3)), [(0, 1, 3)])
    with pytest.raises(ValidationError):
        Mesh.from_arrays(np.zeros((3, 3)), [(0, 1, 1)])
    with pytest.raises(ValidationError):
        Mesh.from_arrays([[0, 0, float('nan')], [1, 0, 0], [0, 1, 0]], [(0, 1, 2)])


def test_adjacency_closed_mesh():
    adj = adjacency(icosphere(0))
    assert adj.num_edges == 30
    assert adj.boundary_edge_count == 0
    assert all(len(n) == 5 for n in adj.neighbors)
    assert bool((adj.edges[:, 0] < adj.edges[:, 1]).all())


def test_adjacency_open_mesh_counts_boundary():
    mesh = Mesh.from_arrays([(0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0)], [(0, 1, 2), (1, 3, 2)])
    adj = adjacency(mesh)
    assert adj.num_edges == 5
    assert adj.boundary_edge_count == 4


def test_adjacency_non_manifold_edge():
    verts = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1)]
    mesh = Mesh.from_arrays(verts, [(0, 1, 2), (1, 0, 3), (0, 1, 4)])
    with pytest.raises(NonManifoldError):
        adjacency(mesh)


@pytest.mark.parametrize("normal", [(1.0, 0.0, 0.0), (0.0, 0.6, 0.8), (1 / math.sqrt(3),) * 3])
def test_reflection_is_involution(normal):
    t = reflection_matrix(SymmetryPlane(normal))
    assert torch.allclose(t @ t, torch.eye(3, dtype=t.dtype), atol=1e-12)
    points = torch.randn(10, 3, dtype=torch.float64, generator=torch.Generator().manual_seed(0))
    plane = SymmetryPlane(normal, offset=0.3)
    twice = reflect_points(reflect_points(points, plane), plane)
    assert float((twice - points).abs().max()) < 1e-9


def test_reflection_matrix_x_plane():
    t = reflection_matrix(SymmetryPlane())
    expected = torch.diag(torch.tensor([-1.0, 1.0, 1.0], dtype=torch.float64))
    assert torch.equal(t, expected)


def test_symmetry_plane_requires_unit_normal():
    with pytest.raises(ValidationError):
        reflection_matrix(SymmetryPlane((1.0, 1.0, 0.0)))


def test_reflect_mesh_keeps_orientation(asymmetric_ico1):
    mirrored = reflect_mesh(asymmetric_ico1, SymmetryPlane())
    tri = mirrored.vertices[mirrored.faces]
    normals = torch.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0], dim=1)
    assert bool(((normals * tri.mean(dim=1)).sum(dim=1) > 0).all())


def test_asymmetry_distance(ico2, asymmetric_ico1):
    assert asymmetry_distance(ico2) < 1e-12
    assert asymmetry_distance(primitives.cube(1.0)) < 1e-12
    assert asymmetry_distance(asymmetric_ico1) > 1e-4


def test_asymmetry_distance_ignores_vertex_order(asymmetric_ico1):
    perm = torch.randperm(asymmetric_ico1.num_vertices, generator=torch.Generator().manual_seed(3))
    inverse = torch.empty_like(perm)
    inverse[perm] = torch.arange(perm.numel())
    shuffled = Mesh(asymmetric_ico1.vertices[perm], inverse[asymmetric_ico1.faces])
    assert asymmetry_distance(shuffled) == pytest.approx(asymmetry_distance(asymmetric_ico1), rel=1e-12)


def test_mesh_merged_with_its_reflection_is_symmetric(asymmetric_ico1):
    plane = SymmetryPlane()
    merged = merge_meshes(asymmetric_ico1, reflect_mesh(asymmetric_ico1, plane))
    assert merged.num_vertices == 2 * asymmetric_ico1.num_vertices
    assert merged.num_faces == 2 * asymmetric_ico1.num_faces
    assert int(merged.faces[asymmetric_ico1.num_faces:].min()) == asymmetric_ico1.num_vertices
    assert asymmetry_distance(asymmetric_ico1, plane) > 1e-4
    assert asymmetry_distance(merged, plane) < 1e-12


def test_apply_offsets(ico1):
    offsets = torch.full_like(ico1.vertices, 0.5)
    moved = apply_offsets(ico1, offsets)
    assert torch.equal(moved.faces, ico1.faces)
    assert torch.allclose(moved.vertices, ico1.vertices + 0.5)
    with pytest.raises(ShapeError):
        apply_offsets(ico1, torch.zeros(3, 3, dtype=torch.float64))


def test_voxelize_cube_fills_interior(cube):
    grid = voxelize(cube, np.full(3, -1.0), np.full(3, 1.0), 16)
    # Куб с ребром 1 занимает ровно половину ячеек по каждой оси
    assert grid.count == 8 ** 3
    assert grid.occupancy[8, 8, 8]
    assert not grid.occupancy[0, 0, 0]


def test_voxel_iou_identical_and_shifted(cube):
    assert voxel_iou(cube, cube, 32) == pytest.approx(1.0)
    shifted = cube.translated((0.5, 0.0, 0.0))
    assert voxel_iou(cube, shifted, 64) == pytest.approx(1.0 / 3.0, abs=0.02)


def test_voxel_iou_sphere_inside_cube():
    small = icosphere(3).scaled(0.4)
    big = primitives.cube(2.0)
    expected = (4.0 / 3.0 * math.pi * 0.4 ** 3) / 8.0
    assert voxel_iou(small, big, 64) == pytest.approx(expected, rel=0.1)


def test_voxel_iou_is_symmetric(cube, asymmetric_ico1):
    assert voxel_iou(cube, asymmetric_ico1, 32) == voxel_iou(asymmetric_ico1, cube, 32)
