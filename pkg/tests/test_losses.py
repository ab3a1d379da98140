#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import logging

import pytest
import torch

from sketchfit.config import LossWeights
from sketchfit.core import primitives
from sketchfit.core.geometry import Mesh, SymmetryPlane, adjacency
from sketchfit.core.losses import (
    LossTerms, flatten_loss, flatten_terms, flip_residual, image_symmetry_loss, iou_loss, laplacian_loss,
    multiscale_silhouette_loss, report_fields, silhouette_iou, total_loss, vertex_symmetry_loss,
)
from sketchfit.core.renderer import mirror_camera, sample_random_views
from sketchfit.errors import DegenerateInputError, NumericError, ShapeError, ValidationError


def _scalar(value):
    return torch.tensor(value, dtype=torch.float64)


def test_iou_loss_hand_value(binary_masks):
    a, b = binary_masks
    assert float(iou_loss(a, b)) == pytest.approx(2.0 / 3.0, abs=1e-12)
    assert float(iou_loss(a, a)) == pytest.approx(0.0, abs=1e-12)


def test_iou_loss_empty_masks_and_batches():
    empty = torch.zeros(4, 4, dtype=torch.float64)
    assert float(iou_loss(empty, empty)) == pytest.approx(1.0)
    full = torch.ones(2, 4, 4, dtype=torch.float64)
    half = full.clone()
    half[1] = 0.0
    assert float(iou_loss(full, half)) == pytest.approx(0.5)


def test_iou_loss_shape_mismatch():
    with pytest.raises(ShapeError):
        iou_loss(torch.zeros(4, 4), torch.zeros(4, 2))


def test_multiscale_single_scale_equals_iou(binary_masks):
    a, b = binary_masks
    assert float(multiscale_silhouette_loss(a, b, (1.0,))) == pytest.approx(float(iou_loss(a, b)))
    with pytest.raises(ValidationError):
        multiscale_silhouette_loss(a, b, ())


def test_multiscale_identical_is_zero():
    s = torch.rand(16, 16, dtype=torch.float64, generator=torch.Generator().manual_seed(1))
    s = (s > 0.5).to(torch.float64)
    assert float(multiscale_silhouette_loss(s, s, (0.25,) * 4)) == pytest.approx(0.0, abs=1e-12)


def test_iou_loss_is_symmetric():
    gen = torch.Generator().manual_seed(4)
    s1 = torch.rand(16, 16, dtype=torch.float64, generator=gen)
    s2 = torch.rand(16, 16, dtype=torch.float64, generator=gen)
    assert float(iou_loss(s1, s2)) == float(iou_loss(s2, s1))


def test_multiscale_four_scale_hand_value():
    pred = torch.zeros(8, 8, dtype=torch.float64)
    pred[:4, :4] = 1.0
    target = torch.zeros(8, 8, dtype=torch.float64)
    target[:, :2] = 1.0
    # Масштабы 1, 2, 4 дают 2/3, масштаб 8 (один пиксель 0.25 против 0.25) - 6/7
    expected = 0.25 * (3 * 2.0 / 3.0 + 6.0 / 7.0)
    loss = multiscale_silhouette_loss(pred, target, (0.25,) * 4)
    assert float(loss) == pytest.approx(expected, abs=1e-12)
    assert float(loss) == pytest.approx(5.0 / 7.0, abs=1e-12)


def test_silhouette_iou():
    a = torch.zeros(4, 4, dtype=torch.float64)
    assert silhouette_iou(a, a) == 1.0
    b = a.clone()
    a[0, :2] = 1.0
    b[0, 1:3] = 1.0
    assert silhouette_iou(a, b) == pytest.approx(1.0 / 3.0)


def test_vertex_symmetry(ico2, asymmetric_ico1):
    assert float(vertex_symmetry_loss(ico2)) < 1e-12
    verts = asymmetric_ico1.vertices.clone().requires_grad_(True)
    loss = vertex_symmetry_loss(Mesh(verts, asymmetric_ico1.faces))
    loss.backward()
    assert float(loss) > 0.0
    assert float(verts.grad.abs().sum()) > 0.0
    with pytest.raises(DegenerateInputError):
        vertex_symmetry_loss(Mesh.empty())


def test_image_symmetry_fixed_point(ico2, renderer):
    views = sample_random_views(8, 5, image_size=32)
    assert float(image_symmetry_loss(ico2, views, renderer=renderer)) < 1e-6


def test_image_symmetry_detects_asymmetry(asymmetric_ico1, renderer):
    views = sample_random_views(4, 5, image_size=32)
    assert float(image_symmetry_loss(asymmetric_ico1, views, renderer=renderer)) > 1e-2
    with pytest.raises(ValidationError):
        image_symmetry_loss(asymmetric_ico1, [], renderer=renderer)


def test_image_symmetry_same_for_mirrored_views(asymmetric_ico1, renderer):
    views = sample_random_views(4, 9, image_size=32)
    mirrored = [mirror_camera(cam, SymmetryPlane()) for cam in views]
    direct = float(image_symmetry_loss(asymmetric_ico1, views, renderer=renderer))
    assert float(image_symmetry_loss(asymmetric_ico1, mirrored, renderer=renderer)) == pytest.approx(direct, rel=1e-9)


def test_image_symmetry_mean_reduction(asymmetric_ico1, renderer):
    views = sample_random_views(3, 2, image_size=32)
    summed = float(image_symmetry_loss(asymmetric_ico1, views, renderer=renderer))
    mean = float(image_symmetry_loss(asymmetric_ico1, views, renderer=renderer, reduction='mean'))
    assert mean == pytest.approx(summed / (32 * 32), rel=1e-12)
    with pytest.raises(ValidationError):
        image_symmetry_loss(asymmetric_ico1, views, renderer=renderer, reduction='max')


def test_flip_residual():
    direct = torch.tensor([[1.0, 0.0]], dtype=torch.float64)
    assert float(flip_residual(direct, torch.tensor([[0.0, 1.0]], dtype=torch.float64))) == 0.0
    assert float(flip_residual(direct, direct)) == pytest.approx(2.0)


def test_laplacian_invariances(ico1):
    base = float(laplacian_loss(ico1))
    assert base > 0.0
    assert float(laplacian_loss(ico1.translated((0.3, -1.0, 2.0)))) == pytest.approx(base, rel=1e-9)
    assert float(laplacian_loss(ico1.scaled(2.0))) == pytest.approx(4.0 * base, rel=1e-9)


def test_laplacian_flat_grid_is_zero_at_center():
    verts = [(x, y, 0.0) for y in range(3) for x in range(3)]
    faces = []
    for y in range(2):
        for x in range(2):
            i = y * 3 + x
            faces += [(i, i + 1, i + 4), (i, i + 4, i + 3)]
    mesh = Mesh.from_arrays(verts, faces)
    center_only = mesh.vertices.clone()
    center_only[4, 2] = 1.0
    lifted = float(laplacian_loss(Mesh(center_only, mesh.faces)))
    assert lifted > float(laplacian_loss(mesh))


def test_flatten_cube_and_tetrahedron():
    cube = primitives.cube(1.0)
    terms = flatten_terms(cube, adjacency(cube))
    assert terms.shape == (18,)
    assert int((terms - 1.0).abs().lt(1e-9).sum()) == 12
    assert int(terms.abs().lt(1e-9).sum()) == 6
    assert float(flatten_loss(cube)) == pytest.approx(12.0, abs=1e-9)

    tet = primitives.tetrahedron(1.0)
    tet_terms = flatten_terms(tet, adjacency(tet))
    assert torch.allclose(tet_terms, torch.full((6,), 16.0 / 9.0, dtype=torch.float64), atol=1e-9)


def test_flatten_skips_boundary_edges(caplog):
    mesh = Mesh.from_arrays([(0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0)], [(0, 1, 2), (1, 3, 2)])
    with caplog.at_level(logging.WARNING, logger='SketchFit.Losses'):
        value = flatten_loss(mesh)
    assert float(value) == pytest.approx(0.0, abs=1e-12)
    assert "граничных" in caplog.text


def test_flatten_gradient_finite_for_degenerate_wing():
    # Противолежащая вершина на самом ребре
    mesh = Mesh.from_arrays(
        [(0, 0, 0), (1, 0, 0), (0.5, 0, 0), (0.5, 1, 0)], [(0, 1, 2), (1, 0, 3)]
    )
    verts = mesh.vertices.clone().requires_grad_(True)
    flatten_loss(Mesh(verts, mesh.faces)).backward()
    assert bool(torch.isfinite(verts.grad).all())


def test_total_loss_combines_weights():
    terms = LossTerms(
        silhouette=_scalar(0.5), laplacian=_scalar(2.0), flatten=_scalar(3.0),
        shape_disc=_scalar(-1.0), vertex_sym=_scalar(0.25), image_sym=_scalar(4.0),
    )
    weights = LossWeights(lambda_sd=0.1, lambda_sv=0.2, lambda_isym=0.3,
                          lambda_laplacian=0.5, lambda_flatten=0.01)
    total, report = total_loss(terms, weights)
    expected_r = 0.5 * 2.0 + 0.01 * 3.0
    assert report.l_r == pytest.approx(expected_r, abs=1e-12)
    expected = 0.5 + expected_r + 0.1 * -1.0 + 0.2 * 0.25 + 0.3 * 4.0
    assert float(total) == pytest.approx(expected, abs=1e-10)
    assert report.total == pytest.approx(
        report.l_sp + report.l_r + 0.1 * report.l_sd + 0.2 * report.l_vsym + 0.3 * report.l_isym, abs=1e-10
    )


def test_total_loss_rejects_nan():
    terms = LossTerms.zeros()
    terms.image_sym = _scalar(float('nan'))
    with pytest.raises(NumericError) as info:
        total_loss(terms, LossWeights())
    assert info.value.term == 'image_sym'


def test_report_fields_order():
    assert report_fields()[:6] == ('l_sp', 'l_r', 'l_sd', 'l_vsym', 'l_isym', 'total')
