#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Подгонка смещений вершин шаблона под силуэт эскиза."""

import math
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch
from tqdm import tqdm

from sketchfit.config import FitConfig, RenderConfig
from sketchfit.core import primitives
from sketchfit.core.discriminator import (
    DiscStepMetrics, ShapeDiscriminator, ViewBatch, disc_train_step, gan_losses, init_disc_state,
    render_view_batch,
)
from sketchfit.core.geometry import (
    DTYPE, Mesh, SymmetryPlane, adjacency, apply_offsets, asymmetry_distance,
)
from sketchfit.core.losses import (
    LossReport, LossTerms, flatten_loss, image_symmetry_loss, laplacian_loss,
    multiscale_silhouette_loss, silhouette_iou, total_loss, vertex_symmetry_loss,
)
from sketchfit.core.optimizer import AdamState, adam_step, lr_at
from sketchfit.core.renderer import (
    Camera, SoftRenderer, camera_from_angles, downsample, mirror_camera, sample_random_views,
)
from sketchfit.errors import NumericError, ShapeError, ValidationError
from sketchfit.utils.logging_utils import get_logger


@dataclass(frozen=True)
class StepRecord:
    step: int
    stage_resolution: int
    lr: float
    report: LossReport
    wall_time: float
    disc: Optional[DiscStepMetrics] = None


@dataclass(frozen=True)
class StageSnapshot:
    """Состояние сетки в конце стадии прогрессивного расписания."""

    stage: int
    resolution: int
    step: int
    mesh: Mesh
    render: torch.Tensor
    iou: float


@dataclass
class FitHistory:
    records: List[StepRecord] = field(default_factory=list)
    snapshots: List[StageSnapshot] = field(default_factory=list)
    final_iou: float = math.nan
    final_asymmetry: float = math.nan
    wall_time: float = 0.0
    diverged: bool = False
    error: Optional[str] = None

    @property
    def steps(self) -> int:
        return len(self.records)


def canonical_camera(image_size: int) -> Camera:
    """Ракурс, из которого нарисован эскиз: азимут 0, возвышение 0."""
    return camera_from_angles(0.0, 0.0, image_size=image_size)


class MeshFitter:
    """Оптимизирует смещения вершин шаблона методом Adam.

    Владеет растеризатором, смежностью шаблона, дискриминатором (если
    он включен) и двумя генераторами случайных чисел: для ракурсов и для
    выбора настоящих форм.
    """

    def __init__(self, target: torch.Tensor, template: Mesh, cfg: FitConfig,
                 render_cfg: Optional[RenderConfig] = None,
                 real_pool: Optional[Sequence[Mesh]] = None,
                 plane: Optional[SymmetryPlane] = None):
        """Инициализация подгонки.

        Args:
            target: Целевой силуэт (квадратный, значения 0/1)
            template: Шаблон - замкнутая сетка
            cfg: Параметры подгонки
            render_cfg: Параметры растеризации
            real_pool: Настоящие формы для дискриминатора
            plane: Плоскость симметрии, по умолчанию x = 0
        """
        self.logger = get_logger('MeshFitter')
        cfg.validate()
        template.validate()
        target = torch.as_tensor(target, dtype=DTYPE)
        if target.ndim != 2 or target.shape[0] != target.shape[1]:
            raise ShapeError(f"Целевой силуэт должен быть квадратным, получено {tuple(target.shape)}")
        for res in cfg.resolutions:
            if res > target.shape[0] or target.shape[0] % res:
                raise ShapeError(f"Разрешение стадии {res} несовместимо с размером цели {target.shape[0]}")

        self.cfg = cfg
        self.target = target
        self.template = template
        self.plane = plane or SymmetryPlane()
        self.weights = cfg.effective_weights()
        self.renderer = SoftRenderer(render_cfg)
        self.adjacency = adjacency(template)

        self.sd_active = cfg.enable_sd and self.weights.lambda_sd > 0
        self.vsym_active = self.weights.lambda_sv > 0
        self.isym_active = self.weights.lambda_isym > 0

        self.view_rng = np.random.default_rng([cfg.seed, 0])
        self.pool_rng = np.random.default_rng([cfg.seed, 1])

        self.disc: Optional[ShapeDiscriminator] = None
        self.disc_state: Optional[AdamState] = None
        self.real_pool: List[Mesh] = []
        if self.sd_active:
            view_count = cfg.sd_views * (2 if cfg.mirrored_sd_views else 1)
            self.disc = ShapeDiscriminator(view_count, cfg.sd_resolution, seed=cfg.seed)
            self.disc_state = init_disc_state(self.disc)
            self.real_pool = list(real_pool) if real_pool else primitives.real_pool(seed=cfg.seed)

        self._targets = {res: downsample(target, target.shape[0] // res) for res in cfg.resolutions}
        self.logger.debug(
            f"SD={'вкл' if self.sd_active else 'выкл'}, Vsym={self.vsym_active}, Isym={self.isym_active}, "
            f"стадии={list(cfg.resolutions)}"
        )

    def sample_views(self) -> List[Camera]:
        """Случайные ракурсы шага; при выключенных SD и Isym ничего не выбирается."""
        count = 0
        if self.sd_active:
            count = self.cfg.sd_views
        if self.isym_active:
            count = max(count, self.cfg.isym_views)
        if count == 0:
            return []
        return sample_random_views(count, self.view_rng)

    def sd_cameras(self, views: Sequence[Camera]) -> List[Camera]:
        """Ракурсы для дискриминатора; с mirrored_sd_views к ним добавляются зеркальные."""
        cams = [cam.with_size(self.cfg.sd_resolution) for cam in views[:self.cfg.sd_views]]
        if self.cfg.mirrored_sd_views:
            cams += [mirror_camera(cam, self.plane) for cam in cams]
        return cams

    def sample_real_batch(self, views: Sequence[Camera]) -> ViewBatch:
        """Силуэты случайно выбранных настоящих форм с теми же ракурсами."""
        picks = self.pool_rng.integers(0, len(self.real_pool), size=self.cfg.real_batch)
        with torch.no_grad():
            return render_view_batch([self.real_pool[i] for i in picks], self.sd_cameras(views),
                                     self.renderer, real=True)

    def loss_terms(self, offsets: torch.Tensor, views: Sequence[Camera], resolution: int,
                   real: Optional[ViewBatch] = None) -> Tuple[LossTerms, Optional[ViewBatch]]:
        """Слагаемые функции потерь для смещений offsets.

        Returns:
            Кортеж (слагаемые, пачка силуэтов сетки для дискриминатора)
        """
        mesh = apply_offsets(self.template, offsets)
        terms = LossTerms.zeros()
        terms.boundary_edges = self.adjacency.boundary_edge_count

        pred = self.renderer.render(mesh, canonical_camera(resolution))
        terms.silhouette = multiscale_silhouette_loss(pred, self._targets[resolution],
                                                      self.weights.scale_weights)
        terms.laplacian = laplacian_loss(mesh, self.adjacency)
        terms.flatten = flatten_loss(mesh, self.adjacency)

        if self.vsym_active:
            terms.vertex_sym = vertex_symmetry_loss(mesh, self.plane)
        if self.isym_active:
            isym_views = [cam.with_size(resolution) for cam in views[:self.cfg.isym_views]]
            terms.image_sym = image_symmetry_loss(mesh, isym_views, self.plane, renderer=self.renderer,
                                                  reduction=self.cfg.isym_reduction)

        fake = None
        if self.sd_active:
            if real is None:
                raise ValidationError("Для слагаемого дискриминатора нужна пачка настоящих силуэтов")
            fake = render_view_batch([mesh], self.sd_cameras(views), self.renderer, real=False)
            terms.shape_disc, _ = gan_losses(self.disc, fake, real)
        return terms, fake

    def objective(self, offsets: torch.Tensor, views: Sequence[Camera], resolution: int,
                  real: Optional[ViewBatch] = None) -> torch.Tensor:
        """Полная функция потерь как детерминированная функция смещений."""
        terms, _ = self.loss_terms(offsets, views, resolution, real)
        total, _ = total_loss(terms, self.weights)
        return total

    def _snapshot(self, stage: int, resolution: int, step: int, offsets: torch.Tensor) -> StageSnapshot:
        mesh = apply_offsets(self.template, offsets).detach()
        with torch.no_grad():
            render = self.renderer.render(mesh, canonical_camera(resolution))
        iou = silhouette_iou(render, self._targets[resolution])
        self.logger.info(f"Стадия {stage + 1} ({resolution}px) завершена на шаге {step}, IoU={iou:.4f}")
        return StageSnapshot(stage, resolution, step, mesh, render, iou)

    def run(self, show_progress: bool = False) -> Tuple[Mesh, FitHistory]:
        """Запускает подгонку по всем стадиям.

        Returns:
            Кортеж (итоговая сетка, история). При расхождении возвращается
            последняя конечная сетка, а history.diverged = True
        """
        cfg = self.cfg
        history = FitHistory()
        offsets = torch.zeros_like(self.template.vertices)
        state = AdamState.for_params([offsets])
        start = time.perf_counter()
        step = 0

        self.logger.info(f"Подгонка: {cfg.steps} шагов, стадии {list(cfg.resolutions)}")
        for stage, (resolution, stage_steps) in enumerate(zip(cfg.resolutions, cfg.stage_steps())):
            progress = tqdm(range(stage_steps), desc=f"Стадия {resolution}px", unit="шаг",
                            disable=not show_progress)
            for _ in progress:
                lr = lr_at(step, cfg.base_lr, cfg.lr_decay, cfg.lr_period)
                try:
                    record, offsets, state = self._step(step, resolution, lr, offsets, state, start)
                except NumericError as e:
                    history.diverged = True
                    history.error = str(e)
                    self.logger.error(f"Расхождение на шаге {step}: {e}")
                    break
                history.records.append(record)
                progress.set_postfix(loss=f"{record.report.total:.4f}")
                step += 1
            progress.close()
            if history.diverged:
                break
            if cfg.snapshot_stages and stage_steps > 0:
                history.snapshots.append(self._snapshot(stage, resolution, step, offsets))

        mesh = apply_offsets(self.template, offsets).detach()
        full = self.target.shape[0]
        with torch.no_grad():
            final_render = self.renderer.render(mesh, canonical_camera(full))
        history.final_iou = silhouette_iou(final_render, self.target)
        history.final_asymmetry = asymmetry_distance(mesh, self.plane)
        history.wall_time = time.perf_counter() - start
        self.logger.info(
            f"Подгонка завершена: шагов {history.steps}, IoU={history.final_iou:.4f}, "
            f"асимметрия={history.final_asymmetry:.6f}"
        )
        return mesh, history

    def _step(self, step: int, resolution: int, lr: float, offsets: torch.Tensor, state: AdamState,
              start: float) -> Tuple[StepRecord, torch.Tensor, AdamState]:
        views = self.sample_views()
        real = self.sample_real_batch(views) if self.sd_active else None

        variable = offsets.clone().requires_grad_(True)
        terms, fake = self.loss_terms(variable, views, resolution, real)
        total, report = total_loss(terms, self.weights)
        (grad,) = torch.autograd.grad(total, variable)

        disc_metrics = None
        if self.sd_active:
            self.disc_state, disc_metrics = disc_train_step(self.disc, real, fake, self.disc_state,
                                                            self.cfg.sd_lr)

        (new_offsets,), state = adam_step([offsets], [grad], state, lr)
        if not bool(torch.isfinite(new_offsets).all()):
            raise NumericError(f"Смещения вершин не конечны после шага {step}")
        record = StepRecord(step, resolution, lr, report, time.perf_counter() - start, disc_metrics)
        return record, new_offsets, state


def fit(target: torch.Tensor, template: Mesh, cfg: FitConfig, render_cfg: Optional[RenderConfig] = None,
        real_pool: Optional[Sequence[Mesh]] = None, show_progress: bool = False) -> Tuple[Mesh, FitHistory]:
    """Подгоняет шаблон под целевой силуэт; см. MeshFitter."""
    return MeshFitter(target, template, cfg, render_cfg, real_pool).run(show_progress)
