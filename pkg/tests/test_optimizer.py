#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import pytest
import torch

from sketchfit.core.optimizer import AdamState, adam_step, lr_at
from sketchfit.errors import NumericError, ShapeError, ValidationError


def test_first_step_moves_by_lr_sign():
    params = [torch.tensor([1.0, -2.0, 3.0], dtype=torch.float64)]
    grads = [torch.tensor([0.5, -0.5, 1e3], dtype=torch.float64)]
    state = AdamState.for_params(params)
    (updated,), new_state = adam_step(params, grads, state, lr=1e-4)
    delta = updated - params[0]
    assert torch.allclose(delta, torch.tensor([-1e-4, 1e-4, -1e-4], dtype=torch.float64), atol=1e-7)
    assert new_state.t == 1
    assert state.t == 0
    assert torch.equal(state.m[0], torch.zeros(3, dtype=torch.float64))


def test_adam_minimizes_quadratic():
    target = torch.tensor([0.3, -0.7], dtype=torch.float64)
    x = torch.zeros(2, dtype=torch.float64)
    state = AdamState.for_params([x])
    for _ in range(2000):
        grad = 2.0 * (x - target)
        (x,), state = adam_step([x], [grad], state, lr=0.01)
    assert torch.allclose(x, target, atol=1e-2)
    assert state.t == 2000


def test_adam_rejects_bad_input():
    params = [torch.zeros(3, dtype=torch.float64)]
    state = AdamState.for_params(params)
    with pytest.raises(NumericError):
        adam_step(params, [torch.tensor([0.0, float('inf'), 0.0], dtype=torch.float64)], state, 1e-3)
    with pytest.raises(ShapeError):
        adam_step(params, [torch.zeros(2, dtype=torch.float64)], state, 1e-3)
    with pytest.raises(ShapeError):
        adam_step(params, [], state, 1e-3)


@pytest.mark.parametrize("step, expected", [
    (0, 1e-4),
    (799, 1e-4),
    (800, 3e-5),
    (1600, 9e-6),
    (2399, 9e-6),
])
def test_lr_schedule(step, expected):
    assert lr_at(step, 1e-4, 0.3, 800) == pytest.approx(expected, rel=1e-12)


def test_lr_schedule_rejects_period():
    with pytest.raises(ValidationError):
        lr_at(10, 1e-4, 0.3, 0)
