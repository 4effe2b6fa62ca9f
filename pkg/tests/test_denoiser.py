# -*- coding: utf-8 -*-
#
#  Copyright (C) 2026 diffblend contributors
#
#  diffblend - 3D CT reconstruction by blending slice-patch scores
#
#  This program is free software; you can redistribute it and/or
#  modify it under the terms of the GNU General Public License
#  as published by the Free Software Foundation; either version 2
#  of the License, or (at your option) any later version.
#
#  This program is distributed in the hope that it will be useful,
#  but WITHOUT ANY WARRANTY; without even the implied warranty of
#  MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
#  GNU General Public License for more details.

#  You should have received a copy of the GNU General Public License
#  along with this program; if not, write to the Free Software
#  Foundation, Inc., 51 Franklin Street, Fifth Floor, Boston,
#  MA  02110-1301, USA.

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from diffblend.errors import InvalidArgument
from diffblend.score import PatchScoreRequest
from diffblend.score.denoiser import PARAM_ORDER, DenoiserArch, \
    DenoiserParams, denoiser_eval, denoiser_grad, init_params
from diffblend.score.embedding import embed, sinusoidal


def test_sinusoidal_features():
    features = sinusoidal(0.0, 6)
    assert_array_equal(features, [0, 0, 0, 1, 1, 1])
    features = sinusoidal(2.0, 4)
    assert features[0] == pytest.approx(np.sin(2.0))
    assert features[2] == pytest.approx(np.cos(2.0))
    assert len(sinusoidal(1.0, 5)) == 5


def test_embed_halves():
    e = embed(500, 3, 16)
    assert e.shape == (16,)
    assert_allclose(e[:8], sinusoidal(500, 8))
    assert_allclose(e[8:], sinusoidal(3, 8))
    assert not np.allclose(embed(500, 1, 16), e)
    with pytest.raises(InvalidArgument):
        embed(1, 1, 7)


def test_arch_modes():
    assert DenoiserArch.joint(3).mode == "joint"
    assert DenoiserArch.conditional(1).in_channels == 3
    assert DenoiserArch.conditional(2).mode == "conditional"
    with pytest.raises(InvalidArgument):
        DenoiserArch(2, 1).mode
    with pytest.raises(InvalidArgument):
        DenoiserArch(3, 3, emb_dim=5)
    arch = DenoiserArch.joint(3, hidden=4, emb_dim=8)
    assert arch.size == sum(int(np.prod(s)) for s in arch.shapes().values())


def test_init_is_seeded():
    arch = DenoiserArch.joint(3, hidden=4, emb_dim=8)
    a, b = init_params(arch, 5), init_params(arch, 5)
    for name in PARAM_ORDER:
        assert_array_equal(a[name], b[name])
    assert not np.array_equal(a['w1'], init_params(arch, 6)['w1'])
    assert_array_equal(a['b1'], 0.0)


def test_params_are_validated_and_frozen():
    arch = DenoiserArch.joint(1, hidden=2, emb_dim=2)
    params = init_params(arch, 0)
    with pytest.raises(ValueError):
        params['w1'][0, 0, 0, 0] = 1.0
    weights = dict(params.weights)
    weights['b3'] = np.array([np.nan])
    with pytest.raises(InvalidArgument):
        DenoiserParams(arch, weights)
    with pytest.raises(InvalidArgument):
        DenoiserParams.from_flat(arch, np.zeros(arch.size - 1))
    restored = DenoiserParams.from_flat(arch, params.flatten())
    assert_array_equal(restored.flatten(), params.flatten())


def test_updated_adds_steps():
    arch = DenoiserArch.joint(1, hidden=2, emb_dim=2)
    params = init_params(arch, 0)
    moved = params.updated({'b2': np.ones(2)})
    assert_array_equal(moved['b2'], params['b2'] + 1.0)
    assert_array_equal(moved['w1'], params['w1'])


def test_eval_shapes(rng):
    joint = init_params(DenoiserArch.joint(3, hidden=4, emb_dim=8), 1)
    req = PatchScoreRequest(rng.standard_normal((3, 6, 5)), 100, (0, 1, 2))
    assert denoiser_eval(joint, req).shape == (3, 6, 5)
    cond = init_params(DenoiserArch.conditional(1, hidden=4, emb_dim=8), 1)
    req = PatchScoreRequest(rng.standard_normal((3, 6, 5)), 100, (0, 1, 2),
                            mode="conditional", j=1)
    assert denoiser_eval(cond, req).shape == (1, 6, 5)
    wrong = init_params(DenoiserArch.joint(2, hidden=4, emb_dim=8), 1)
    with pytest.raises(InvalidArgument):
        denoiser_eval(wrong, req)


def test_spacing_encoding_switch(rng):
    patch = rng.standard_normal((3, 4, 4))
    near = PatchScoreRequest(patch, 50, (0, 1, 2), spacing=1)
    far = PatchScoreRequest(patch, 50, (0, 3, 6), spacing=3)
    with_pos = init_params(DenoiserArch.joint(3, hidden=4, emb_dim=8), 2)
    assert not np.allclose(denoiser_eval(with_pos, near),
                           denoiser_eval(with_pos, far))
    without = init_params(DenoiserArch.joint(
        3, hidden=4, emb_dim=8, position_encoding=False), 2)
    assert_array_equal(denoiser_eval(without, near),
                       denoiser_eval(without, far))


def test_gradient_matches_directional_difference(sched, rng):
    arch = DenoiserArch.joint(2, hidden=3, emb_dim=4)
    params = init_params(arch, 3)
    req = PatchScoreRequest(rng.standard_normal((2, 5, 5)), 500, (0, 1))
    target = rng.standard_normal((2, 5, 5))
    _, grads = denoiser_grad(params, req, target, sched)
    direction = rng.standard_normal(arch.size)
    analytic = np.dot(np.concatenate([grads[n].ravel() for n in PARAM_ORDER]),
                      direction)
    h = 1e-6
    theta = params.flatten()

    def loss(vector):
        return denoiser_grad(DenoiserParams.from_flat(arch, vector), req,
                             target, sched)[0]

    numeric = (loss(theta + h * direction) - loss(theta - h * direction)) \
        / (2 * h)
    assert analytic == pytest.approx(numeric, rel=1e-5)


def test_loss_weight_scales(sched, rng):
    params = init_params(DenoiserArch.joint(1, hidden=2, emb_dim=2), 0)
    req = PatchScoreRequest(rng.standard_normal((1, 3, 3)), 20, (0,))
    target = rng.standard_normal((1, 3, 3))
    one, g1 = denoiser_grad(params, req, target, sched)
    two, g2 = denoiser_grad(params, req, target, sched, weight=2.0)
    assert two == pytest.approx(2 * one)
    assert_allclose(g2['w3'], 2 * g1['w3'])
    with pytest.raises(InvalidArgument):
        denoiser_grad(params, req, target[:, :2], sched)
