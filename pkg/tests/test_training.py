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

import math

import numpy as np
import pytest
from numpy.testing import assert_array_equal

import diffblend.training
from diffblend.errors import InvalidArgument, NumericFailure, \
    TrainingFailure
from diffblend.formats import read_checkpoint, write_checkpoint
from diffblend.partition import adjacency_partition, cross_partition
from diffblend.score import PatchScoreRequest
from diffblend.score.denoiser import PARAM_ORDER, DenoiserArch, \
    denoiser_eval, init_params
from diffblend.score.oracle import GaussianPrior, ar1_correlation, \
    identity_correlation, oracle_conditional_score, oracle_patch_score
from diffblend.training import TrainConfig, check_product_bound, \
    check_separable_reduction, draw_conditional_sample, draw_patch_sample, \
    dsm_batch, optimal_dsm_loss, train_blend, train_blendpp
from diffblend.utils.config import RunConfig


def _tiny(**kwargs):
    options = dict(epochs=1, steps_per_epoch=3, batch_size=2, hidden=2,
                   emb_dim=2, seed=5)
    options.update(kwargs)
    return TrainConfig(**options)


@pytest.fixture
def volumes(rng):
    return [rng.uniform(size=(9, 4, 4)) for _ in range(3)]


def _same_params(a, b):
    return all(np.array_equal(a[n], b[n]) for n in PARAM_ORDER)


def test_config_validation():
    with pytest.raises(InvalidArgument):
        TrainConfig(epochs=0)
    with pytest.raises(InvalidArgument):
        TrainConfig(optimizer="adam")
    with pytest.raises(InvalidArgument):
        TrainConfig(momentum=1.0)
    with pytest.raises(InvalidArgument):
        TrainConfig(mode="full")
    assert TrainConfig(epochs=2, steps_per_epoch=7).iterations == 14
    assert TrainConfig(mode="conditional", j=2).arch().in_channels == 5


def test_config_from_run_config():
    config = RunConfig({"seed": 9, "train.k": 2, "train.lr": 0.5})
    train = TrainConfig.from_run_config(config)
    assert train.seed == 9
    assert train.k == 2
    assert train.lr == 0.5
    assert train.cross


def test_patch_sample_shares_noise_on_repeats(volumes, sched):
    for seed in range(30):
        req, target = draw_patch_sample(volumes, 3, sched,
                                        np.random.default_rng(seed))
        assert req.patch.shape == (3, 4, 4)
        assert target.shape == req.patch.shape
        for a in range(3):
            for b in range(3):
                if req.indices[a] == req.indices[b]:
                    assert_array_equal(req.patch[a], req.patch[b])


def test_patch_sample_without_cross(volumes, sched):
    spacings = {draw_patch_sample(volumes, 3, sched,
                                  np.random.default_rng(s),
                                  cross=False)[0].spacing
                for s in range(30)}
    assert spacings == {1}


def test_conditional_sample(volumes, sched, rng):
    req, target = draw_conditional_sample(volumes, 2, sched, rng)
    assert req.mode == "conditional"
    assert req.k == 5
    assert target.shape == (1, 4, 4)


def test_zero_learning_rate_keeps_params(volumes, sched):
    config = _tiny(lr=0.0)
    result = train_blendpp(volumes, config, sched)
    assert _same_params(result.params, init_params(config.arch(), 5))
    assert len(result.losses) == 3


def test_training_is_reproducible(volumes, sched):
    config = _tiny(lr=0.01)
    a = train_blendpp(volumes, config, sched)
    b = train_blendpp(volumes, config, sched)
    assert a.losses == b.losses
    assert _same_params(a.params, b.params)
    other = train_blendpp(volumes, _tiny(lr=0.01, seed=6), sched)
    assert other.losses != a.losses


def test_loss_log(volumes, sched, tmp_path):
    log = tmp_path / "loss.csv"
    config = _tiny(mode="conditional", j=1)
    result = train_blend(volumes, config, sched, log_path=str(log))
    lines = log.read_text().splitlines()
    assert lines[0] == "iteration,loss"
    assert len(lines) == 4
    assert float(lines[3].split(",")[1]) == result.losses[2]


def test_gradient_step_lowers_batch_loss(volumes, sched):
    arch = DenoiserArch.joint(3, hidden=3, emb_dim=4)
    params = init_params(arch, 0)
    rng = np.random.default_rng(2)
    batch = [draw_patch_sample(volumes, 3, sched, rng) for _ in range(4)]
    loss, grads = dsm_batch(params, batch, sched)
    norm2 = sum(float(np.sum(g * g)) for g in grads.values())
    step = 0.001 * loss / norm2
    moved = params.updated({n: -step * g for n, g in grads.items()})
    assert dsm_batch(moved, batch, sched)[0] < loss


def test_mode_and_shape_checks(volumes, sched):
    with pytest.raises(InvalidArgument):
        train_blend(volumes, _tiny(), sched)
    with pytest.raises(InvalidArgument):
        train_blendpp(volumes, _tiny(mode="conditional"), sched)
    with pytest.raises(InvalidArgument):
        train_blendpp([v[:2] for v in volumes], _tiny(), sched)
    with pytest.raises(InvalidArgument):
        train_blendpp([volumes[0], volumes[1][:, :3]], _tiny(), sched)
    with pytest.raises(InvalidArgument):
        train_blendpp(volumes, _tiny(), sched,
                      params=init_params(DenoiserArch.joint(2), 0))


def test_unpadded_depth_is_padded_for_cross(rng, sched):
    volumes = [rng.uniform(size=(7, 3, 3)) for _ in range(2)]
    result = train_blendpp(volumes, _tiny(lr=0.0), sched)
    assert len(result.losses) == 3


def test_divergence_reports_iteration(volumes, sched, monkeypatch):
    def diverge(params, batch, sched):
        raise NumericFailure("Non-finite denoising loss")

    monkeypatch.setattr(diffblend.training, "dsm_batch", diverge)
    with pytest.raises(TrainingFailure) as e:
        train_blendpp(volumes, _tiny(), sched)
    assert e.value.iteration == 0


def test_point_mass_has_zero_optimal_loss(sched):
    prior = GaussianPrior(np.zeros((3, 2, 2)), 0.0, identity_correlation(3))
    assert optimal_dsm_loss(prior, 500, sched) == 0.0
    assert optimal_dsm_loss(prior, 500, sched, (0, 1, 2), 1) == \
        pytest.approx(0.0, abs=1e-9)


def _monte_carlo(prior, t, sched, rng, indices, center=None, n=3000):
    a = sched.alpha_bar[t]
    noise = 1.0 - a
    total = 0.0
    for _ in range(n):
        x = prior.sample(rng)[list(indices)]
        y = math.sqrt(a) * x + math.sqrt(noise) * rng.standard_normal(x.shape)
        target = (y - math.sqrt(a) * x) / noise
        if center is None:
            score = oracle_patch_score(prior, indices, y, t, sched)
            total += float(np.sum((score + target) ** 2))
        else:
            score = oracle_conditional_score(prior, indices, y, center, t,
                                             sched)
            total += float(np.sum((score + target[center]) ** 2))
    return total / n


def test_optimal_loss_matches_sampling(sched):
    prior = GaussianPrior(np.full((3, 2, 2), 0.5), 0.5,
                          ar1_correlation(3, 0.8))
    rng = np.random.default_rng(3)
    t = 150
    joint = optimal_dsm_loss(prior, t, sched, (0, 1, 2))
    assert _monte_carlo(prior, t, sched, rng, (0, 1, 2)) == \
        pytest.approx(joint, rel=0.05)
    conditional = optimal_dsm_loss(prior, t, sched, (0, 1, 2), 1)
    assert _monte_carlo(prior, t, sched, rng, (0, 1, 2), 1) == \
        pytest.approx(conditional, rel=0.05)
    assert conditional < joint


def test_product_bound(rng):
    samples = [(rng.standard_normal((2, 3)), rng.standard_normal((2, 3)),
                0.7) for _ in range(20)]
    q = [rng.standard_normal((2, 3)) for _ in samples]
    r = [rng.standard_normal((2, 3)) for _ in samples]
    report = check_product_bound(q, r, samples)
    assert report.holds
    assert report.gap >= 0
    tight = check_product_bound(q, q, samples)
    assert tight.gap == pytest.approx(0.0, abs=1e-10 * tight.bound)
    with pytest.raises(InvalidArgument):
        check_product_bound(q, r[:-1], samples)


def test_separable_reduction(rng):
    prior = GaussianPrior(np.zeros((9, 2, 2)), 0.1, identity_correlation(9))
    samples = [(rng.standard_normal((9, 2, 2)), rng.standard_normal((9, 2, 2)),
                0.5, rng.standard_normal((9, 2, 2))) for _ in range(5)]
    for partition in (adjacency_partition(9, 3, 0), cross_partition(9, 3)):
        assert check_separable_reduction(prior, partition, samples).holds
    assert check_separable_reduction(prior, [range(4), range(4, 9)],
                                     samples).holds
    with pytest.raises(InvalidArgument):
        check_separable_reduction(prior, [range(5), range(4, 9)], samples)
    with pytest.raises(InvalidArgument):
        check_separable_reduction(prior, [range(8)], samples)
    correlated = GaussianPrior(np.zeros((9, 2, 2)), 0.1,
                               ar1_correlation(9, 0.5))
    with pytest.raises(InvalidArgument):
        check_separable_reduction(correlated, [range(9)], samples)


def _large_noise_batch(value, sched, seed):
    """Fixed t = T requests on a constant volume, adjacent and strided"""
    rng = np.random.default_rng(seed)
    a = math.sqrt(sched.alpha_bar[sched.T])
    batch = []
    for n in range(40):
        indices, spacing = ((0, 1, 2), 1) if n % 2 else ((0, 3, 6), 3)
        clean = np.full((3, 4, 4), value)
        noisy = a * clean + sched.sigma[sched.T] * rng.standard_normal(
            clean.shape)
        batch.append((PatchScoreRequest(noisy, sched.T, indices, spacing),
                      noisy - a * clean))
    return batch


def test_point_mass_training_approaches_zero_loss(sched):
    volumes = [np.full((9, 4, 4), 0.5)] * 2
    config = _tiny(steps_per_epoch=200, hidden=8, emb_dim=8, lr=0.01)
    batch = _large_noise_batch(0.5, sched, 11)
    before = dsm_batch(init_params(config.arch(), config.seed), batch,
                       sched)[0]
    result = train_blendpp(volumes, config, sched)
    after = dsm_batch(result.params, batch, sched)[0]
    floor = optimal_dsm_loss(
        GaussianPrior(np.full((3, 4, 4), 0.5), 0.0, identity_correlation(3)),
        sched.T, sched)
    assert floor == 0.0
    assert after < 0.5 * before


def test_trained_params_match_their_checkpoint(volumes, sched, tmp_path):
    result = train_blendpp(volumes, _tiny(lr=0.01), sched)
    path = str(tmp_path / "joint.bckpt")
    write_checkpoint(path, result.params)
    restored = read_checkpoint(path)
    assert _same_params(result.params, restored)
    req, _ = draw_patch_sample(volumes, 3, sched, np.random.default_rng(4))
    assert_array_equal(denoiser_eval(result.params, req),
                       denoiser_eval(restored, req))


def test_rounding_is_idempotent():
    params = init_params(DenoiserArch.joint(3, hidden=2, emb_dim=2), 3)
    assert _same_params(params, params.rounded())
    assert params.flatten().astype(np.float32).astype(np.float64) \
        .tolist() == params.flatten().tolist()


def _score_error_ratio(params, prior, sched, rng, count=400, t_min=50):
    """Squared score error against the oracle over its squared norm"""
    error = norm = 0.0
    while count:
        volume = prior.sample(rng)
        if rng.random() < 0.5:
            partition = cross_partition(prior.depth, 3)
        else:
            partition = adjacency_partition(prior.depth, 3,
                                            int(rng.integers(3)))
        patch = partition.patches[rng.integers(len(partition))]
        indices = list(patch.gather())
        if len(set(indices)) < len(indices):
            continue
        t = int(rng.integers(t_min, sched.T + 1))
        noisy = math.sqrt(sched.alpha_bar[t]) * volume[indices] \
            + sched.sigma[t] * rng.standard_normal((3,) + prior.shape[1:])
        req = PatchScoreRequest(noisy, t, indices, patch.spacing)
        learned = -denoiser_eval(params, req) / sched.sigma[t]
        exact = oracle_patch_score(prior, indices, noisy, t, sched)
        error += float(np.sum((learned - exact) ** 2))
        norm += float(np.sum(exact ** 2))
        count -= 1
    return error / norm


@pytest.mark.slow
def test_trained_score_approaches_oracle(sched):
    prior = GaussianPrior(np.full((9, 16, 16), 0.5), 0.05,
                          ar1_correlation(9, 0.9))
    rng = np.random.default_rng(0)
    volumes = [prior.sample(rng) for _ in range(64)]
    config = TrainConfig(epochs=12, steps_per_epoch=500, batch_size=4,
                         lr=0.003, hidden=16, emb_dim=16, seed=0)
    result = train_blendpp(volumes, config, sched)
    untrained = init_params(config.arch(), config.seed)
    assert _score_error_ratio(result.params, prior, sched,
                              np.random.default_rng(1)) <= 0.1
    assert _score_error_ratio(untrained, prior, sched,
                              np.random.default_rng(1)) > 0.1
