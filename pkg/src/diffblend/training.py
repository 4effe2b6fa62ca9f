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

"""
Denoising score matching for the slice-patch noise predictor.

``train_blend`` fits a conditional network (the centre slice given j
neighbours on each side), ``train_blendpp`` a joint network on k-slice
patches drawn from adjacency and cross partitions. Every iteration draws
its randomness from ``default_rng([seed, iteration])`` so a run is a pure
function of (volumes, config).

The loss of one sample is ``|(D - target) / sigma_t^2|^2`` with
``D = sigma_t * eps_hat`` and ``target = y - sqrt(alpha_bar_t) x``.
"""
from dataclasses import dataclass, field

import logging
import math

import numpy as np

from diffblend.errors import InvalidArgument, NumericFailure, \
    TrainingFailure
from diffblend.partition import adjacency_partition, conditional_window, \
    cross_partition
from diffblend.score import PatchScoreRequest
from diffblend.score.denoiser import DenoiserArch, denoiser_grad, \
    init_params
from diffblend.utils.logdatawriter import CsvWriter
from diffblend.volume import pad_repeat

__author__ = 'diffblend contributors'
__all__ = ['TrainConfig', 'TrainResult', 'train_blend', 'train_blendpp',
           'draw_conditional_sample', 'draw_patch_sample', 'dsm_batch',
           'optimal_dsm_loss', 'BoundReport', 'check_product_bound',
           'SeparableReport', 'check_separable_reduction']

logger = logging.getLogger(__name__)

LOSS_COLUMNS = ("iteration", "loss")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    steps_per_epoch: int = 500
    batch_size: int = 4
    lr: float = 1e-3
    optimizer: str = "momentum"
    momentum: float = 0.9
    clip_norm: float = 1.0
    seed: int = 0
    mode: str = "joint"
    k: int = 3
    j: int = 1
    hidden: int = 32
    emb_dim: int = 32
    cross: bool = True
    position_encoding: bool = True

    def __post_init__(self):
        for name in ("epochs", "steps_per_epoch", "batch_size", "k",
                     "hidden", "emb_dim"):
            if getattr(self, name) < 1:
                raise InvalidArgument("train.%s must be positive" % name)
        if self.j < 0:
            raise InvalidArgument("train.j must be non-negative")
        if self.lr < 0 or self.clip_norm < 0:
            raise InvalidArgument("Learning rate and clip norm must be "
                                  "non-negative")
        if self.optimizer not in ("sgd", "momentum"):
            raise InvalidArgument("Unknown optimizer [%s]" % self.optimizer)
        if not 0.0 <= self.momentum < 1.0:
            raise InvalidArgument("Momentum must lie in [0, 1)")
        if self.mode not in ("joint", "conditional"):
            raise InvalidArgument("Unknown training mode [%s]" % self.mode)

    @property
    def iterations(self):
        return self.epochs * self.steps_per_epoch

    def arch(self):
        options = dict(hidden=self.hidden, emb_dim=self.emb_dim,
                       position_encoding=self.position_encoding)
        if self.mode == "joint":
            return DenoiserArch.joint(self.k, **options)
        return DenoiserArch.conditional(self.j, **options)

    @classmethod
    def from_run_config(cls, config):
        values = config.section("train")
        values["seed"] = config["seed"]
        return cls(**values)


@dataclass(frozen=True, eq=False)
class TrainResult:
    params: object
    losses: list = field(default_factory=list)


def _check_volumes(volumes, min_depth):
    arrays = [np.asarray(v, dtype=np.float64) for v in volumes]
    if not arrays:
        raise InvalidArgument("Training needs at least one volume")
    shape = arrays[0].shape
    for array in arrays:
        if array.ndim != 3 or array.shape != shape:
            raise InvalidArgument("Training volumes must share one (depth, "
                                  "height, width) shape")
    if shape[0] < min_depth:
        raise InvalidArgument("Training volumes need depth >= %d, got %d"
                              % (min_depth, shape[0]))
    return arrays


def _noised(volume, indices, t, sched, rng):
    """Noise the distinct slices once, then gather with repeats"""
    distinct = sorted(set(indices))
    clean = volume[distinct]
    noisy = math.sqrt(sched.alpha_bar[t]) * clean \
        + sched.sigma[t] * rng.standard_normal(clean.shape)
    rows = [distinct.index(i) for i in indices]
    return clean[rows], noisy[rows]


def draw_conditional_sample(volumes, j, sched, rng):
    """A centre slice with its repetition-padded window of 2j+1 slices"""
    volume = volumes[rng.integers(len(volumes))]
    t = int(rng.integers(1, sched.T + 1))
    i = int(rng.integers(volume.shape[0]))
    window = conditional_window(volume.shape[0], i, j)
    clean, noisy = _noised(volume, window, t, sched, rng)
    req = PatchScoreRequest(noisy, t, window, 1, mode="conditional", j=j)
    target = noisy[j:j + 1] - math.sqrt(sched.alpha_bar[t]) * clean[j:j + 1]
    return req, target


def draw_patch_sample(volumes, k, sched, rng, cross=True):
    """A k-slice patch of a randomly chosen adjacency or cross partition"""
    volume = volumes[rng.integers(len(volumes))]
    t = int(rng.integers(1, sched.T + 1))
    depth = volume.shape[0]
    if cross and k > 1 and rng.random() < 0.5:
        partition = cross_partition(depth, k)
    else:
        partition = adjacency_partition(depth, k, int(rng.integers(k)))
    patch = partition.patches[rng.integers(len(partition))]
    indices = patch.gather()
    clean, noisy = _noised(volume, indices, t, sched, rng)
    req = PatchScoreRequest(noisy, t, indices, patch.spacing)
    return req, noisy - math.sqrt(sched.alpha_bar[t]) * clean


def dsm_batch(params, batch, sched):
    """Mean loss and gradient over ``(request, target)`` pairs"""
    weight = 1.0 / len(batch)
    total, grads = 0.0, {}
    for req, target in batch:
        loss, sample_grads = denoiser_grad(params, req, target, sched,
                                           weight=weight)
        total += loss
        for name, grad in sample_grads.items():
            grads[name] = grads[name] + grad if name in grads else grad
    return total, grads


def _clip(grads, clip_norm):
    if clip_norm <= 0:
        return grads
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm > clip_norm:
        scale = clip_norm / norm
        return {name: g * scale for name, g in grads.items()}
    return grads


class _Optimizer():
    """Plain or heavy-ball SGD"""

    def __init__(self, config):
        self._lr = config.lr
        self._momentum = config.momentum if config.optimizer == "momentum" \
            else 0.0
        self._velocity = {}

    def steps(self, grads):
        out = {}
        for name, grad in grads.items():
            v = self._momentum * self._velocity.get(name, 0.0) + grad
            self._velocity[name] = v
            out[name] = -self._lr * v
        return out


def _train(volumes, config, sched, draw, log_path, params):
    arch = config.arch()
    if params is None:
        params = init_params(arch, config.seed)
    elif params.arch != arch:
        raise InvalidArgument("Initial parameters do not match the "
                              "configured architecture")
    # Trained weights stay at checkpoint precision
    params = params.rounded()
    optimizer = _Optimizer(config)
    losses = []
    writer = CsvWriter(log_path, LOSS_COLUMNS) if log_path else None
    if writer:
        writer.start()
    try:
        for iteration in range(config.iterations):
            rng = np.random.default_rng([config.seed, iteration])
            batch = [draw(rng) for _ in range(config.batch_size)]
            try:
                loss, grads = dsm_batch(params, batch, sched)
            except NumericFailure as e:
                raise TrainingFailure("Training diverged: %s" % e,
                                      iteration) from e
            if not math.isfinite(loss):
                raise TrainingFailure("Training loss is %s" % loss, iteration)
            steps = optimizer.steps(_clip(grads, config.clip_norm))
            if not all(np.all(np.isfinite(s)) for s in steps.values()):
                raise TrainingFailure("Non-finite parameter update",
                                      iteration)
            params = params.updated(steps).rounded()
            losses.append(loss)
            if writer:
                writer.write({"iteration": iteration, "loss": loss})
            if iteration % config.steps_per_epoch == 0:
                logger.debug("Iteration %d loss %.6g", iteration, loss)
    finally:
        if writer:
            writer.stop()
    logger.info("Trained %s network for %d iterations, final loss %.6g",
                arch.mode, config.iterations, losses[-1] if losses else 0.0)
    return TrainResult(params, losses)


def train_blend(volumes, config, sched, log_path=None, params=None):
    """Train the conditional network on 2j+1 slice windows"""
    if config.mode != "conditional":
        raise InvalidArgument("train_blend needs a conditional config")
    arrays = _check_volumes(volumes, 2 * config.j + 1)

    def draw(rng):
        return draw_conditional_sample(arrays, config.j, sched, rng)

    return _train(arrays, config, sched, draw, log_path, params)


def train_blendpp(volumes, config, sched, log_path=None, params=None):
    """Train the joint network on patches of adjacency/cross partitions"""
    if config.mode != "joint":
        raise InvalidArgument("train_blendpp needs a joint config")
    arrays = _check_volumes(volumes, config.k)
    if config.cross:
        block = config.k * config.k
        depth = arrays[0].shape[0]
        target = -(-depth // block) * block
        if target != depth:
            logger.info("Padding training volumes from depth %d to %d",
                        depth, target)
            arrays = [np.asarray(pad_repeat(a, target), dtype=np.float64)
                      for a in arrays]

    def draw(rng):
        return draw_patch_sample(arrays, config.k, sched, rng,
                                 cross=config.cross)

    return _train(arrays, config, sched, draw, log_path, params)


def optimal_dsm_loss(prior, t, sched, indices=None, center=None):
    """
    Expected loss of the exact posterior-mean denoiser for a GaussianPrior.

    Joint: the patch ``indices`` (whole volume by default). Conditional:
    the slice ``indices[center]`` given the other distinct indices.
    """
    if indices is None:
        indices = list(range(prior.depth))
    else:
        if center is not None:
            center = list(dict.fromkeys(indices)).index(indices[center])
        indices = list(dict.fromkeys(indices))
    alpha_bar = sched.alpha_bar[t]
    noise = 1.0 - alpha_bar
    corr = prior.slice_corr[np.ix_(indices, indices)]
    lam, vectors = np.linalg.eigh(corr)
    signal = alpha_bar * prior.spatial_variance[None] * lam[:, None, None]
    if center is None:
        return float(np.sum(signal / (signal + noise)) / noise)
    # var(eps_c | y) = 1 - sigma^2 (K^-1)_cc per pixel
    weights = vectors[center] ** 2
    inverse_cc = np.einsum('i,ihw->hw', weights, 1.0 / (signal + noise))
    return float(np.sum(1.0 - noise * inverse_cc) / noise)


@dataclass(frozen=True)
class BoundReport:
    joint_loss: float
    bound: float

    @property
    def gap(self):
        return self.bound - self.joint_loss

    @property
    def holds(self):
        return self.joint_loss <= self.bound * (1.0 + 1e-12) + 1e-300


def check_product_bound(q_scores, r_scores, samples, a=0.5, b=0.5):
    """
    Joint loss of a two-factor score ``a s_q + b s_r`` against the upper
    bound from training the factors separately.

    ``samples`` holds ``(y, x, sigma)`` triples; the regression target is
    ``(y - x) / sigma^2``.
    """
    if not len(q_scores) == len(r_scores) == len(samples):
        raise InvalidArgument("Scores and samples must be matched lists")
    if a + b == 0:
        raise InvalidArgument("a + b must be non-zero")
    joint = bound = 0.0
    for s_q, s_r, (y, x, sigma) in zip(q_scores, r_scores, samples):
        target = (np.asarray(y, dtype=np.float64)
                  - np.asarray(x, dtype=np.float64)) / sigma ** 2
        X = a * np.asarray(s_q, dtype=np.float64) - a / (a + b) * target
        Y = b * np.asarray(s_r, dtype=np.float64) - b / (a + b) * target
        joint += float(np.sum((X + Y) ** 2))
        bound += 2.0 * float(np.sum(X ** 2)) + 2.0 * float(np.sum(Y ** 2))
    n = max(len(samples), 1)
    return BoundReport(joint / n, bound / n)


@dataclass(frozen=True)
class SeparableReport:
    full_loss: float
    patch_loss: float

    @property
    def relative_error(self):
        scale = max(abs(self.full_loss), 1e-300)
        return abs(self.full_loss - self.patch_loss) / scale

    @property
    def holds(self):
        return self.relative_error <= 1e-6


def check_separable_reduction(prior, patches, samples):
    """
    Full-volume DSM loss against the sum of per-patch losses.

    ``patches`` is a Partition or a sequence of index collections that must
    be disjoint and cover the volume. ``samples`` holds
    ``(y, x, sigma, score)`` tuples with arbitrary fixed score outputs.
    """
    if not prior.separable:
        raise InvalidArgument("Separable reduction needs a diagonal slice "
                              "correlation")
    groups = [tuple(p.indices) if hasattr(p, 'indices') else tuple(p)
              for p in patches]
    seen = []
    for group in groups:
        seen.extend(group)
    if len(seen) != len(set(seen)):
        raise InvalidArgument("Patches overlap")
    if set(seen) != set(range(prior.depth)):
        raise InvalidArgument("Patches do not cover all %d slices"
                              % prior.depth)
    full = per_patch = 0.0
    for y, x, sigma, score in samples:
        residual = np.asarray(score, dtype=np.float64) \
            - (np.asarray(y, dtype=np.float64)
               - np.asarray(x, dtype=np.float64)) / sigma ** 2
        if residual.shape != prior.shape:
            raise InvalidArgument("Sample shape %s does not match prior %s"
                                  % (residual.shape, prior.shape))
        full += float(np.sum(residual ** 2))
        per_patch += sum(float(np.sum(residual[list(g)] ** 2))
                         for g in groups)
    return SeparableReport(full, per_patch)
