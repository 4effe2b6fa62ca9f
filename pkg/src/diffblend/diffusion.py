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
Discrete-time variance-preserving diffusion: noise schedule, forward
noising, Tweedie's posterior mean and the DDIM reverse step.

Schedule arrays are indexed directly by t in [0, T]; index 0 is the clean
data (beta 0, alpha_bar 1).
"""
from dataclasses import dataclass

import logging
import math

import numpy as np

from diffblend.errors import InvalidArgument, NumericFailure

__author__ = 'diffblend contributors'
__all__ = ['NoiseSchedule', 'TimestepPlan', 'make_schedule', 'make_plan',
           'add_noise', 'tweedie', 'ddim_sigma', 'ddim_step',
           'eps_to_score', 'score_to_eps', 'ddim_sample']

logger = logging.getLogger(__name__)

NOISE_FLOOR = 0.01


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    sigma: np.ndarray

    @property
    def T(self):
        return len(self.beta) - 1

    @property
    def reaches_noise_floor(self):
        return self.alpha_bar[-1] < NOISE_FLOOR

    def check_t(self, t, lowest=1):
        if not lowest <= t <= self.T:
            raise InvalidArgument("Timestep %s outside [%d, %d]"
                                  % (t, lowest, self.T))


def make_schedule(T, beta_min, beta_max):
    """Linear beta ramp over T steps"""
    if T < 2:
        raise InvalidArgument("Schedule needs T >= 2, got %d" % T)
    if not 0.0 < beta_min <= beta_max < 1.0:
        raise InvalidArgument("Need 0 < beta_min <= beta_max < 1, got "
                              "%g, %g" % (beta_min, beta_max))
    beta = np.concatenate(([0.0], np.linspace(beta_min, beta_max, T)))
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    sigma = np.sqrt(1.0 - alpha_bar)
    if np.any(np.diff(alpha_bar) >= 0):
        raise InvalidArgument("alpha_bar is not strictly decreasing")
    for array in (beta, alpha, alpha_bar, sigma):
        array.setflags(write=False)
    schedule = NoiseSchedule(beta, alpha, alpha_bar, sigma)
    if not schedule.reaches_noise_floor:
        logger.warning("Schedule ends at alpha_bar %.3g, above the noise "
                       "floor %g", alpha_bar[-1], NOISE_FLOOR)
    return schedule


@dataclass(frozen=True)
class TimestepPlan:
    timesteps: tuple
    eta: float = 0.0

    def __post_init__(self):
        steps = tuple(int(t) for t in self.timesteps)
        object.__setattr__(self, 'timesteps', steps)
        if not steps:
            raise InvalidArgument("Plan needs at least one timestep")
        if any(b >= a for a, b in zip(steps, steps[1:])):
            raise InvalidArgument("Plan timesteps must strictly decrease")
        if steps[-1] < 1:
            raise InvalidArgument("Plan timesteps must be >= 1")
        if not 0.0 <= self.eta <= 1.0:
            raise InvalidArgument("eta must lie in [0, 1], got %g" % self.eta)

    @property
    def nfe(self):
        return len(self.timesteps)

    def pairs(self):
        """(t, t_prev) for every step, the last one ending at 0"""
        return list(zip(self.timesteps, self.timesteps[1:] + (0,)))


def make_plan(T, nfe, eta=0.0):
    """Uniformly strided timesteps from T down to 1"""
    if not 1 <= nfe <= T:
        raise InvalidArgument("NFE count %d outside [1, %d]" % (nfe, T))
    steps = np.floor(np.linspace(T, 1, nfe) + 0.5).astype(int)
    return TimestepPlan(tuple(steps), eta)


def add_noise(x0, t, eps, sched):
    """sqrt(alpha_bar_t) x0 + sigma_t eps"""
    sched.check_t(t)
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise InvalidArgument("Noise shape %s does not match %s"
                              % (eps.shape, x0.shape))
    return math.sqrt(sched.alpha_bar[t]) * x0 + sched.sigma[t] * eps


def eps_to_score(eps, t, sched):
    return -np.asarray(eps, dtype=np.float64) / sched.sigma[t]


def score_to_eps(score, t, sched):
    return -sched.sigma[t] * np.asarray(score, dtype=np.float64)


def tweedie(x_t, score, t, sched):
    """Posterior mean E[x0 | x_t] from the score"""
    alpha_bar = sched.alpha_bar[t]
    if alpha_bar <= 0.0:
        raise NumericFailure("alpha_bar is zero at t=%d" % t)
    x_t = np.asarray(x_t, dtype=np.float64)
    score = np.asarray(score, dtype=np.float64)
    if x_t.shape != score.shape:
        raise InvalidArgument("Score shape %s does not match %s"
                              % (score.shape, x_t.shape))
    return (x_t + (1.0 - alpha_bar) * score) / math.sqrt(alpha_bar)


def ddim_sigma(t, t_prev, eta, sched):
    """Stochastic scale of the DDIM step from t to t_prev"""
    a_t = sched.alpha_bar[t]
    a_prev = sched.alpha_bar[t_prev]
    return eta * math.sqrt((1.0 - a_prev) / (1.0 - a_t)) \
        * math.sqrt(1.0 - a_t / a_prev)


def ddim_step(x_t, x0_hat, t, t_prev, eta, sched, rng, eps=None):
    """
    One DDIM update anchored at ``x0_hat``.

    The noise direction is re-derived from ``(x_t, x0_hat)`` unless ``eps``
    is given. Reaching ``t_prev == 0`` returns ``x0_hat``.
    """
    if not t > t_prev >= 0:
        raise InvalidArgument("Need t > t_prev >= 0, got %d, %d"
                              % (t, t_prev))
    if not 0.0 <= eta <= 1.0:
        raise InvalidArgument("eta must lie in [0, 1], got %g" % eta)
    sched.check_t(t)
    x0_hat = np.asarray(x0_hat, dtype=np.float64)
    if t_prev == 0:
        return x0_hat
    x_t = np.asarray(x_t, dtype=np.float64)
    if eps is None:
        eps = (x_t - math.sqrt(sched.alpha_bar[t]) * x0_hat) / sched.sigma[t]
    a_prev = sched.alpha_bar[t_prev]
    noise_scale = ddim_sigma(t, t_prev, eta, sched)
    direction = 1.0 - a_prev - noise_scale ** 2
    if direction < 0.0:
        raise NumericFailure("Negative DDIM direction variance at t=%d" % t)
    x_prev = math.sqrt(a_prev) * x0_hat + math.sqrt(direction) * eps
    if noise_scale > 0.0:
        x_prev = x_prev + noise_scale * rng.standard_normal(x0_hat.shape)
    return x_prev


def ddim_sample(score_fn, shape, sched, plan, rng, correct=None,
                callback=None, eps_source="rederived"):
    """
    Reverse diffusion from x_T ~ N(0, sigma_T^2 I).

    ``score_fn(x_t, t, step)`` returns the score. ``correct(x0_hat, t,
    step)`` may replace the Tweedie estimate (data consistency).
    ``eps_source`` selects whether DDIM re-derives its noise direction from
    the corrected estimate or keeps the one implied by the score.
    ``callback(step, t, x0_hat)`` observes every step.
    """
    if eps_source not in ("rederived", "score"):
        raise InvalidArgument("Unknown eps source [%s]" % eps_source)
    x = sched.sigma[sched.T] * rng.standard_normal(shape)
    for step, (t, t_prev) in enumerate(plan.pairs()):
        score = score_fn(x, t, step)
        x0_hat = tweedie(x, score, t, sched)
        if correct is not None:
            x0_hat = correct(x0_hat, t, step)
        eps = score_to_eps(score, t, sched) if eps_source == "score" else None
        x = ddim_step(x, x0_hat, t, t_prev, plan.eta, sched, rng, eps=eps)
        if not np.all(np.isfinite(x)):
            raise NumericFailure("Non-finite iterate", step)
        if callback is not None:
            callback(step, t, x0_hat)
    return x
