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
Analytic verification suites run by ``diffblend oracle-check``.

Each suite checks one invariant against a closed form or an exact
identity and returns a SuiteResult; none of them needs a trained model.
"""
from dataclasses import dataclass

import logging
import time

import numpy as np

from diffblend import ctoperator
from diffblend.diffusion import ddim_sample, make_plan, make_schedule
from diffblend.errors import VerificationFailure
from diffblend.krylov import LinearOperator, cg_solve
from diffblend.partition import adjacency_partition, blended_score
from diffblend.score import OracleBackend, PatchScoreRequest
from diffblend.score.denoiser import PARAM_ORDER, DenoiserArch, \
    DenoiserParams, denoiser_grad, init_params
from diffblend.score.oracle import GaussianPrior, ar1_correlation, \
    block_correlation, identity_correlation, oracle_volume_score
from diffblend.training import check_product_bound, \
    check_separable_reduction

__author__ = 'diffblend contributors'
__all__ = ['SuiteResult', 'SUITES', 'FAULTS', 'run_suites', 'verify',
           'format_table']

logger = logging.getLogger(__name__)

FAULTS = ("adjoint",)


@dataclass(frozen=True)
class SuiteResult:
    name: str
    invariant: str
    passed: bool
    detail: str
    seconds: float = 0.0


def _relative(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def oracle_exactness(rng, faults):
    """Blended score equals the volume score for a conformal block prior"""
    sched = make_schedule(1000, 1e-4, 0.02)
    depth, size = 9, 16
    prior = GaussianPrior(rng.uniform(0.2, 0.8, (depth, size, size)),
                          rng.uniform(0.01, 0.05, (size, size)),
                          block_correlation(depth, 3, 0.7))
    backend = OracleBackend(prior)
    partition = adjacency_partition(depth, 3, 0)
    worst = 0.0
    for _ in range(20):
        t = int(rng.integers(1, sched.T + 1))
        x_t = rng.standard_normal(prior.shape)
        worst = max(worst, _relative(
            blended_score(backend, x_t, t, partition, sched),
            oracle_volume_score(prior, x_t, t, sched)))
    return worst <= 1e-6, "max relative error %.2e" % worst


def product_bound(rng, faults):
    """Separated training bound on the joint two-factor loss"""
    shape = (4, 4)
    samples, q, r = [], [], []
    for _ in range(1000):
        sigma = rng.uniform(0.05, 1.0)
        x = rng.standard_normal(shape)
        y = x + sigma * rng.standard_normal(shape)
        samples.append((y, x, sigma))
        q.append(rng.standard_normal(shape) / sigma)
        r.append(rng.standard_normal(shape) / sigma)
    for s_q, s_r, sample in zip(q, r, samples):
        if not check_product_bound([s_q], [s_r], [sample]).holds:
            return False, "bound violated on a random instance"
    equal = check_product_bound(q, q, samples)
    gap = abs(equal.gap) / equal.bound
    return gap <= 1e-10, "equality gap %.2e when X = Y" % gap


def separable_reduction(rng, faults):
    """Full DSM loss equals the sum over disjoint patches"""
    depth, size = 6, 4
    prior = GaussianPrior(np.zeros((depth, size, size)), 1.0,
                          identity_correlation(depth))
    worst = 0.0
    for _ in range(100):
        order = rng.permutation(depth)
        cut = int(rng.integers(1, depth))
        patches = [sorted(order[:cut]), sorted(order[cut:])]
        sigma = rng.uniform(0.05, 1.0)
        x = rng.standard_normal(prior.shape)
        y = x + sigma * rng.standard_normal(prior.shape)
        score = rng.standard_normal(prior.shape)
        report = check_separable_reduction(prior, patches,
                                           [(y, x, sigma, score)])
        worst = max(worst, report.relative_error)
    return worst <= 1e-6, "max relative error %.2e" % worst


def adjoint_pair(rng, faults):
    """<A x, y> = <x, A* y> for parallel-beam geometries"""
    size = 64
    n_det = ctoperator.default_n_det(size, size)
    scale = 1.001 if "adjoint" in faults else 1.0
    worst = 0.0
    view_counts = (8, 23, 60, 90, 180)
    for n in range(50):
        g = ctoperator.make_geometry("sparse", view_counts[n % 5], n_det)
        x = rng.standard_normal((1, size, size))
        y = rng.standard_normal((1, g.n_views, n_det))
        lhs = np.vdot(ctoperator.forward(x, g), y)
        rhs = np.vdot(x, scale * ctoperator.adjoint(y, g, size, size))
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1e-300))
    return worst <= 1e-5, "max relative error %.2e" % worst


def cg_termination(rng, faults):
    """CG solves dense SPD systems within n steps"""
    worst = 0.0
    for n in (4, 16, 32, 64):
        q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        matrix = (q * rng.uniform(1.0, 4.0, n)) @ q.T
        op = LinearOperator(lambda v, m=matrix: m @ v, "dense")
        rhs = rng.standard_normal(n)
        result = cg_solve(op, rhs, np.zeros(n), n)
        residual = np.linalg.norm(rhs - matrix @ result.x) \
            / np.linalg.norm(rhs)
        worst = max(worst, residual)
    return worst <= 1e-8, "max relative residual %.2e" % worst


def point_mass_sampler(rng, faults):
    """Deterministic DDIM with the exact point-mass score recovers it"""
    sched = make_schedule(1000, 1e-4, 0.02)
    mu = rng.uniform(0.0, 1.0, (2, 8, 8))

    def score(x, t, step):
        return -(x - np.sqrt(sched.alpha_bar[t]) * mu) / sched.sigma[t] ** 2

    x = ddim_sample(score, mu.shape, sched, make_plan(1000, 50, 0.0), rng)
    error = float(np.max(np.abs(x - mu)))
    return error <= 1e-4, "max error %.2e" % error


def gaussian_sampler(rng, faults):
    """DDIM with the exact Gaussian score reproduces mean and variance"""
    sched = make_schedule(1000, 1e-4, 0.02)
    samples, depth, size, variance = 256, 2, 8, 1.0
    mu = rng.uniform(0.2, 0.8, (depth, size, size))
    # Independent copies side by side along the width
    prior = GaussianPrior(np.tile(mu, (1, 1, samples)), variance,
                          ar1_correlation(depth, 0.5))

    def score(x, t, step):
        return oracle_volume_score(prior, x, t, sched)

    x = ddim_sample(score, prior.shape, sched, make_plan(1000, 50, 0.0),
                    rng)
    draws = x.reshape(depth, size, samples, size)
    mean = draws.mean(axis=2)
    spread = draws.var(axis=2, ddof=1)
    standard_error = np.sqrt(variance / samples)
    inside = float(np.mean(np.abs(mean - mu) <= 3.0 * standard_error))
    ratio = float(np.mean(spread) / variance)
    ok = inside >= 0.95 and abs(ratio - 1.0) <= 0.25
    return ok, "mean within 3 SE for %.0f%%, variance ratio %.3f" % (
        100 * inside, ratio)


def gradient_check(rng, faults):
    """Backpropagated gradients against central differences"""
    sched = make_schedule(1000, 1e-4, 0.02)
    arch = DenoiserArch.joint(3, hidden=4, emb_dim=8)
    params = init_params(arch, int(rng.integers(1 << 31)))
    req = PatchScoreRequest(rng.standard_normal((3, 8, 8)), 500, (0, 1, 2))
    target = rng.standard_normal((3, 8, 8))
    _, grads = denoiser_grad(params, req, target, sched)
    analytic = np.concatenate([grads[n].ravel() for n in PARAM_ORDER])
    flat = params.flatten()
    h = 1e-5
    worst = 0.0
    for i in range(flat.size):
        step = np.zeros_like(flat)
        step[i] = h
        up, _ = denoiser_grad(DenoiserParams.from_flat(arch, flat + step),
                              req, target, sched)
        down, _ = denoiser_grad(DenoiserParams.from_flat(arch, flat - step),
                                req, target, sched)
        numeric = (up - down) / (2 * h)
        # |g - fd| <= 1e-3 (|g| + |fd|) + 1e-7
        allowed = 1e-3 * (abs(analytic[i]) + abs(numeric)) + 1e-7
        worst = max(worst, abs(analytic[i] - numeric) / allowed)
    return worst <= 1.0, "worst error at %.2f of tolerance over %d " \
        "weights" % (worst, flat.size)


SUITES = (
    ("oracle-exactness", "blended score equals the exact volume score",
     oracle_exactness),
    ("product-bound", "joint loss <= separated bound, equality at X = Y",
     product_bound),
    ("separable-reduction", "volume loss = sum of patch losses",
     separable_reduction),
    ("adjoint", "<Ax, y> = <x, A*y>", adjoint_pair),
    ("cg-termination", "CG residual <= 1e-8 within n steps",
     cg_termination),
    ("point-mass-sampler", "DDIM recovers a point mass", point_mass_sampler),
    ("gaussian-sampler", "DDIM matches Gaussian mean and variance",
     gaussian_sampler),
    ("gradient-check", "backprop matches finite differences",
     gradient_check),
)


def run_suites(seed=0, faults=(), names=None):
    """Run every suite (or the ``names`` given); failures do not stop it"""
    unknown = set(faults) - set(FAULTS)
    if unknown:
        raise ValueError("Unknown fault %s" % sorted(unknown)[0])
    results = []
    for index, (name, invariant, suite) in enumerate(SUITES):
        if names and name not in names:
            continue
        rng = np.random.default_rng([seed, index])
        start = time.perf_counter()
        try:
            passed, detail = suite(rng, faults)
        except Exception as e:
            logger.exception("Suite %s raised", name)
            passed, detail = False, "%s: %s" % (type(e).__name__, e)
        seconds = time.perf_counter() - start
        logger.info("%s: %s (%s, %.2fs)", name,
                    "pass" if passed else "FAIL", detail, seconds)
        results.append(SuiteResult(name, invariant, passed, detail, seconds))
    return results


def verify(results):
    """Raise VerificationFailure naming the first failed suite"""
    for result in results:
        if not result.passed:
            raise VerificationFailure(result.name, result.detail)


def format_table(results):
    width = max(len(r.name) for r in results)
    lines = ["%-*s  %-4s  %7s  %s" % (width, "suite", "ok", "seconds",
                                      "detail")]
    for r in results:
        lines.append("%-*s  %-4s  %7.2f  %s" % (
            width, r.name, "pass" if r.passed else "FAIL", r.seconds,
            r.detail))
    return "\n".join(lines)
