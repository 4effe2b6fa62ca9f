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
End-to-end reconstruction: reverse diffusion over the volume with a
blended slice-patch score, Tweedie denoising, CG data consistency on the
normal equations and a DDIM step per timestep.

  * reconstruct_blendpp - joint k-slice patches over alternating
    adjacency/cross partitions
  * reconstruct_blend   - every slice conditioned on j neighbours per side
  * reconstruct_ztv     - independent slices plus a z-TV proximal step
"""
from dataclasses import dataclass

import logging

import numpy as np

from diffblend import ctoperator
from diffblend.ctoperator import ViewGeometry, check_sinogram
from diffblend.diffusion import NoiseSchedule, ddim_sample, make_plan
from diffblend.errors import InputMismatch, InvalidArgument, NumericFailure
from diffblend.krylov import cg_solve, normal_operator
from diffblend.metrics import psnr
from diffblend.partition import PartitionSchedule, blended_score, \
    conditional_blended_score, sample_partition
from diffblend.score import DenoiserBackend, OracleBackend, ScoreBackend
from diffblend.utils.logdatawriter import CsvWriter
from diffblend.volume import crop_depth, pad_counts

__author__ = 'diffblend contributors'
__all__ = ['ReconConfig', 'reconstruct', 'reconstruct_blendpp',
           'reconstruct_blend', 'reconstruct_ztv', 'reconstruct_independent',
           'ztv_prox', 'DIAGNOSTIC_COLUMNS', 'ABLATIONS', 'METHODS']

logger = logging.getLogger(__name__)

DIAGNOSTIC_COLUMNS = ("step", "t", "partition_kind", "residual_norm",
                      "psnr_vs_gt")
ABLATIONS = ("none", "fixed-partition", "adjacency-only", "ztv")
METHODS = ("blendpp", "blend", "ztv", "independent")
ZTV_PROX_ITERATIONS = 50

_PARTITION_MODES = {
    "none": "blend",
    "fixed-partition": "fixed",
    "adjacency-only": "adjacency",
}


@dataclass(frozen=True, eq=False)
class ReconConfig:
    geometry: ViewGeometry
    height: int
    width: int
    backend: ScoreBackend
    sched: NoiseSchedule
    nfe: int = 200
    eta: float = 0.85
    cg_iters: int = 5
    k: int = 3
    j: int = 1
    cross_frequency: int = 2
    ablation: str = "none"
    ztv_weight: float = 0.0
    seed: int = 0
    threads: int = 1
    eps_source: str = "rederived"

    def __post_init__(self):
        if not 1 <= self.nfe <= self.sched.T:
            raise InvalidArgument("recon.nfe must lie in [1, %d]"
                                  % self.sched.T)
        if self.cg_iters < 0:
            raise InvalidArgument("recon.cg_iters must be non-negative")
        if self.k < 1 or self.j < 0:
            raise InvalidArgument("Need k >= 1 and j >= 0")
        if self.cross_frequency < 1:
            raise InvalidArgument("recon.cross_frequency must be >= 1")
        if self.ablation not in ABLATIONS:
            raise InvalidArgument("Unknown ablation [%s]" % self.ablation)
        if self.ztv_weight < 0:
            raise InvalidArgument("recon.ztv_weight must be non-negative")
        if self.eps_source not in ("rederived", "score"):
            raise InvalidArgument("Unknown eps source [%s]"
                                  % self.eps_source)
        if self.height < 1 or self.width < 1:
            raise InvalidArgument("Image size must be positive")

    @classmethod
    def from_run_config(cls, config, geometry, height, width, backend,
                        sched):
        recon = config.section("recon")
        return cls(geometry, height, width, backend, sched,
                   nfe=recon["nfe"], eta=recon["eta"],
                   cg_iters=recon["cg_iters"], k=recon["k"], j=recon["j"],
                   cross_frequency=recon["cross_frequency"],
                   ablation=recon["ablation"],
                   ztv_weight=recon["ztv_weight"], seed=config["seed"],
                   threads=config["threads"],
                   eps_source=recon["eps_source"])


def _dz_adjoint(p):
    out = np.zeros((p.shape[0] + 1,) + p.shape[1:])
    out[:-1] -= p
    out[1:] += p
    return out


def ztv_prox(x, weight, iterations=ZTV_PROX_ITERATIONS):
    """
    argmin_u 1/2 |u - x|^2 + weight |D_z u|_1, by projected gradient on
    the dual variable of the z-differences.
    """
    x = np.asarray(x, dtype=np.float64)
    if weight <= 0 or x.shape[0] < 2:
        return x
    p = np.zeros((x.shape[0] - 1,) + x.shape[1:])
    step = 1.0 / (4.0 * weight)
    for _ in range(iterations):
        u = x - weight * _dz_adjoint(p)
        p = np.clip(p + step * np.diff(u, axis=0), -1.0, 1.0)
    return x - weight * _dz_adjoint(p)


def _check_backend(config, depth, mode, channels):
    backend = config.backend
    differences = []
    if isinstance(backend, DenoiserBackend):
        arch = backend.params.arch
        if arch.in_channels != channels:
            differences.append(("in_channels", channels, arch.in_channels))
        out = channels if mode == "joint" else 1
        if arch.out_channels != out:
            differences.append(("out_channels", out, arch.out_channels))
    elif isinstance(backend, OracleBackend):
        expected = (depth, config.height, config.width)
        if backend.prior.shape != expected:
            differences.append(("prior shape", expected, backend.prior.shape))
    if differences:
        raise InputMismatch("backend vs reconstruction", differences)


def _pad_sinogram(data, above, below):
    if above == 0 and below == 0:
        return data
    return np.concatenate([np.repeat(data[:1], above, axis=0), data,
                           np.repeat(data[-1:], below, axis=0)])


def _run(y, config, depth, score, kind, prox=None, ground_truth=None,
         diagnostics=None):
    """Shared sampling loop over a volume of ``depth`` slices"""
    g = config.geometry
    data = np.asarray(y, dtype=np.float64)
    check_sinogram(data, g)
    above, below = pad_counts(data.shape[0], depth)
    measured = _pad_sinogram(data, above, below)
    op = normal_operator(g)
    rhs = ctoperator.adjoint(measured, g, config.height, config.width)
    plan = make_plan(config.sched.T, config.nfe, config.eta)
    rng = np.random.default_rng(config.seed)
    truth = None if ground_truth is None else np.asarray(ground_truth)
    writer = CsvWriter(diagnostics, DIAGNOSTIC_COLUMNS) if diagnostics \
        else None
    state = {}

    def score_fn(x, t, step):
        state["kind"] = kind(step)
        return score(x, t, step)

    def correct(x0_hat, t, step):
        try:
            result = cg_solve(op, rhs, x0_hat, config.cg_iters)
        except NumericFailure as e:
            raise NumericFailure("CG failed: %s" % e, step) from e
        x = result.x
        if prox is not None:
            x = prox(x)
        return x

    def callback(step, t, x0_hat):
        if writer is None and not logger.isEnabledFor(logging.DEBUG):
            return
        residual = float(np.linalg.norm(ctoperator.forward(x0_hat, g)
                                        - measured))
        quality = ""
        if truth is not None:
            quality = psnr(x0_hat[above:depth - below], truth)
        logger.debug("Step %d t=%d %s residual %.4g", step, t,
                     state.get("kind"), residual)
        if writer:
            writer.write({"step": step, "t": t,
                          "partition_kind": state.get("kind"),
                          "residual_norm": residual, "psnr_vs_gt": quality})

    if writer:
        writer.start()
    try:
        x = ddim_sample(score_fn, (depth, config.height, config.width),
                        config.sched, plan, rng, correct=correct,
                        callback=callback, eps_source=config.eps_source)
    finally:
        if writer:
            writer.stop()
    if not np.all(np.isfinite(x)):
        raise NumericFailure("Reconstruction is not finite")
    return crop_depth(x, above, below)


def reconstruct_blendpp(y, config, ground_truth=None, diagnostics=None):
    """
    Joint patch scores over a partition drawn per step: cross on steps
    divisible by the cross frequency, random-offset adjacency otherwise.
    The problem is repetition-padded to a multiple of k^2 slices first.
    """
    if config.ablation == "ztv":
        return reconstruct_ztv(y, config, ground_truth, diagnostics)
    data = np.asarray(y)
    block = config.k * config.k
    depth = -(-data.shape[0] // block) * block
    _check_backend(config, depth, "joint", config.k)
    schedule = PartitionSchedule(config.cross_frequency, config.seed,
                                 _PARTITION_MODES[config.ablation])
    partitions = {}

    def partition_for(step):
        if step not in partitions:
            partitions.clear()
            partitions[step] = sample_partition(schedule, depth, config.k,
                                                step)
        return partitions[step]

    def score(x, t, step):
        return blended_score(config.backend, x, t, partition_for(step),
                             config.sched, threads=config.threads,
                             iteration=step)

    logger.info("Blended patch reconstruction: %d slices (padded to %d), "
                "k=%d, %d NFE", data.shape[0], depth, config.k, config.nfe)
    return _run(y, config, depth, score,
                lambda step: partition_for(step).kind,
                ground_truth=ground_truth, diagnostics=diagnostics)


def reconstruct_blend(y, config, ground_truth=None, diagnostics=None):
    """Per-slice scores conditioned on j neighbours above and below"""
    return _conditional(y, config, config.j, None, ground_truth,
                        diagnostics)


def reconstruct_independent(y, config, ground_truth=None, diagnostics=None):
    """Every slice scored on its own"""
    return _conditional(y, config, 0, None, ground_truth, diagnostics)


def reconstruct_ztv(y, config, ground_truth=None, diagnostics=None):
    """Independent slice scores with a z-TV proximal step after CG"""
    weight = config.ztv_weight
    prox = None
    if weight > 0:
        def prox(x):
            return ztv_prox(x, weight)
    return _conditional(y, config, 0, prox, ground_truth, diagnostics)


def _conditional(y, config, j, prox, ground_truth, diagnostics):
    depth = np.asarray(y).shape[0]
    _check_backend(config, depth, "conditional", 2 * j + 1)

    def score(x, t, step):
        return conditional_blended_score(config.backend, x, t, j,
                                         config.sched,
                                         threads=config.threads,
                                         iteration=step)

    kind = "conditional" if j else "slice"
    logger.info("Slice-wise reconstruction: %d slices, j=%d, z-TV weight "
                "%g, %d NFE", depth, j, config.ztv_weight if prox else 0.0,
                config.nfe)
    return _run(y, config, depth, score, lambda step: kind, prox=prox,
                ground_truth=ground_truth, diagnostics=diagnostics)


def reconstruct(y, config, method="blendpp", ground_truth=None,
                diagnostics=None):
    """Dispatch on the method name"""
    if method not in METHODS:
        raise InvalidArgument("Unknown reconstruction method [%s]" % method)
    runner = {
        "blendpp": reconstruct_blendpp,
        "blend": reconstruct_blend,
        "ztv": reconstruct_ztv,
        "independent": reconstruct_independent,
    }[method]
    return runner(y, config, ground_truth, diagnostics)
