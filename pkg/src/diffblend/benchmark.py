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
The desk-scale benchmark: a phantom from the bundled spec, a family of
sibling phantoms for the prior, simulated sparse- or limited-view data and
every reconstruction method scored against the ground truth.
"""
from dataclasses import dataclass

import logging
import os

import numpy as np

import diffblend
from diffblend import ctoperator
from diffblend.diffusion import make_schedule
from diffblend.errors import InputMismatch, InvalidArgument
from diffblend.formats import read_checkpoint
from diffblend.metrics import evaluate, write_report
from diffblend.phantom import family_spec, load_phantom_spec, \
    make_phantom, phantom_family
from diffblend.recon import METHODS, ReconConfig, reconstruct
from diffblend.score import DenoiserBackend, OracleBackend
from diffblend.score.oracle import GaussianPrior
from diffblend.volume import pad_repeat

__author__ = 'diffblend contributors'
__all__ = ['DeskCase', 'desk_spec_path', 'make_case', 'schedule_from',
           'make_backend', 'network_kind', 'checkpoint_path', 'run_method',
           'run_benchmark', 'ALL_METHODS', 'BENCHMARK_COLUMNS',
           'CHECKPOINT_KEYS']

logger = logging.getLogger(__name__)

# Prior/training phantoms never share a seed or variant with the ground truth
FAMILY_SEED_OFFSET = 1000
ALL_METHODS = ("fbp",) + METHODS
BENCHMARK_COLUMNS = ("method", "mode", "views", "cross_frequency", "nfe",
                     "seed")
CHECKPOINT_KEYS = {"joint": "recon.checkpoint_joint",
                   "conditional": "recon.checkpoint_conditional",
                   "slice": "recon.checkpoint_slice"}


def desk_spec_path():
    return os.path.join(diffblend.module_path, "configs", "phantom",
                        "desk.yaml")


@dataclass(frozen=True, eq=False)
class DeskCase:
    truth: object
    family: list
    geometry: ctoperator.ViewGeometry
    sinogram: ctoperator.Sinogram
    height: int
    width: int


def geometry_from(config, views, width, height, mode=None):
    n_det = config["geometry.n_det"] or ctoperator.default_n_det(width,
                                                                 height)
    return ctoperator.make_geometry(mode or config["geometry.mode"], views,
                                    n_det, config["geometry.det_spacing"])


def make_case(config, spec=None, views=None, mode=None):
    """Ground truth, phantom family, geometry and simulated sinogram"""
    if spec is None:
        spec = load_phantom_spec(desk_spec_path())
    views = views or config["geometry.views"]
    truth = make_phantom(spec)
    family = phantom_family(family_spec(spec, FAMILY_SEED_OFFSET),
                            config["prior.family_size"])
    g = geometry_from(config, views, spec.width, spec.height, mode)
    rng = np.random.default_rng([config["seed"], views])
    sinogram = ctoperator.add_measurement_noise(
        ctoperator.project(truth, g), config["geometry.noise_std"], rng)
    return DeskCase(truth, family, g, sinogram, spec.height, spec.width)


def schedule_from(config):
    return make_schedule(config["schedule.T"], config["schedule.beta_min"],
                         config["schedule.beta_max"])


def network_kind(config, method):
    """The network a method queries: joint, conditional or slice"""
    if method == "blendpp" and config["recon.ablation"] != "ztv":
        return "joint"
    if method == "blend":
        return "conditional"
    return "slice"


def checkpoint_path(config, method):
    """The checkpoint for the method's network, else recon.checkpoint"""
    key = CHECKPOINT_KEYS[network_kind(config, method)]
    return config[key] or config["recon.checkpoint"]


def _backend_depth(config, method, depth):
    if network_kind(config, method) == "joint":
        block = config["recon.k"] ** 2
        return -(-depth // block) * block
    return depth


def make_backend(config, family, method, depth, params=None):
    """
    Oracle backend with a prior fitted to ``family`` (repetition-padded
    to the depth the method works on) or the checkpoint of the method's
    network.
    """
    if config["recon.backend"] == "oracle":
        target = _backend_depth(config, method, depth)
        volumes = [pad_repeat(v, target) for v in family]
        prior = GaussianPrior.fit(volumes, rho=config["prior.rho"],
                                  variance_floor=config[
                                      "prior.variance_floor"])
        return OracleBackend(prior)
    if config["recon.backend"] == "denoiser":
        if params is None:
            path = checkpoint_path(config, method)
            if not path:
                key = CHECKPOINT_KEYS[network_kind(config, method)]
                raise InvalidArgument("The denoiser backend needs %s or "
                                      "recon.checkpoint for %s"
                                      % (key, method))
            logger.info("Loading %s network from [%s]",
                        network_kind(config, method), path)
            params = read_checkpoint(path)
        return DenoiserBackend(params)
    raise InvalidArgument("Unknown backend [%s]" % config["recon.backend"])


def run_method(case, config, method, sched=None, backend=None,
               diagnostics=None):
    """Reconstruct ``case`` with ``method`` (FBP or a diffusion variant)"""
    if method == "fbp":
        return ctoperator.fbp(case.sinogram, case.geometry, case.height,
                              case.width)
    sched = sched or schedule_from(config)
    if backend is None:
        backend = make_backend(config, case.family, method,
                               case.sinogram.depth)
    recon_config = ReconConfig.from_run_config(
        config, case.geometry, case.height, case.width, backend, sched)
    return reconstruct(case.sinogram, recon_config, method,
                       ground_truth=case.truth, diagnostics=diagnostics)


def run_benchmark(config, views=(8,), modes=("sparse",), methods=ALL_METHODS,
                  cross_frequencies=None, nfes=None, out=None, spec=None):
    """
    Every (mode, views, method) combination, plus cross-frequency and NFE
    sweeps for the blended method. Returns ``(row, MetricReport)`` pairs
    and writes them as CSV when ``out`` is given.
    """
    sched = schedule_from(config)
    results = []
    for mode in modes:
        for n_views in views:
            case = make_case(config, spec, n_views, mode)
            for method in methods:
                sweeps = [(config["recon.cross_frequency"],
                           config["recon.nfe"])]
                if method == "blendpp" and cross_frequencies:
                    sweeps = [(f, config["recon.nfe"])
                              for f in cross_frequencies]
                if method != "fbp" and nfes:
                    sweeps = [(f, n) for f, _ in sweeps for n in nfes]
                for frequency, nfe in sweeps:
                    run = config.copy()
                    run.set("recon.cross_frequency", frequency)
                    run.set("recon.nfe", nfe)
                    try:
                        volume = run_method(case, run, method, sched)
                    except InputMismatch as e:
                        logger.warning("Skipping %s: %s", method, e)
                        continue
                    report = evaluate(volume, case.truth,
                                      config["data_range"])
                    logger.info("%s %s %d views f=%d nfe=%d: PSNR %.2f dB",
                                method, mode, n_views, frequency, nfe,
                                report.psnr)
                    row = {"method": method, "mode": mode, "views": n_views,
                           "cross_frequency": frequency, "nfe": nfe,
                           "seed": config["seed"]}
                    results.append((row, report))
    if out:
        write_report(out, results, extra=BENCHMARK_COLUMNS)
    return results
