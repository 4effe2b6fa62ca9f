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
Patch-score evaluation. A backend turns a stack of noised slices, the
timestep and the relative slice spacing into a score:

  * OracleBackend  - exact scores of a GaussianPrior
  * DenoiserBackend - a trained noise predictor, score = -eps_hat / sigma_t
"""
from dataclasses import dataclass

import logging

import numpy as np

from diffblend.diffusion import eps_to_score
from diffblend.errors import InvalidArgument
from diffblend.score.denoiser import DenoiserArch, DenoiserParams, \
    denoiser_eval, denoiser_grad, init_params
from diffblend.score.embedding import embed
from diffblend.score.oracle import GaussianPrior, ar1_correlation, \
    block_correlation, identity_correlation, oracle_conditional_score, \
    oracle_patch_score, oracle_volume_score

__author__ = 'diffblend contributors'
__all__ = ['PatchScoreRequest', 'ScoreBackend', 'OracleBackend',
           'DenoiserBackend', 'GaussianPrior', 'DenoiserArch',
           'DenoiserParams', 'init_params', 'denoiser_eval', 'denoiser_grad',
           'embed', 'oracle_patch_score', 'oracle_volume_score',
           'oracle_conditional_score', 'identity_correlation',
           'ar1_correlation', 'block_correlation']

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PatchScoreRequest:
    """
    Slices gathered for one score evaluation.

    ``indices`` are the volume slice indices of the stacked ``patch``
    (boundary repeats included). In conditional mode the window holds
    ``2j + 1`` slices and the centre is position ``j``.
    """
    patch: np.ndarray
    t: int
    indices: tuple
    spacing: int = 1
    mode: str = "joint"
    j: int = 0

    def __post_init__(self):
        patch = np.asarray(self.patch, dtype=np.float64)
        object.__setattr__(self, 'patch', patch)
        object.__setattr__(self, 'indices', tuple(int(i)
                                                  for i in self.indices))
        if patch.ndim != 3 or patch.shape[0] < 1:
            raise InvalidArgument("Patch needs shape (k, height, width)")
        if patch.shape[0] != len(self.indices):
            raise InvalidArgument("Patch has %d slices for %d indices"
                                  % (patch.shape[0], len(self.indices)))
        if self.spacing < 1:
            raise InvalidArgument("Spacing must be positive")
        if self.mode not in ("joint", "conditional"):
            raise InvalidArgument("Unknown request mode [%s]" % self.mode)
        if self.mode == "conditional" and patch.shape[0] != 2 * self.j + 1:
            raise InvalidArgument("Conditional window needs 2j+1 = %d "
                                  "slices, got %d"
                                  % (2 * self.j + 1, patch.shape[0]))

    @property
    def k(self):
        return self.patch.shape[0]


class ScoreBackend():
    """Evaluates patch scores; subclasses implement :meth:`patch_score`"""

    name = "backend"

    def patch_score(self, req, sched):
        """Joint mode: (k, H, W) score. Conditional: (H, W) centre score"""
        raise NotImplementedError()


class OracleBackend(ScoreBackend):
    """Exact scores of a GaussianPrior"""

    name = "oracle"

    def __init__(self, prior):
        self.prior = prior

    def patch_score(self, req, sched):
        if req.mode == "conditional":
            return oracle_conditional_score(self.prior, req.indices,
                                            req.patch, req.j, req.t, sched)
        # Boundary repeats share the score of the slice they copy
        unique, first, inverse = np.unique(req.indices, return_index=True,
                                           return_inverse=True)
        score = oracle_patch_score(self.prior, unique, req.patch[first],
                                   req.t, sched)
        return score[inverse]


class DenoiserBackend(ScoreBackend):
    """Scores from a trained noise predictor"""

    name = "denoiser"

    def __init__(self, params):
        self.params = params

    def patch_score(self, req, sched):
        arch = self.params.arch
        if req.mode == "conditional" and arch.out_channels != 1:
            raise InvalidArgument("Joint network (%d outputs) cannot serve "
                                  "conditional requests" % arch.out_channels)
        eps = denoiser_eval(self.params, req, sched)
        score = eps_to_score(eps, req.t, sched)
        if req.mode == "conditional":
            return score[0]
        return score
