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
Exact scores of a Gaussian volume prior.

The prior is factorized along z: pixel ``p`` of the volume has the slice
profile ``x[:, p] ~ N(mu[:, p], v_p C)`` with one D x D slice-correlation
matrix ``C`` shared by all pixels and independent pixels. Under the VP
process the noised marginal of any slice subset S is
``N(sqrt(a) mu_S, a v_p C_SS + (1 - a) I)``, so its score needs only a
k x k solve per pixel.
"""
from dataclasses import dataclass

import logging
import math

import numpy as np
import scipy.linalg

from diffblend.errors import InvalidArgument, NumericFailure

__author__ = 'diffblend contributors'
__all__ = ['GaussianPrior', 'identity_correlation', 'ar1_correlation',
           'block_correlation', 'oracle_patch_score', 'oracle_volume_score',
           'oracle_conditional_score']

logger = logging.getLogger(__name__)


def identity_correlation(depth):
    return np.eye(depth)


def ar1_correlation(depth, rho):
    """C_ij = rho^|i - j|"""
    if not -1.0 < rho < 1.0:
        raise InvalidArgument("AR(1) correlation needs |rho| < 1")
    lags = np.abs(np.subtract.outer(np.arange(depth), np.arange(depth)))
    return float(rho) ** lags


def block_correlation(depth, block, rho):
    """Equicorrelated blocks of ``block`` consecutive slices"""
    if depth % block:
        raise InvalidArgument("Depth %d is not a multiple of block %d"
                              % (depth, block))
    inner = np.full((block, block), float(rho))
    np.fill_diagonal(inner, 1.0)
    return scipy.linalg.block_diag(*([inner] * (depth // block)))


@dataclass(frozen=True, eq=False)
class GaussianPrior:
    mean: np.ndarray
    spatial_variance: np.ndarray
    slice_corr: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=np.float64)
        if mean.ndim != 3:
            raise InvalidArgument("Prior mean needs shape (depth, height, "
                                  "width)")
        variance = np.broadcast_to(
            np.asarray(self.spatial_variance, dtype=np.float64),
            mean.shape[1:]).copy()
        if np.any(variance < 0) or not np.all(np.isfinite(variance)):
            raise InvalidArgument("Spatial variance must be finite and "
                                  "non-negative")
        corr = np.array(self.slice_corr, dtype=np.float64)
        if corr.shape != (mean.shape[0],) * 2:
            raise InvalidArgument("Slice correlation is %s, expected %dx%d"
                                  % (corr.shape, mean.shape[0],
                                     mean.shape[0]))
        if not np.allclose(corr, corr.T, atol=1e-12):
            raise InvalidArgument("Slice correlation is not symmetric")
        try:
            scipy.linalg.cholesky(corr, lower=True)
        except np.linalg.LinAlgError:
            raise InvalidArgument("Slice correlation is not positive "
                                  "definite")
        for name, value in (('mean', mean), ('spatial_variance', variance),
                            ('slice_corr', corr)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def depth(self):
        return self.mean.shape[0]

    @property
    def shape(self):
        return self.mean.shape

    @property
    def separable(self):
        """True when slices are independent (diagonal C)"""
        corr = self.slice_corr
        return np.array_equal(corr, np.diag(np.diag(corr)))

    def sample(self, rng):
        """One volume drawn from the prior"""
        factor = scipy.linalg.cholesky(self.slice_corr, lower=True)
        z = rng.standard_normal(self.shape)
        correlated = np.einsum('ij,jhw->ihw', factor, z)
        return self.mean + np.sqrt(self.spatial_variance) * correlated

    @classmethod
    def fit(cls, volumes, rho=None, variance_floor=1e-4):
        """
        Sample mean and per-pixel variance of a volume family, with an
        AR(1) slice correlation. ``rho`` defaults to the family's lag-one
        correlation of standardized residuals.
        """
        stack = np.stack([np.asarray(v, dtype=np.float64) for v in volumes])
        mean = stack.mean(axis=0)
        residual = stack - mean
        variance = np.maximum(residual.var(axis=(0, 1)), variance_floor)
        if rho is None:
            if stack.shape[1] < 2:
                rho = 0.0
            else:
                z = residual / np.sqrt(variance)
                lagged = np.mean(z[:, 1:] * z[:, :-1])
                rho = float(np.clip(lagged / max(np.mean(z * z), 1e-12),
                                    0.0, 0.99))
            logger.info("Fitted slice correlation rho=%.3f", rho)
        return cls(mean, variance, ar1_correlation(stack.shape[1], rho))


def _solve(corr, variance, alpha_bar, residual):
    """(a v C + (1 - a) I)^-1 r for every pixel"""
    noise = 1.0 - alpha_bar
    if np.array_equal(corr, np.diag(np.diag(corr))):
        denom = alpha_bar * variance[None] * np.diag(corr)[:, None, None] \
            + noise
        if np.any(denom <= 0.0):
            raise NumericFailure("Singular oracle system")
        return residual / denom
    lam, vectors = scipy.linalg.eigh(corr)
    denom = alpha_bar * variance[None] * lam[:, None, None] + noise
    if np.any(denom <= 0.0) or not np.all(np.isfinite(denom)):
        raise NumericFailure("Singular oracle system")
    rotated = np.einsum('ki,khw->ihw', vectors, residual)
    return np.einsum('ki,ihw->khw', vectors, rotated / denom)


def _check_indices(prior, indices):
    bad = [i for i in indices if not 0 <= i < prior.depth]
    if bad:
        raise InvalidArgument("Slices %s outside prior depth %d"
                              % (bad, prior.depth))


def oracle_patch_score(prior, indices, patch, t, sched):
    """Score of the noised marginal of the slices ``indices``"""
    indices = list(indices)
    _check_indices(prior, indices)
    patch = np.asarray(patch, dtype=np.float64)
    if patch.shape != (len(indices),) + prior.shape[1:]:
        raise InvalidArgument("Patch shape %s does not fit %d slices"
                              % (patch.shape, len(indices)))
    alpha_bar = sched.alpha_bar[t]
    residual = patch - math.sqrt(alpha_bar) * prior.mean[indices]
    corr = prior.slice_corr[np.ix_(indices, indices)]
    return -_solve(corr, prior.spatial_variance, alpha_bar, residual)


def oracle_conditional_score(prior, indices, window, center, t, sched):
    """
    Score of slice ``indices[center]`` given its window neighbours.

    Window positions repeating the centre index (boundary padding) carry
    no extra information and are dropped.
    """
    indices = list(indices)
    window = np.asarray(window, dtype=np.float64)
    target = indices[center]
    chosen, rows = [target], [center]
    for position, index in enumerate(indices):
        if index not in chosen:
            chosen.append(index)
            rows.append(position)
    score = oracle_patch_score(prior, chosen, window[rows], t, sched)
    return score[0]


def oracle_volume_score(prior, x_t, t, sched):
    """Exact score of the full noised volume"""
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.shape != prior.shape:
        raise InvalidArgument("Volume shape %s does not match prior %s"
                              % (x_t.shape, prior.shape))
    return oracle_patch_score(prior, range(prior.depth), x_t, t, sched)
