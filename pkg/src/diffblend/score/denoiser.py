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
A small convolutional noise predictor with hand-written reverse-mode
gradients.

Architecture, for ``c_in`` stacked input slices::

    conv3x3(c_in -> hidden) + b1 + W_e embed(t, p)   -> SiLU
    conv3x3(hidden -> hidden) + b2                   -> SiLU
    conv3x3(hidden -> c_out) + b3                    -> eps_hat

All convolutions use zero 'same' padding. Joint patch models have
``c_out == c_in == k``; conditional models read a ``2j + 1`` window and
predict the centre slice only.
"""
from dataclasses import dataclass
from types import MappingProxyType

import logging

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from diffblend.errors import InvalidArgument, NumericFailure
from diffblend.score.embedding import embed

__author__ = 'diffblend contributors'
__all__ = ['DenoiserArch', 'DenoiserParams', 'init_params', 'denoiser_eval',
           'denoiser_grad', 'PARAM_ORDER']

logger = logging.getLogger(__name__)

PARAM_ORDER = ('w1', 'b1', 'we', 'w2', 'b2', 'w3', 'b3')


@dataclass(frozen=True)
class DenoiserArch:
    in_channels: int
    out_channels: int
    hidden: int = 32
    emb_dim: int = 32
    position_encoding: bool = True

    def __post_init__(self):
        if min(self.in_channels, self.out_channels, self.hidden) < 1:
            raise InvalidArgument("Channel counts must be positive")
        if self.emb_dim < 2 or self.emb_dim % 2:
            raise InvalidArgument("Embedding size must be even")

    @classmethod
    def joint(cls, k, **kwargs):
        return cls(k, k, **kwargs)

    @classmethod
    def conditional(cls, j, **kwargs):
        return cls(2 * j + 1, 1, **kwargs)

    @property
    def mode(self):
        if self.out_channels == 1 and self.in_channels % 2 == 1 \
                and self.in_channels > 1:
            return "conditional"
        if self.in_channels == self.out_channels:
            return "joint"
        raise InvalidArgument("Architecture %s is neither joint nor "
                              "conditional" % (self,))

    def shapes(self):
        h, ci, co, e = (self.hidden, self.in_channels, self.out_channels,
                        self.emb_dim)
        return {'w1': (h, ci, 3, 3), 'b1': (h,), 'we': (h, e),
                'w2': (h, h, 3, 3), 'b2': (h,),
                'w3': (co, h, 3, 3), 'b3': (co,)}

    @property
    def size(self):
        return sum(int(np.prod(s)) for s in self.shapes().values())


@dataclass(frozen=True, eq=False)
class DenoiserParams:
    arch: DenoiserArch
    weights: MappingProxyType

    def __post_init__(self):
        shapes = self.arch.shapes()
        frozen = {}
        for name in PARAM_ORDER:
            value = np.array(self.weights[name], dtype=np.float64)
            if value.shape != shapes[name]:
                raise InvalidArgument("Weight %s has shape %s, expected %s"
                                      % (name, value.shape, shapes[name]))
            if not np.all(np.isfinite(value)):
                raise InvalidArgument("Weight %s is not finite" % name)
            value.setflags(write=False)
            frozen[name] = value
        object.__setattr__(self, 'weights', MappingProxyType(frozen))

    def __getitem__(self, name):
        return self.weights[name]

    def flatten(self):
        return np.concatenate([self.weights[n].ravel() for n in PARAM_ORDER])

    @classmethod
    def from_flat(cls, arch, vector):
        vector = np.asarray(vector, dtype=np.float64)
        if vector.size != arch.size:
            raise InvalidArgument("Expected %d weights, got %d"
                                  % (arch.size, vector.size))
        weights, offset = {}, 0
        for name in PARAM_ORDER:
            shape = arch.shapes()[name]
            count = int(np.prod(shape))
            weights[name] = vector[offset:offset + count].reshape(shape)
            offset += count
        return cls(arch, weights)

    def updated(self, steps):
        """New parameters with ``steps[name]`` added to each weight"""
        return DenoiserParams(self.arch, {
            n: self.weights[n] + steps.get(n, 0.0) for n in PARAM_ORDER})

    def rounded(self):
        """The parameters at the float32 precision of a checkpoint"""
        return DenoiserParams.from_flat(self.arch,
                                        self.flatten().astype(np.float32))


def init_params(arch, seed):
    """Scaled Gaussian initialization, zero biases"""
    rng = np.random.default_rng(seed)
    weights = {}
    for name, shape in arch.shapes().items():
        if name.startswith('b'):
            weights[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:]))
            weights[name] = rng.standard_normal(shape) / np.sqrt(fan_in)
    return DenoiserParams(arch, weights).rounded()


def _windows(x):
    padded = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    return sliding_window_view(padded, (3, 3), axis=(1, 2))


def _conv(w, cols):
    return np.einsum('oikl,ihwkl->ohw', w, cols, optimize=True)


def _conv_transpose(w, grad):
    cols = _windows(grad)
    return np.einsum('oikl,ohwkl->ihw', w[:, :, ::-1, ::-1], cols,
                     optimize=True)


def _silu(a):
    return a * expit(a)


def _silu_grad(a):
    s = expit(a)
    return s * (1.0 + a * (1.0 - s))


def _embedding(arch, t, p):
    e = embed(t, p, arch.emb_dim)
    if not arch.position_encoding:
        e[arch.emb_dim // 2:] = 0.0
    return e


def _forward(params, x, t, p):
    w = params.weights
    e = _embedding(params.arch, t, p)
    cols1 = _windows(x)
    a1 = _conv(w['w1'], cols1) + (w['b1'] + w['we'] @ e)[:, None, None]
    z1 = _silu(a1)
    cols2 = _windows(z1)
    a2 = _conv(w['w2'], cols2) + w['b2'][:, None, None]
    z2 = _silu(a2)
    cols3 = _windows(z2)
    out = _conv(w['w3'], cols3) + w['b3'][:, None, None]
    cache = (e, cols1, a1, cols2, a2, cols3)
    return out, cache


def _backward(params, cache, grad_out):
    w = params.weights
    e, cols1, a1, cols2, a2, cols3 = cache
    grads = {
        'w3': np.einsum('ohw,ihwkl->oikl', grad_out, cols3, optimize=True),
        'b3': grad_out.sum(axis=(1, 2)),
    }
    da2 = _conv_transpose(w['w3'], grad_out) * _silu_grad(a2)
    grads['w2'] = np.einsum('ohw,ihwkl->oikl', da2, cols2, optimize=True)
    grads['b2'] = da2.sum(axis=(1, 2))
    da1 = _conv_transpose(w['w2'], da2) * _silu_grad(a1)
    grads['w1'] = np.einsum('ohw,ihwkl->oikl', da1, cols1, optimize=True)
    grads['b1'] = da1.sum(axis=(1, 2))
    grads['we'] = np.outer(grads['b1'], e)
    return grads


def _check_input(params, patch):
    patch = np.asarray(patch, dtype=np.float64)
    if patch.ndim != 3 or patch.shape[0] != params.arch.in_channels:
        raise InvalidArgument("Network expects %d input slices, got shape %s"
                              % (params.arch.in_channels, patch.shape))
    return patch


def denoiser_eval(params, req, sched=None):
    """Predicted noise for the request: k slices (joint) or the centre"""
    patch = _check_input(params, req.patch)
    out, _ = _forward(params, patch, req.t, req.spacing)
    return out


def denoiser_grad(params, req, target, sched, weight=1.0):
    """
    Loss ``weight * |(D - target) / sigma_t^2|^2`` and its gradient for
    every weight, where ``D = sigma_t * eps_hat`` and ``target`` is the
    noise residual ``x_t - sqrt(alpha_bar_t) x``.
    """
    patch = _check_input(params, req.patch)
    out, cache = _forward(params, patch, req.t, req.spacing)
    target = np.asarray(target, dtype=np.float64)
    if target.shape != out.shape:
        raise InvalidArgument("Target shape %s does not match output %s"
                              % (target.shape, out.shape))
    sigma = sched.sigma[req.t]
    scaled = out / sigma - target / sigma ** 2
    loss = weight * float(np.sum(scaled ** 2))
    if not np.isfinite(loss):
        raise NumericFailure("Non-finite denoising loss")
    grads = _backward(params, cache, weight * 2.0 * scaled / sigma)
    return loss, grads
