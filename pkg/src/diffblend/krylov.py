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
Conjugate gradient on the normal equations, used as the data-consistency
step of the reconstruction samplers.
"""
from dataclasses import dataclass

import logging

import numpy as np

from diffblend import ctoperator
from diffblend.errors import InvalidArgument, NumericFailure

__author__ = 'diffblend contributors'
__all__ = ['LinearOperator', 'CGResult', 'cg', 'cg_solve', 'normal_operator']

logger = logging.getLogger(__name__)

RESIDUAL_TOLERANCE = 1e-10


class LinearOperator():
    """Symmetric positive semi-definite map x -> Mx on arrays"""

    def __init__(self, apply, name="M"):
        self._apply = apply
        self.name = name

    def __call__(self, x):
        return self._apply(x)

    def symmetry_error(self, shape, rng, draws=3):
        """Worst relative gap between <Mx, y> and <x, My> on random draws"""
        worst = 0.0
        for _ in range(draws):
            x = rng.standard_normal(shape)
            y = rng.standard_normal(shape)
            lhs = np.vdot(self(x), y)
            rhs = np.vdot(x, self(y))
            worst = max(worst, abs(lhs - rhs) / (abs(lhs) + 1e-30))
        return worst


def normal_operator(geometry):
    """A*A for a parallel-beam geometry"""
    return LinearOperator(lambda x: ctoperator.normal(x, geometry), "A*A")


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    residual_norms: list
    breakdown: bool = False


def cg_solve(op, rhs, init, iters, tolerance=RESIDUAL_TOLERANCE):
    """
    Plain conjugate gradient started from ``init``.

    Stops after ``iters`` steps or once the residual norm drops below
    ``tolerance * (1 + |rhs|)``. Zero curvature along a search direction
    ends the run with the current iterate and ``breakdown`` set.
    """
    if iters < 0:
        raise InvalidArgument("CG iteration count must be non-negative")
    rhs = np.asarray(rhs, dtype=np.float64)
    x = np.array(init, dtype=np.float64)
    if x.shape != rhs.shape:
        raise InvalidArgument("CG init shape %s does not match rhs %s"
                              % (x.shape, rhs.shape))
    if iters == 0:
        return CGResult(x, 0, [])

    r = rhs - op(x)
    p = r.copy()
    rr = np.vdot(r, r)
    norms = [float(np.sqrt(rr))]
    threshold = tolerance * (1.0 + np.linalg.norm(rhs))
    done = 0
    for step in range(iters):
        if norms[-1] < threshold:
            break
        q = op(p)
        curvature = np.vdot(p, q)
        if not np.isfinite(curvature):
            raise NumericFailure("Non-finite CG curvature", step)
        if curvature <= 0.0:
            logger.warning("CG breakdown at step %d, keeping the current "
                           "iterate", step)
            return CGResult(x, done, norms, breakdown=True)
        alpha = rr / curvature
        x = x + alpha * p
        r = r - alpha * q
        rr_next = np.vdot(r, r)
        if not np.isfinite(rr_next):
            raise NumericFailure("Non-finite CG residual", step)
        p = r + (rr_next / rr) * p
        rr = rr_next
        norms.append(float(np.sqrt(rr)))
        done = step + 1
    return CGResult(x, done, norms)


def cg(op, rhs, init, iters):
    """The CG iterate after ``iters`` steps (or early exit)"""
    return cg_solve(op, rhs, init, iters).x
