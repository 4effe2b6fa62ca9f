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

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from diffblend import ctoperator
from diffblend.errors import InvalidArgument, NumericFailure
from diffblend.krylov import LinearOperator, cg, cg_solve, normal_operator
from diffblend.metrics import psnr
from diffblend.phantom import PhantomSpec, make_phantom


def _dense(matrix):
    return LinearOperator(lambda v: matrix @ v, "dense")


def test_identity_one_step_is_exact(rng):
    rhs = rng.standard_normal(7)
    x = cg(LinearOperator(lambda v: v, "I"), rhs, np.zeros(7), 1)
    assert_array_equal(x, rhs)


def test_diagonal_system():
    x = cg(_dense(np.diag([1.0, 2.0, 4.0])), np.array([1.0, 2.0, 4.0]),
           np.zeros(3), 3)
    assert_allclose(x, [1.0, 1.0, 1.0], rtol=1e-12)


def test_zero_iterations_return_init(rng):
    init = rng.standard_normal(4)
    result = cg_solve(_dense(np.eye(4)), np.ones(4), init, 0)
    assert_array_equal(result.x, init)
    assert result.iterations == 0


def test_shape_and_count_checks():
    with pytest.raises(InvalidArgument):
        cg(_dense(np.eye(3)), np.ones(3), np.zeros(4), 2)
    with pytest.raises(InvalidArgument):
        cg(_dense(np.eye(3)), np.ones(3), np.zeros(3), -1)


@pytest.mark.parametrize("n", [2, 8, 32, 64])
def test_finite_termination(rng, n):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    matrix = (q * rng.uniform(1.0, 4.0, n)) @ q.T
    rhs = rng.standard_normal(n)
    x = cg(_dense(matrix), rhs, np.zeros(n), n)
    assert np.linalg.norm(rhs - matrix @ x) <= 1e-8 * np.linalg.norm(rhs)


def test_early_exit_on_converged_residual():
    result = cg_solve(_dense(np.eye(5)), np.ones(5), np.ones(5), 10)
    assert result.iterations == 0
    assert_array_equal(result.x, np.ones(5))


def test_breakdown_keeps_iterate(rng):
    init = rng.standard_normal(3)
    result = cg_solve(_dense(np.zeros((3, 3))), np.ones(3), init, 3)
    assert result.breakdown
    assert_array_equal(result.x, init)


def test_non_finite_operator_fails():
    bad = LinearOperator(lambda v: v * np.nan, "nan")
    with pytest.raises(NumericFailure) as e:
        cg(bad, np.ones(3), np.zeros(3), 2)
    assert e.value.iteration == 0


def test_normal_operator_is_symmetric(rng):
    g = ctoperator.make_geometry("sparse", 8, 24)
    op = normal_operator(g)
    assert op.symmetry_error((2, 16, 16), rng) <= 1e-5


def test_data_residual_decreases_on_sparse_views(rng):
    g = ctoperator.make_geometry("sparse", 6, 24)
    truth = rng.uniform(size=(1, 16, 16))
    y = ctoperator.forward(truth, g)
    rhs = ctoperator.adjoint(y, g, 16, 16)
    op = normal_operator(g)
    init = rng.uniform(size=truth.shape)
    residuals = [np.linalg.norm(ctoperator.forward(
        cg(op, rhs, init, m), g) - y) for m in range(12)]
    for before, after in zip(residuals, residuals[1:]):
        assert after <= before * (1.0 + 1e-9)


def test_full_view_recovery():
    truth = make_phantom(PhantomSpec(width=32, height=32, depth=4, seed=2))
    g = ctoperator.make_geometry(
        "sparse", 180, ctoperator.default_n_det(32, 32))
    y = ctoperator.forward(truth, g)
    x = cg(normal_operator(g), ctoperator.adjoint(y, g, 32, 32),
           np.zeros(truth.shape), 500)
    assert psnr(x, truth) >= 35.0
