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

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from diffblend import ctoperator
from diffblend.ctoperator import Sinogram, ViewGeometry, \
    add_measurement_noise, backproject, default_n_det, fbp, make_geometry, \
    project
from diffblend.errors import InputMismatch, InvalidArgument
from diffblend.metrics import psnr
from diffblend.phantom import EllipseSpec, PhantomSpec, make_phantom
from diffblend.volume import Volume3D


def _disk(size, radius, depth=1):
    spec = PhantomSpec(width=size, height=size, depth=depth, ellipses=(
        EllipseSpec(a=2.0 * radius / size, b=2.0 * radius / size,
                    intensity=1.0),))
    return make_phantom(spec)


def test_make_geometry_sparse_angles():
    g = make_geometry("sparse", 4, 10)
    assert_allclose(g.angles, [0, math.pi / 4, math.pi / 2, 3 * math.pi / 4])
    assert make_geometry("sparse", 1, 10).angles == (0.0,)


def test_make_geometry_limited_angles():
    g = make_geometry("limited", 90, 10)
    assert max(g.angles) < math.pi / 2
    assert g.n_views == 90


def test_make_geometry_rejects_no_views():
    with pytest.raises(InvalidArgument):
        make_geometry("sparse", 0, 10)
    with pytest.raises(InvalidArgument):
        make_geometry("helical", 4, 10)


def test_geometry_invariants():
    with pytest.raises(InvalidArgument):
        ViewGeometry((0.0, 0.0), 4)
    with pytest.raises(InvalidArgument):
        ViewGeometry((math.pi,), 4)
    with pytest.raises(InvalidArgument):
        ViewGeometry((0.0,), 4, det_spacing=0.0)


def test_default_detector_covers_diagonal_with_width_parity():
    n = default_n_det(64, 64)
    assert n >= math.hypot(64, 64)
    assert (n - 64) % 2 == 0


def test_zero_volume_projects_to_zero():
    g = make_geometry("sparse", 6, 24)
    s = project(Volume3D.zeros(16, 16, 2), g)
    assert isinstance(s, Sinogram)
    assert s.shape == (2, 6, 24)
    assert not np.any(s.data)


def test_disk_profile_matches_chord_length():
    size, radius = 64, 20.0
    g = make_geometry("sparse", 5, default_n_det(size, size))
    s = project(_disk(size, radius), g).data[0]
    bins = np.arange(g.n_det) - (g.n_det - 1) / 2.0
    chord = 2.0 * np.sqrt(np.maximum(radius ** 2 - bins ** 2, 0.0))
    assert np.max(np.abs(s - chord[None, :])) <= 2.0


def test_impulse_at_angle_zero_hits_one_bin():
    size = 16
    g = make_geometry("sparse", 1, default_n_det(size, size))
    v = np.zeros((1, size, size))
    v[0, 5, 11] = 1.0
    row = project(Volume3D(v), g).data[0, 0]
    expected = int(11 - (size - 1) / 2.0 + (g.n_det - 1) / 2.0)
    assert np.argmax(row) == expected
    assert row[expected] == pytest.approx(1.0)


def test_projection_is_linear_and_slice_independent(rng):
    g = make_geometry("sparse", 7, 26)
    u = rng.uniform(size=(3, 16, 16))
    w = rng.uniform(size=(3, 16, 16))
    combined = ctoperator.forward(2.0 * u - 0.5 * w, g)
    assert_allclose(combined, 2.0 * ctoperator.forward(u, g)
                    - 0.5 * ctoperator.forward(w, g), rtol=1e-6, atol=1e-9)
    per_slice = np.concatenate([ctoperator.forward(u[z:z + 1], g)
                                for z in range(3)])
    assert_allclose(ctoperator.forward(u, g), per_slice, rtol=1e-12)


@pytest.mark.parametrize("views", [8, 45, 180])
def test_adjoint_dot_product(rng, views):
    size = 64
    g = make_geometry("sparse", views, default_n_det(size, size))
    for _ in range(5):
        x = rng.standard_normal((1, size, size))
        y = rng.standard_normal((1, views, g.n_det))
        lhs = np.vdot(ctoperator.forward(x, g), y)
        rhs = np.vdot(x, ctoperator.adjoint(y, g, size, size))
        assert abs(lhs - rhs) / (abs(lhs) + 1e-12) <= 1e-5


def test_backproject_zero_and_stripe():
    size = 16
    g = make_geometry("sparse", 1, default_n_det(size, size))
    zero = backproject(Sinogram(np.zeros((1, 1, g.n_det))), g, size, size)
    assert not np.any(zero.data)
    s = np.zeros((1, 1, g.n_det))
    column = 4
    s[0, 0, int(column - (size - 1) / 2.0 + (g.n_det - 1) / 2.0)] = 1.0
    image = backproject(Sinogram(s), g, size, size).data[0]
    assert_allclose(image[:, column], 1.0)
    assert np.count_nonzero(image) == size


def test_backproject_rejects_mismatched_sinogram():
    g = make_geometry("sparse", 4, 10)
    with pytest.raises(InputMismatch) as e:
        backproject(Sinogram(np.zeros((1, 3, 10))), g, 8, 8)
    assert e.value.differences == [("n_views", 4, 3)]


def test_fbp_full_scan_of_disk():
    size = 64
    disk = _disk(size, 20.0)
    g = make_geometry("sparse", 180, default_n_det(size, size))
    recon = fbp(project(disk, g), g, size, size)
    assert psnr(recon, disk) >= 25.0


def test_fbp_few_views_is_worse():
    size = 64
    disk = _disk(size, 20.0)
    full = make_geometry("sparse", 180, default_n_det(size, size))
    few = make_geometry("sparse", 4, default_n_det(size, size))
    assert psnr(fbp(project(disk, few), few, size, size), disk) \
        < psnr(fbp(project(disk, full), full, size, size), disk)


def test_fbp_of_zero_is_zero():
    g = make_geometry("sparse", 8, 24)
    out = fbp(Sinogram(np.zeros((2, 8, 24))), g, 16, 16)
    assert_array_equal(out.data, 0.0)


def test_measurement_noise():
    g = make_geometry("sparse", 4, 12)
    s = project(Volume3D.zeros(8, 8, 1), g)
    assert add_measurement_noise(s, 0.0, np.random.default_rng(0)) is s
    noisy = add_measurement_noise(s, 0.1, np.random.default_rng(0))
    assert 0.05 < np.std(noisy.data) < 0.15
