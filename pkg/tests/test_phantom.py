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

from diffblend.benchmark import desk_spec_path
from diffblend.errors import ConfigError, InvalidArgument
from diffblend.phantom import EllipseSpec, PhantomSpec, family_spec, \
    load_phantom_spec, make_phantom, phantom_family


def test_phantom_is_deterministic():
    spec = PhantomSpec(width=16, height=16, depth=5, seed=3)
    assert make_phantom(spec) == make_phantom(spec)


def test_phantom_range_and_shape():
    v = make_phantom(PhantomSpec(width=20, height=12, depth=4, seed=1))
    assert v.shape == (4, 12, 20)
    assert v.data.min() >= 0.0
    assert v.data.max() <= 1.0
    assert v.data.max() > 0.0


def test_single_slice_phantom():
    v = make_phantom(PhantomSpec(width=8, height=8, depth=1))
    assert v.depth == 1


def test_explicit_ellipse_fills_interior():
    spec = PhantomSpec(width=33, height=33, depth=1,
                       ellipses=(EllipseSpec(a=0.5, b=0.5, intensity=0.7),))
    v = make_phantom(spec)
    assert v.data[0, 16, 16] == pytest.approx(0.7, abs=1e-6)
    assert v.data[0, 0, 0] == 0.0


def test_family_members_differ():
    family = phantom_family(PhantomSpec(width=16, height=16, depth=3), 3)
    assert len(family) == 3
    assert family[0] != family[1]


def test_slices_vary_smoothly_along_z():
    v = make_phantom(PhantomSpec(width=32, height=32, depth=18, seed=7))
    steps = np.abs(np.diff(v.data, axis=0)).mean()
    assert 0.0 < steps < 0.05


def test_load_bundled_desk_spec():
    spec = load_phantom_spec(desk_spec_path())
    assert (spec.width, spec.height, spec.depth) == (32, 32, 18)
    assert spec.jitter > 0


def test_unknown_spec_key_is_named(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("width: 8\nwobble: 3\n")
    with pytest.raises(ConfigError) as e:
        load_phantom_spec(str(path))
    assert e.value.key == "wobble"
    assert "wobble" in str(e.value)


def test_spec_with_ellipses(tmp_path):
    path = tmp_path / "ellipse.yaml"
    path.write_text("width: 8\nheight: 8\ndepth: 2\n"
                    "ellipses:\n  - {a: 0.4, b: 0.3, intensity: 0.5}\n")
    spec = load_phantom_spec(str(path))
    assert spec.ellipses[0].b == 0.3


def test_jitter_keeps_the_anatomy():
    spec = PhantomSpec(width=16, height=16, depth=4, seed=3)
    base = spec.resolved_ellipses()
    jittered = PhantomSpec(width=16, height=16, depth=4, seed=3,
                           jitter=0.2, variant=5).resolved_ellipses()
    assert len(jittered) == len(base)
    for e, j in zip(base, jittered):
        assert j.angle == e.angle
        assert j.drift_axes == e.drift_axes
        assert abs(j.cx - e.cx) <= 0.02
        assert abs(j.a / e.a - 1.0) <= 0.05
    assert jittered != base


def test_jittered_family_uses_variants():
    spec = PhantomSpec(width=16, height=16, depth=3, seed=3, jitter=0.2)
    family = phantom_family(spec, 3)
    assert family[0] == make_phantom(spec)
    assert family[1] == make_phantom(PhantomSpec(
        width=16, height=16, depth=3, seed=3, jitter=0.2, variant=1))
    assert family[1] != family[2]
    assert family_spec(spec, 1000).variant == 1000
    assert family_spec(spec, 1000).seed == 3
    assert family_spec(PhantomSpec(seed=3), 1000).seed == 1003
    with pytest.raises(InvalidArgument):
        PhantomSpec(jitter=-0.1)
