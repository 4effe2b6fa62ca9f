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
Synthetic phantoms: stacked anti-aliased ellipses whose centre, axes and
intensity drift smoothly along z, so neighbouring slices are correlated.
"""
from dataclasses import dataclass, field, fields, replace

import logging

import numpy as np
import yaml

from diffblend.errors import ConfigError, InvalidArgument
from diffblend.volume import Volume3D

__author__ = 'diffblend contributors'
__all__ = ['EllipseSpec', 'PhantomSpec', 'make_phantom', 'load_phantom_spec',
           'phantom_family', 'family_spec']

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EllipseSpec:
    """
    One ellipse in normalized coordinates ([-1, 1] across the image).

    Each drifting parameter is ``base + amplitude * sin(2 pi z / depth +
    phase)``, evaluated at the slice position.
    """
    cx: float = 0.0
    cy: float = 0.0
    a: float = 0.5
    b: float = 0.5
    angle: float = 0.0
    intensity: float = 1.0
    drift_x: float = 0.0
    drift_y: float = 0.0
    drift_axes: float = 0.0
    drift_intensity: float = 0.0
    phase: float = 0.0

    def at(self, z, depth):
        w = np.sin(2.0 * np.pi * z / max(depth, 1) + self.phase)
        scale = 1.0 + self.drift_axes * w
        return (self.cx + self.drift_x * w, self.cy + self.drift_y * w,
                self.a * scale, self.b * scale,
                self.intensity * (1.0 + self.drift_intensity * w))


@dataclass(frozen=True)
class PhantomSpec:
    width: int = 32
    height: int = 32
    depth: int = 18
    ellipse_count: int = 6
    z_variation: float = 0.15
    seed: int = 0
    jitter: float = 0.0
    variant: int = 0
    ellipses: tuple = field(default=None)

    def __post_init__(self):
        if min(self.width, self.height, self.depth) < 1:
            raise InvalidArgument("Phantom dimensions must be positive")
        if self.ellipse_count < 0:
            raise InvalidArgument("Ellipse count must be non-negative")
        if self.jitter < 0:
            raise InvalidArgument("Phantom jitter must be non-negative")

    def resolved_ellipses(self):
        """
        Explicit ellipses, or ones drawn from the seed. A positive jitter
        perturbs them per variant, so variants of one seed share an
        anatomy.
        """
        if self.ellipses is not None:
            ellipses = tuple(self.ellipses)
        else:
            ellipses = _random_ellipses(self.ellipse_count,
                                        self.z_variation, self.seed)
        if self.jitter > 0:
            ellipses = _jitter_ellipses(ellipses, self.jitter, self.seed,
                                        self.variant)
        return ellipses


def _random_ellipses(count, z_variation, seed):
    rng = np.random.default_rng(seed)
    ellipses = []
    for n in range(count):
        if n == 0:
            # Body outline holding the other structures
            ellipses.append(EllipseSpec(
                cx=0.0, cy=0.0, a=rng.uniform(0.75, 0.9),
                b=rng.uniform(0.6, 0.8), angle=rng.uniform(-0.2, 0.2),
                intensity=rng.uniform(0.3, 0.4),
                drift_axes=0.3 * z_variation, phase=rng.uniform(0, 2 * np.pi)))
            continue
        r = rng.uniform(0.0, 0.45)
        theta = rng.uniform(0, 2 * np.pi)
        ellipses.append(EllipseSpec(
            cx=r * np.cos(theta), cy=r * np.sin(theta),
            a=rng.uniform(0.08, 0.3), b=rng.uniform(0.08, 0.3),
            angle=rng.uniform(0, np.pi),
            intensity=rng.uniform(-0.15, 0.45),
            drift_x=z_variation * rng.uniform(-0.5, 0.5),
            drift_y=z_variation * rng.uniform(-0.5, 0.5),
            drift_axes=z_variation * rng.uniform(0.0, 1.0),
            drift_intensity=z_variation * rng.uniform(0.0, 1.0),
            phase=rng.uniform(0, 2 * np.pi)))
    return tuple(ellipses)


def _jitter_ellipses(ellipses, jitter, seed, variant):
    rng = np.random.default_rng([seed, variant])
    jittered = []
    for e in ellipses:
        u = rng.uniform(-1.0, 1.0, size=6)
        jittered.append(replace(
            e, cx=e.cx + 0.1 * jitter * u[0], cy=e.cy + 0.1 * jitter * u[1],
            a=e.a * (1.0 + 0.25 * jitter * u[2]),
            b=e.b * (1.0 + 0.25 * jitter * u[3]),
            intensity=e.intensity * (1.0 + 0.25 * jitter * u[4]),
            phase=e.phase + np.pi * jitter * u[5]))
    return tuple(jittered)


def _ellipse_slice(ellipse, z, depth, xx, yy, pixel):
    cx, cy, a, b, intensity = ellipse.at(z, depth)
    if a <= 0 or b <= 0:
        return 0.0
    c, s = np.cos(ellipse.angle), np.sin(ellipse.angle)
    u = (xx - cx) * c + (yy - cy) * s
    v = -(xx - cx) * s + (yy - cy) * c
    rho = np.sqrt((u / a) ** 2 + (v / b) ** 2)
    # Signed distance to the outline in pixels, one-pixel linear ramp
    distance = (rho - 1.0) * min(a, b) / pixel
    return intensity * np.clip(0.5 - distance, 0.0, 1.0)


def make_phantom(spec):
    """Deterministic phantom volume for ``spec``, clamped to [0, 1]"""
    pixel = 2.0 / max(spec.width, spec.height)
    xs = (np.arange(spec.width) - (spec.width - 1) / 2.0) * pixel
    ys = (np.arange(spec.height) - (spec.height - 1) / 2.0) * pixel
    xx, yy = np.meshgrid(xs, ys)
    data = np.zeros((spec.depth, spec.height, spec.width))
    for ellipse in spec.resolved_ellipses():
        for z in range(spec.depth):
            data[z] += _ellipse_slice(ellipse, z, spec.depth, xx, yy, pixel)
    return Volume3D(np.clip(data, 0.0, 1.0))


def phantom_family(spec, count):
    """
    ``count`` phantoms like ``spec``: consecutive variants of its anatomy
    when it is jittered, otherwise consecutive seeds.
    """
    if spec.jitter > 0:
        return [make_phantom(replace(spec, variant=spec.variant + n))
                for n in range(count)]
    return [make_phantom(replace(spec, seed=spec.seed + n, ellipses=None))
            for n in range(count)]


def family_spec(spec, offset):
    """The spec whose family never contains the phantom of ``spec``"""
    if spec.jitter > 0:
        return replace(spec, variant=spec.variant + offset)
    return replace(spec, seed=spec.seed + offset)


def load_phantom_spec(path):
    """Read a phantom spec from a YAML mapping"""
    with open(path, 'r') as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise ConfigError(path, "Phantom spec %s is not a mapping" % path)
    known = {f.name for f in fields(PhantomSpec)}
    for key in data:
        if key not in known:
            raise ConfigError(key, "Unknown phantom spec key [%s]" % key)
    ellipses = data.pop('ellipses', None)
    if ellipses is not None:
        ellipse_keys = {f.name for f in fields(EllipseSpec)}
        parsed = []
        for entry in ellipses:
            for key in entry:
                if key not in ellipse_keys:
                    raise ConfigError(key, "Unknown ellipse key [%s]" % key)
            parsed.append(EllipseSpec(**{k: float(v)
                                         for k, v in entry.items()}))
        data['ellipses'] = tuple(parsed)
    logger.debug("Phantom spec read from [%s]", path)
    return PhantomSpec(**data)
