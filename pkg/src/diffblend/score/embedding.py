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
Sinusoidal encodings of the diffusion timestep and the relative slice
spacing.
"""
import numpy as np

from diffblend.errors import InvalidArgument

__author__ = 'diffblend contributors'
__all__ = ['sinusoidal', 'embed']

MAX_PERIOD = 10000.0


def sinusoidal(value, size, max_period=MAX_PERIOD):
    """sin/cos features of ``value`` at frequencies 1 ... 1/max_period"""
    count = (size + 1) // 2
    if count == 1:
        freqs = np.ones(1)
    else:
        freqs = np.exp(-np.log(max_period) * np.arange(count) / (count - 1))
    angles = float(value) * freqs
    return np.concatenate((np.sin(angles), np.cos(angles)))[:size]


def embed(t, p, dim):
    """Timestep encoding in the first half, spacing encoding in the second"""
    if dim < 2 or dim % 2:
        raise InvalidArgument("Embedding size must be even, got %d" % dim)
    half = dim // 2
    return np.concatenate((sinusoidal(t, half), sinusoidal(p, half)))
