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
Volumetric data types and slice indexing.

A volume is stored z-outermost: ``data[z, y, x]`` with shape
``(depth, height, width)``. Slice indices are 0-based throughout.
"""
from dataclasses import dataclass

import logging

import numpy as np

from diffblend.errors import InvalidArgument

__author__ = 'diffblend contributors'
__all__ = ['Volume3D', 'SliceSet', 'pad_counts', 'pad_repeat', 'crop_depth',
           'extract_patch', 'scatter_patch']

logger = logging.getLogger(__name__)


class Volume3D():
    """Immutable W x H x D grid of scalar intensities"""

    __slots__ = ('_data',)

    def __init__(self, data):
        array = np.array(data, dtype=np.float32)
        if array.ndim == 2:
            array = array[np.newaxis]
        if array.ndim != 3 or min(array.shape) < 1:
            raise InvalidArgument("Volume needs shape (depth, height, width)"
                                  ", got %s" % (array.shape,))
        if not np.all(np.isfinite(array)):
            raise InvalidArgument("Volume contains non-finite values")
        array.setflags(write=False)
        self._data = array

    @classmethod
    def zeros(cls, width, height, depth):
        return cls(np.zeros((depth, height, width), dtype=np.float32))

    @property
    def data(self):
        """Read-only float32 array of shape (depth, height, width)"""
        return self._data

    @property
    def width(self):
        return self._data.shape[2]

    @property
    def height(self):
        return self._data.shape[1]

    @property
    def depth(self):
        return self._data.shape[0]

    @property
    def shape(self):
        return self._data.shape

    def __array__(self, dtype=None, copy=None):
        if dtype is not None and np.dtype(dtype) != self._data.dtype:
            if copy is False:
                raise ValueError("Converting to %s needs a copy"
                                 % np.dtype(dtype))
            return self._data.astype(dtype)
        if copy:
            return self._data.copy()
        return self._data

    def __eq__(self, other):
        if not isinstance(other, Volume3D):
            return NotImplemented
        return np.array_equal(self._data, other._data)

    __hash__ = None

    def __repr__(self):
        return "Volume3D(width=%d, height=%d, depth=%d)" % (
            self.width, self.height, self.depth)


@dataclass(frozen=True)
class SliceSet:
    """
    Evenly spaced slice indices with optional repetition padding.

    ``indices`` are distinct, strictly increasing and spaced by
    ``spacing``. ``pad_before``/``pad_after`` count repeats of the first
    and last index that complete a partial patch to its full size; the
    repeats stand for the repetition-padded slices above and below the
    volume.
    """
    indices: tuple
    spacing: int = 1
    pad_before: int = 0
    pad_after: int = 0

    def __post_init__(self):
        indices = tuple(int(i) for i in self.indices)
        object.__setattr__(self, 'indices', indices)
        if not indices:
            raise InvalidArgument("SliceSet needs at least one index")
        if self.spacing < 1:
            raise InvalidArgument("Spacing must be positive, got %d"
                                  % self.spacing)
        if self.pad_before < 0 or self.pad_after < 0:
            raise InvalidArgument("Padding counts must be non-negative")
        if indices[0] < 0:
            raise InvalidArgument("Negative slice index %d" % indices[0])
        steps = np.diff(indices)
        if np.any(steps != self.spacing):
            raise InvalidArgument("Indices %s are not spaced by %d"
                                  % (indices, self.spacing))

    @property
    def size(self):
        """Number of slices presented to the score model"""
        return len(self.indices) + self.pad_before + self.pad_after

    @property
    def padded(self):
        return self.pad_before > 0 or self.pad_after > 0

    def gather(self):
        """Index tuple of length ``size`` with boundary repeats"""
        return ((self.indices[0],) * self.pad_before + self.indices
                + (self.indices[-1],) * self.pad_after)

    def __str__(self):
        return "{%s}" % ",".join(str(i) for i in self.gather())


def pad_counts(depth, target_depth):
    """Slices added above and below when padding to ``target_depth``"""
    if target_depth < depth:
        raise InvalidArgument("Target depth %d is below depth %d"
                              % (target_depth, depth))
    extra = target_depth - depth
    above = extra // 2
    return above, extra - above


def pad_repeat(v, target_depth):
    """Repetition-pad along z; the odd extra slice goes below"""
    data = np.asarray(v)
    above, below = pad_counts(data.shape[0], target_depth)
    if above == 0 and below == 0:
        return v if isinstance(v, Volume3D) else Volume3D(data)
    padded = np.concatenate([np.repeat(data[:1], above, axis=0), data,
                             np.repeat(data[-1:], below, axis=0)])
    return Volume3D(padded)


def crop_depth(v, above, below):
    """Remove ``above`` leading and ``below`` trailing slices"""
    data = np.asarray(v)
    stop = data.shape[0] - below
    if above < 0 or below < 0 or stop <= above:
        raise InvalidArgument("Cannot crop %d+%d slices from depth %d"
                              % (above, below, data.shape[0]))
    return Volume3D(data[above:stop])


def _check_indices(indices, depth):
    bad = [i for i in indices if not 0 <= i < depth]
    if bad:
        raise InvalidArgument("Slice indices %s out of range for depth %d"
                              % (bad, depth))


def extract_patch(v, s):
    """The slices of ``s`` (with padding repeats) stacked in order"""
    data = np.asarray(v)
    indices = s.gather() if isinstance(s, SliceSet) else tuple(s)
    _check_indices(indices, data.shape[0])
    return data[list(indices)].copy()


def scatter_patch(v, s, patch):
    """
    Replace the slices of ``s`` with ``patch``.

    Positions of a padded SliceSet that map to the same index are
    averaged; every other slice of ``v`` is left unchanged.
    """
    data = np.asarray(v).copy()
    indices = s.gather() if isinstance(s, SliceSet) else tuple(s)
    patch = np.asarray(patch)
    if patch.shape != (len(indices),) + data.shape[1:]:
        raise InvalidArgument("Patch shape %s does not fit %d slices of %s"
                              % (patch.shape, len(indices), data.shape[1:]))
    _check_indices(indices, data.shape[0])
    merged = {}
    for position, index in enumerate(indices):
        merged.setdefault(index, []).append(position)
    for index, positions in merged.items():
        if len(positions) == 1:
            data[index] = patch[positions[0]]
        else:
            data[index] = patch[positions].mean(axis=0)
    return Volume3D(data)
