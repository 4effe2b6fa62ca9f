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
Partitions of the slice axis into k-slice patches and assembly of the
full-volume score from patch scores.

Two partition kinds are used:

  * adjacency - runs of k consecutive slices, shifted by an offset m so
    that patch borders move between steps. Runs that stick out of the
    volume are completed by repeating the boundary slice.
  * cross - within every block of k^2 slices, the k slices with stride k
    ({0, 3, 6}, {1, 4, 7}, {2, 5, 8} for k = 3), joining slices that sit
    on adjacency borders.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import logging

import numpy as np

from diffblend.errors import BackendError, DiffBlendError, InvalidArgument
from diffblend.score import PatchScoreRequest
from diffblend.volume import SliceSet

__author__ = 'diffblend contributors'
__all__ = ['Partition', 'PartitionSchedule', 'adjacency_partition',
           'cross_partition', 'sample_partition', 'partition_family',
           'blended_score', 'conditional_blended_score', 'conditional_window']

logger = logging.getLogger(__name__)

ADJACENCY = "adjacency"
CROSS = "cross"


@dataclass(frozen=True)
class Partition:
    patches: tuple
    kind: str
    k: int
    depth: int
    offset: int = 0

    def __post_init__(self):
        seen = set()
        for patch in self.patches:
            if patch.size != self.k:
                raise InvalidArgument("Patch %s does not hold %d slices"
                                      % (patch, self.k))
            overlap = seen.intersection(patch.indices)
            if overlap:
                raise InvalidArgument("Slices %s appear in two patches"
                                      % sorted(overlap))
            seen.update(patch.indices)
        if seen != set(range(self.depth)):
            missing = sorted(set(range(self.depth)) - seen)
            raise InvalidArgument("Partition misses slices %s" % missing)

    def __len__(self):
        return len(self.patches)

    def __iter__(self):
        return iter(self.patches)


def _padded_set(indices, spacing, depth):
    inside = [i for i in indices if 0 <= i < depth]
    if not inside:
        return None
    return SliceSet(tuple(inside), spacing,
                    pad_before=sum(1 for i in indices if i < 0),
                    pad_after=sum(1 for i in indices if i >= depth))


def adjacency_partition(depth, k, m):
    """Runs of k consecutive slices, the first run ending at offset m"""
    if depth < 1 or k < 1:
        raise InvalidArgument("Depth and k must be positive")
    if not 0 <= m < k:
        raise InvalidArgument("Offset %d outside [0, %d)" % (m, k))
    patches = []
    for start in range(m - k if m > 0 else 0, depth, k):
        patches.append(_padded_set(range(start, start + k), 1, depth))
    return Partition(tuple(patches), ADJACENCY, k, depth, m)


def cross_partition(depth, k, block_offset=0):
    """
    Stride-k patches inside consecutive blocks of k^2 slices.

    Blocks start at ``block_offset - k^2``, ``block_offset``, ... With a
    non-zero offset the partial first and last blocks are completed by
    boundary repeats.
    """
    if depth < 1 or k < 1:
        raise InvalidArgument("Depth and k must be positive")
    block = k * k
    if not 0 <= block_offset < block:
        raise InvalidArgument("Block offset %d outside [0, %d)"
                              % (block_offset, block))
    if block_offset == 0 and depth % block:
        raise DiffBlendError("Depth %d is not padded to a multiple of %d"
                             % (depth, block))
    patches = []
    first = block_offset - block if block_offset else 0
    for start in range(first, depth, block):
        for r in range(k):
            indices = range(start + r, start + r + block, k)
            patch = _padded_set(indices, k, depth)
            if patch is not None:
                patches.append(patch)
    return Partition(tuple(patches), CROSS, k, depth, block_offset)


@dataclass(frozen=True)
class PartitionSchedule:
    """
    Which partition each reconstruction step uses.

    ``mode`` is "blend" (cross every ``cross_frequency`` steps, random
    adjacency offsets otherwise), "adjacency" (random offsets only) or
    "fixed" (offset 0 every step).
    """
    cross_frequency: int = 2
    seed: int = 0
    mode: str = "blend"

    def __post_init__(self):
        if self.cross_frequency < 1:
            raise InvalidArgument("Cross frequency must be >= 1")
        if self.mode not in ("blend", "adjacency", "fixed"):
            raise InvalidArgument("Unknown partition mode [%s]" % self.mode)


def sample_partition(schedule, depth, k, iteration, rng=None):
    """The partition for ``iteration``; reproducible from (seed, iteration)"""
    if schedule.mode == "fixed":
        return adjacency_partition(depth, k, 0)
    if schedule.mode == "blend" and iteration % schedule.cross_frequency == 0:
        return cross_partition(depth, k)
    if rng is None:
        rng = np.random.default_rng([schedule.seed, iteration])
    return adjacency_partition(depth, k, int(rng.integers(k)))


def partition_family(depth, k, cross=True):
    """Every adjacency offset plus, optionally, the cross partition"""
    family = [adjacency_partition(depth, k, m) for m in range(k)]
    if cross:
        family.append(cross_partition(depth, k))
    return family


def _evaluate(backend, req, sched, slice_set, iteration):
    try:
        return backend.patch_score(req, sched)
    except DiffBlendError as e:
        raise BackendError(str(e), slice_set, iteration) from e
    except (ValueError, FloatingPointError, np.linalg.LinAlgError) as e:
        raise BackendError("%s: %s" % (type(e).__name__, e), slice_set,
                           iteration) from e


def _map(fn, items, threads):
    if threads and threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def blended_score(backend, x_t, t, partition, sched, threads=1,
                  iteration=None):
    """
    Full-volume score assembled from the patch scores of one partition.

    Positions of a padded patch that repeat a slice are averaged; patches
    are disjoint, so every slice receives exactly one patch's estimate.
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.shape[0] != partition.depth:
        raise InvalidArgument("Partition covers %d slices, volume has %d"
                              % (partition.depth, x_t.shape[0]))

    def evaluate(slice_set):
        indices = slice_set.gather()
        req = PatchScoreRequest(x_t[list(indices)], t, indices,
                                slice_set.spacing)
        return _evaluate(backend, req, sched, slice_set, iteration)

    scores = _map(evaluate, list(partition.patches), threads)
    out = np.empty_like(x_t)
    for slice_set, score in zip(partition.patches, scores):
        if slice_set.padded:
            positions = {}
            for position, index in enumerate(slice_set.gather()):
                positions.setdefault(index, []).append(position)
            for index, rows in positions.items():
                out[index] = score[rows].mean(axis=0)
        else:
            out[list(slice_set.indices)] = score
    return out


def conditional_window(depth, i, j):
    """Slice indices i-j ... i+j, repetition-padded at the boundaries"""
    return tuple(min(max(n, 0), depth - 1) for n in range(i - j, i + j + 1))


def conditional_blended_score(backend, x_t, t, j, sched, threads=1,
                              iteration=None):
    """Per-slice scores of each slice given its j neighbours on both sides"""
    x_t = np.asarray(x_t, dtype=np.float64)
    depth = x_t.shape[0]

    def evaluate(i):
        indices = conditional_window(depth, i, j)
        req = PatchScoreRequest(x_t[list(indices)], t, indices, 1,
                                mode="conditional", j=j)
        return _evaluate(backend, req, sched, SliceSet((i,)), iteration)

    return np.stack(_map(evaluate, list(range(depth)), threads))


