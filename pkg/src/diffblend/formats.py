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
File formats. Every binary file is one ASCII header line followed by
little-endian float32 values:

  BVOL1 <width> <height> <depth>            volume, z-outermost row-major
  BSIN1 <depth> <n_views> <n_det>           sinogram
  BCKPT1 <in> <out> <hidden> <emb> <pe> <n> denoiser weights

A sinogram's geometry is kept next to it as a text block of ``key=value``
lines, one ``angle=`` line per view.
"""
import hashlib
import logging
import os

import numpy as np

from diffblend.ctoperator import Sinogram, ViewGeometry
from diffblend.errors import InputMismatch, InvalidArgument
from diffblend.score.denoiser import DenoiserArch, DenoiserParams
from diffblend.volume import Volume3D

__author__ = 'diffblend contributors'
__all__ = ['write_volume', 'read_volume', 'write_sinogram', 'read_sinogram',
           'write_geometry', 'read_geometry', 'geometry_path',
           'write_checkpoint', 'read_checkpoint', 'checksum']

logger = logging.getLogger(__name__)

_FLOAT = np.dtype('<f4')


def _write(path, header, data):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'wb') as f:
        f.write((" ".join(str(h) for h in header) + "\n").encode('ascii'))
        f.write(np.ascontiguousarray(data, dtype=_FLOAT).tobytes())
    logger.info("Wrote [%s]", path)


def _read(path, magic, fields):
    with open(path, 'rb') as f:
        line = f.readline()
        blob = f.read()
    try:
        parts = line.decode('ascii').split()
    except UnicodeDecodeError:
        parts = []
    if not parts or parts[0] != magic:
        raise InvalidArgument("[%s] is not a %s file" % (path, magic))
    if len(parts) != fields + 1:
        raise InvalidArgument("[%s] has a malformed %s header"
                              % (path, magic))
    try:
        header = [int(p) for p in parts[1:]]
    except ValueError:
        raise InvalidArgument("[%s] has a malformed %s header"
                              % (path, magic))
    return header, blob


def _floats(path, blob, count):
    if len(blob) != count * _FLOAT.itemsize:
        raise InvalidArgument("[%s] holds %d bytes of data, expected %d"
                              % (path, len(blob), count * _FLOAT.itemsize))
    return np.frombuffer(blob, dtype=_FLOAT)


def write_volume(path, v):
    if not isinstance(v, Volume3D):
        v = Volume3D(v)
    _write(path, ("BVOL1", v.width, v.height, v.depth), v.data)


def read_volume(path):
    (width, height, depth), blob = _read(path, "BVOL1", 3)
    data = _floats(path, blob, width * height * depth)
    return Volume3D(data.reshape(depth, height, width))


def geometry_path(path):
    """Geometry sidecar of a sinogram file"""
    return path + ".geom"


def write_geometry(path, g, width=None, height=None):
    lines = ["n_det=%d" % g.n_det, "det_spacing=%r" % g.det_spacing]
    if width is not None and height is not None:
        lines += ["width=%d" % width, "height=%d" % height]
    lines += ["angle=%r" % a for a in g.angles]
    with open(path, 'w') as f:
        f.write("\n".join(lines) + "\n")


def read_geometry(path):
    """The geometry plus the image (width, height) if recorded"""
    angles, values = [], {}
    with open(path, 'r') as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            key, sep, value = line.partition('=')
            if not sep:
                raise InvalidArgument("[%s]: malformed geometry line [%s]"
                                      % (path, line))
            if key == "angle":
                angles.append(float(value))
            elif key in ("n_det", "width", "height"):
                values[key] = int(value)
            elif key == "det_spacing":
                values[key] = float(value)
            else:
                raise InvalidArgument("[%s]: unknown geometry key [%s]"
                                      % (path, key))
    if "n_det" not in values:
        raise InvalidArgument("[%s]: geometry has no n_det" % path)
    g = ViewGeometry(tuple(angles), values["n_det"],
                     values.get("det_spacing", 1.0))
    return g, values.get("width"), values.get("height")


def write_sinogram(path, s, g=None, width=None, height=None):
    """BSIN1 data plus, when ``g`` is given, its geometry sidecar"""
    if not isinstance(s, Sinogram):
        s = Sinogram(s)
    _write(path, ("BSIN1",) + s.shape, s.data)
    if g is not None:
        write_geometry(geometry_path(path), g, width, height)


def read_sinogram(path):
    (depth, n_views, n_det), blob = _read(path, "BSIN1", 3)
    data = _floats(path, blob, depth * n_views * n_det)
    return Sinogram(data.reshape(depth, n_views, n_det))


def write_checkpoint(path, params):
    arch = params.arch
    flat = params.flatten()
    _write(path, ("BCKPT1", arch.in_channels, arch.out_channels,
                  arch.hidden, arch.emb_dim, int(arch.position_encoding),
                  flat.size), flat)


def read_checkpoint(path, expected=None):
    """
    Load a checkpoint; ``expected`` (a DenoiserArch) turns an architecture
    difference into an InputMismatch.
    """
    header, blob = _read(path, "BCKPT1", 6)
    in_channels, out_channels, hidden, emb_dim, pe, count = header
    arch = DenoiserArch(in_channels, out_channels, hidden, emb_dim, bool(pe))
    if expected is not None and arch != expected:
        differences = [(name, getattr(expected, name), getattr(arch, name))
                       for name in ("in_channels", "out_channels", "hidden",
                                    "emb_dim", "position_encoding")
                       if getattr(expected, name) != getattr(arch, name)]
        raise InputMismatch("checkpoint architecture", differences)
    if count != arch.size:
        raise InvalidArgument("[%s] declares %d weights, the architecture "
                              "needs %d" % (path, count, arch.size))
    data = _floats(path, blob, count)
    return DenoiserParams.from_flat(arch, data.astype(np.float64))


def checksum(path):
    """SHA-256 of a file's bytes"""
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 16), b''):
            digest.update(chunk)
    return digest.hexdigest()
