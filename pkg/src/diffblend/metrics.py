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
Reconstruction quality: PSNR, per-plane SSIM and z-direction total
variation. Intensities follow the phantom convention of a [0, 1] range.
"""
from dataclasses import astuple, dataclass, fields

import logging
import math

import numpy as np
from skimage.metrics import structural_similarity

from diffblend.errors import InvalidArgument
from diffblend.utils.logdatawriter import write_rows

__author__ = 'diffblend contributors'
__all__ = ['psnr', 'ssim_plane', 'ztv', 'MetricReport', 'evaluate',
           'write_report', 'PLANES', 'DATA_RANGE']

logger = logging.getLogger(__name__)

DATA_RANGE = 1.0
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_WINDOW = 11
PLANES = ("axial", "sagittal", "coronal")


def _pair(x, ref):
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise InvalidArgument("Shapes %s and %s differ" % (x.shape,
                                                           ref.shape))
    if x.ndim == 2:
        x, ref = x[np.newaxis], ref[np.newaxis]
    return x, ref


def psnr(x, ref, data_range=DATA_RANGE):
    """10 log10(range^2 / MSE); identical inputs give +inf"""
    if data_range <= 0:
        raise InvalidArgument("data_range must be positive")
    x, ref = _pair(x, ref)
    mse = float(np.mean((x - ref) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(data_range ** 2 / mse)


def _slices(volume, plane):
    """2D images of one viewing plane of a (depth, height, width) volume"""
    if plane == "axial":
        return [volume[z] for z in range(volume.shape[0])]
    if plane == "sagittal":
        return [volume[:, :, i] for i in range(volume.shape[2])]
    if plane == "coronal":
        return [volume[:, i, :] for i in range(volume.shape[1])]
    raise InvalidArgument("Unknown plane [%s]" % plane)


def ssim_plane(x, ref, plane, data_range=DATA_RANGE):
    """Gaussian-window SSIM of every slice of ``plane``, averaged"""
    x, ref = _pair(x, ref)
    images = list(zip(_slices(x, plane), _slices(ref, plane)))
    if min(images[0][0].shape) < SSIM_WINDOW:
        raise InvalidArgument("%s plane %s is smaller than the %dx%d SSIM "
                              "window" % (plane, images[0][0].shape,
                                          SSIM_WINDOW, SSIM_WINDOW))
    values = [structural_similarity(a, b, data_range=data_range,
                                    gaussian_weights=True, sigma=SSIM_SIGMA,
                                    use_sample_covariance=False,
                                    K1=SSIM_K1, K2=SSIM_K2)
              for a, b in images]
    return float(np.mean(values))


def _plane_psnr(x, ref, plane, data_range):
    return float(np.mean([psnr(a, b, data_range)
                          for a, b in zip(_slices(x, plane),
                                          _slices(ref, plane))]))


def ztv(x):
    """Sum of |x[z+1] - x[z]| over all voxels, divided by W * H * D"""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] < 2:
        raise InvalidArgument("z-TV needs a volume with depth >= 2")
    return float(np.sum(np.abs(np.diff(x, axis=0))) / x.size)


@dataclass(frozen=True)
class MetricReport:
    psnr: float
    psnr_axial: float
    psnr_sagittal: float
    psnr_coronal: float
    ssim_axial: float
    ssim_sagittal: float
    ssim_coronal: float
    ztv: float

    @classmethod
    def columns(cls):
        return tuple(f.name for f in fields(cls))

    def as_row(self):
        return dict(zip(self.columns(), astuple(self)))


def evaluate(x, ref, data_range=DATA_RANGE):
    """
    Full MetricReport of ``x`` against ``ref``. Planes too small for the
    SSIM window report NaN; a single-slice volume reports z-TV NaN.
    """
    x, ref = _pair(x, ref)
    values = {"psnr": psnr(x, ref, data_range)}
    for plane in PLANES:
        values["psnr_" + plane] = _plane_psnr(x, ref, plane, data_range)
        try:
            values["ssim_" + plane] = ssim_plane(x, ref, plane, data_range)
        except InvalidArgument as e:
            logger.warning("No SSIM for %s: %s", plane, e)
            values["ssim_" + plane] = math.nan
    values["ztv"] = ztv(x) if x.shape[0] > 1 else math.nan
    return MetricReport(**values)


def write_report(filename, reports, extra=None):
    """
    One CSV row per report. ``extra`` is a list of leading column names
    and each report is then a ``(mapping, MetricReport)`` pair.
    """
    extra = list(extra or [])
    columns = extra + list(MetricReport.columns())
    rows = []
    for report in reports:
        if extra:
            leading, report = report
            row = dict(leading)
        else:
            row = {}
        row.update(report.as_row())
        rows.append(row)
    write_rows(filename, columns, rows)
