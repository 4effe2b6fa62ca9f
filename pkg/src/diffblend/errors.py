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
Exceptions raised by the library. Each carries the exit code the command
line reports for it.
"""

__author__ = 'diffblend contributors'
__all__ = ['DiffBlendError', 'InvalidArgument', 'ConfigError',
           'InputMismatch', 'NumericFailure', 'TrainingFailure',
           'BackendError', 'VerificationFailure']


class DiffBlendError(Exception):
    """Base class for all library errors"""
    exit_code = 1


class InvalidArgument(DiffBlendError, ValueError):
    """A precondition of an operation was violated"""
    exit_code = 2


class ConfigError(DiffBlendError):
    """Unknown or malformed configuration key"""
    exit_code = 2

    def __init__(self, key, message=None):
        self.key = key
        super().__init__(message or "Invalid config key [%s]" % key)


class InputMismatch(DiffBlendError):
    """Inputs that do not fit together, e.g. a sinogram and a geometry"""
    exit_code = 3

    def __init__(self, what, differences):
        self.differences = list(differences)
        lines = ["%s: %s expected %s, got %s" % (what, field, expected, actual)
                 for field, expected, actual in self.differences]
        super().__init__("\n".join(lines) or what)


class NumericFailure(DiffBlendError):
    """Non-finite values or a singular system"""
    exit_code = 4

    def __init__(self, message, iteration=None):
        self.iteration = iteration
        if iteration is not None:
            message = "%s (iteration %d)" % (message, iteration)
        super().__init__(message)


class TrainingFailure(NumericFailure):
    """Training diverged"""


class BackendError(NumericFailure):
    """A patch score could not be evaluated"""

    def __init__(self, message, slice_set, iteration=None):
        self.slice_set = slice_set
        super().__init__("%s for slices %s" % (message, slice_set),
                         iteration)


class VerificationFailure(DiffBlendError):
    """An analytic verification suite failed"""
    exit_code = 1

    def __init__(self, invariant, detail=""):
        self.invariant = invariant
        super().__init__("%s failed %s" % (invariant, detail))
