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
diffblend - 3D CT reconstruction by blending diffusion scores of slice
patches.
"""
import os
from importlib.metadata import version, PackageNotFoundError

from appdirs import AppDirs

__author__ = 'diffblend contributors'

# Bundled configs and phantom specs live next to the package
module_path = os.path.dirname(__file__)
# User overrides of the distribution defaults
config_path = AppDirs("diffblend", "diffblend").user_config_dir

try:
    VERSION = version("diffblend")
except PackageNotFoundError:
    try:
        from .version import __version__ as VERSION
    except ImportError:
        VERSION = "dev"
