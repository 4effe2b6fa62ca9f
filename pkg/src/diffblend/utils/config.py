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
Gives access to the distribution defaults and parses run config files.

Run config files are flat ``key = value`` text with ``#`` comments and
dotted section prefixes::

    seed = 3
    recon.eta = 0.85
    geometry.views = 8

Every key must exist in the distribution defaults; values are coerced to
the type of the default.
"""
import json
import logging
import os

from .singleton import Singleton
from diffblend.errors import ConfigError

import diffblend

__author__ = 'diffblend contributors'
__all__ = ['Config', 'RunConfig']

logger = logging.getLogger(__name__)


class Config(metaclass=Singleton):
    """ Singleton class for accessing the distribution defaults """

    def __init__(self):
        """ Initializes the singleton and reads the config files """
        self._dist_config = os.path.join(diffblend.module_path, "configs",
                                         "config.json")
        self._config = os.path.join(diffblend.config_path, "config.json")

        [self._readonly, self._data] = self._read_distfile()

        user_config = self._read_config()
        if user_config:
            unknown = set(user_config) - set(self._data)
            if unknown:
                raise ConfigError(sorted(unknown)[0])
            self._data.update(user_config)

    def _read_distfile(self):
        """ Read the distribution config file containing the defaults """
        with open(self._dist_config, 'r') as f:
            data = json.load(f)
        logger.debug("Dist config read from %s", self._dist_config)

        return [data["read-only"], data["writable"]]

    def get(self, key):
        """ Get the value of a config parameter """
        if key in self._data:
            return self._data[key]
        elif key in self._readonly:
            return self._readonly[key]
        raise ConfigError(key, "Could not get the parameter [%s]" % key)

    def defaults(self):
        """ Copy of all writable defaults """
        return dict(self._data)

    def _read_config(self):
        """ Read the user config from file """
        try:
            with open(self._config) as json_data:
                data = json.load(json_data)
            logger.info("Config file read from [%s]", self._config)
        except (OSError, json.JSONDecodeError):
            return None

        return data


def _coerce(key, text, default):
    """Convert a config value to the type of its default"""
    try:
        if isinstance(default, bool):
            lowered = text.strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(key, "Invalid value [%s] for config key [%s]"
                          % (text, key))
    return text.strip()


class RunConfig():
    """Resolved configuration of one command invocation"""

    def __init__(self, values=None):
        self._data = Config().defaults()
        for key, value in (values or {}).items():
            self.set(key, value)

    @classmethod
    def load(cls, path):
        """Parse a ``key = value`` file on top of the defaults"""
        config = cls()
        with open(path, 'r') as f:
            for lineno, line in enumerate(f, start=1):
                line = line.split('#', 1)[0].strip()
                if not line:
                    continue
                if '=' not in line:
                    raise ConfigError(line, "Line %d of %s is not key = value"
                                      % (lineno, path))
                key, value = (part.strip() for part in line.split('=', 1))
                config.set(key, value)
        logger.info("Run config read from [%s]", path)
        return config

    def set(self, key, value):
        """Set a key, coercing strings to the default's type"""
        if key not in self._data:
            raise ConfigError(key, "Unknown config key [%s]" % key)
        default = self._data[key]
        if isinstance(value, str):
            value = _coerce(key, value, default)
        elif isinstance(default, float) and isinstance(value, int) \
                and not isinstance(value, bool):
            value = float(value)
        elif type(value) is not type(default):
            raise ConfigError(key, "Invalid value [%r] for config key [%s]"
                              % (value, key))
        self._data[key] = value

    def copy(self):
        clone = RunConfig()
        clone._data = dict(self._data)
        return clone

    def get(self, key):
        if key not in self._data:
            return Config().get(key)
        return self._data[key]

    def __getitem__(self, key):
        return self.get(key)

    def section(self, prefix):
        """All keys under ``prefix.`` with the prefix stripped"""
        start = prefix + "."
        return {k[len(start):]: v for k, v in self._data.items()
                if k.startswith(start)}

    def echo(self):
        """The resolved config as ``key = value`` lines"""
        return "\n".join("%s = %s" % (k, self._data[k])
                         for k in sorted(self._data))
