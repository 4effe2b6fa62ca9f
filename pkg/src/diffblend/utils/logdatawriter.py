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
Used to write loss histories, per-step diagnostics and metric reports to
CSV files.
"""

import logging
import math
import os

__author__ = 'diffblend contributors'
__all__ = ['CsvWriter', 'write_rows']

logger = logging.getLogger(__name__)


def _format(value):
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    return str(value)


class CsvWriter():
    """Create a writer for a fixed set of columns"""

    def __init__(self, filename, columns):
        """Initialize the writer"""
        self._filename = filename
        self._columns = list(columns)
        self._file = None
        self._header_written = False

    def _write_header(self):
        """Write the header to the file"""
        if not self._header_written:
            self._file.write(",".join(self._columns) + '\n')
            self._header_written = True

    def write(self, row):
        """Append one row, given as a mapping from column to value"""
        if self._file:
            missing = [c for c in self._columns if c not in row]
            if missing:
                raise KeyError("Row is missing columns %s" % missing)
            self._file.write(",".join(_format(row[c])
                                      for c in self._columns) + '\n')

    def writing(self):
        """Return True if the file is open and we are using it,
        otherwise false"""
        return True if self._file else False

    def start(self):
        """Start writing to file"""
        directory = os.path.dirname(self._filename)
        if directory:
            os.makedirs(directory, exist_ok=True)

        if not self._file:
            self._file = open(self._filename, 'w')
            self._write_header()
            logger.debug("Started writing [%s]", self._filename)

    def stop(self):
        """Stop writing to file"""
        if self._file:
            self._file.close()
            self._file = None
            self._header_written = False
            logger.info("Wrote [%s]", self._filename)

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.stop()


def write_rows(filename, columns, rows):
    """Write a complete CSV file in one go"""
    with CsvWriter(filename, columns) as writer:
        for row in rows:
            writer.write(row)
