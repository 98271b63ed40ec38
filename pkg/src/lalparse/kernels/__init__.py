"""Hot kernels, compiled when available.

``cky_tables`` comes from the Cython extension unless it failed to build or
``LALPARSE_PURE_PYTHON=1`` is set, in which case the NumPy fallback is used.
Both produce bit-identical tables.
"""

import os

from . import _cky_py

python_cky_tables = _cky_py.cky_tables

try:
    from ._cky_ext import cky_tables as compiled_cky_tables
except ImportError:  # extension not built
    compiled_cky_tables = None

if compiled_cky_tables is not None and os.environ.get("LALPARSE_PURE_PYTHON", "") not in ("1", "true"):
    cky_tables = compiled_cky_tables
    BACKEND = "cython"
else:
    cky_tables = python_cky_tables
    BACKEND = "python"

__all__ = ["cky_tables", "python_cky_tables", "compiled_cky_tables", "BACKEND"]
