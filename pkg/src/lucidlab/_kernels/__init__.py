"""Rasterizer backend selection.

Prefers the compiled extension; falls back to the numpy implementation when
the extension was not built.  LUCIDLAB_RASTER=numpy forces the fallback
(useful for benchmarking and backend-equivalence tests).
"""

import os

from lucidlab._kernels import raster_numpy

if os.environ.get("LUCIDLAB_RASTER", "").lower() == "numpy":
    fill_triangles = raster_numpy.fill_triangles
    BACKEND = "numpy"
else:
    try:
        from lucidlab._kernels._rasterize import fill_triangles

        BACKEND = "compiled"
    except ImportError:
        fill_triangles = raster_numpy.fill_triangles
        BACKEND = "numpy"

__all__ = ["fill_triangles", "BACKEND", "raster_numpy"]
