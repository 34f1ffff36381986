"""Hot-loop kernels with a compiled backend and a numpy fallback.

The compiled extension is used when it imports; set
``HOVERDEPTH_PURE_PYTHON=1`` to force the fallback.
"""

import os
from types import ModuleType

import numpy as np

from . import _pykernels

_compiled: ModuleType | None
try:
    from . import _ckernels as _compiled
except ImportError:  # extension not built
    _compiled = None

if _compiled is not None and not os.environ.get("HOVERDEPTH_PURE_PYTHON"):
    _impl = _compiled
    BACKEND = "cython"
else:
    _impl = _pykernels
    BACKEND = "python"


def available_backends() -> list[str]:
    return ["python"] + (["cython"] if _compiled is not None else [])


def backend_module(name: str | None = None) -> ModuleType:
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython" and _compiled is not None:
        return _compiled
    raise ValueError(f"kernel backend {name!r} is not available")


def _as_hwc(img):
    a = np.ascontiguousarray(img, dtype=np.float64)
    return a[:, :, None] if a.ndim == 2 else a


def bilateral_filter(img, sigma_s, sigma_r, radius, backend=None):
    a = _as_hwc(img)
    out = backend_module(backend).bilateral_filter(a, float(sigma_s), float(sigma_r), int(radius))
    return out[:, :, 0] if np.ndim(img) == 2 else out


def region_grow(img, threshold, backend=None):
    return backend_module(backend).region_grow(_as_hwc(img), float(threshold))


def photometric_costs(images, grads, homographies, weights, xs, ys, backend=None):
    """Per-candidate summed weighted variance; see ``_pykernels.photometric_costs``."""
    return backend_module(backend).photometric_costs(
        np.ascontiguousarray(images, dtype=np.float64),
        np.ascontiguousarray(grads, dtype=np.float64),
        np.ascontiguousarray(homographies, dtype=np.float64),
        np.ascontiguousarray(weights, dtype=np.float64),
        np.ascontiguousarray(xs, dtype=np.float64),
        np.ascontiguousarray(ys, dtype=np.float64),
    )
