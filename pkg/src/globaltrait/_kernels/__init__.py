"""Hot numerical kernels with a compiled core and a numpy fallback.

The compiled extension is used when it was built and importable, unless
``GLOBALTRAIT_PURE_PYTHON=1`` is set. ``BACKEND`` names the active one.
"""

import os

from . import _fallback

_compiled = None
if os.environ.get("GLOBALTRAIT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _compiled
    except ImportError:
        _compiled = None

_impl = _compiled if _compiled is not None else _fallback
BACKEND = "cython" if _compiled is not None else "numpy"

conv_maxpool_forward = _impl.conv_maxpool_forward
conv_maxpool_backward = _impl.conv_maxpool_backward
tsne_gradient = _impl.tsne_gradient


def compiled_available():
    return _compiled is not None


def backends():
    """Mapping of available backend name -> kernel module."""
    out = {"numpy": _fallback}
    if _compiled is not None:
        out["cython"] = _compiled
    return out
