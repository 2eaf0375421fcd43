"""Hot-loop kernels with a compiled core and a pure-Python fallback.

The compiled module is preferred when it imported cleanly; set the
environment variable ``SPECBENCH_PURE_PYTHON=1`` to force the fallback
(useful for the cross-implementation tests and the kernel benchmark).
"""

import os

from . import _pure

if os.environ.get("SPECBENCH_PURE_PYTHON") == "1":
    _impl = _pure
else:
    try:
        from . import _speed as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _pure

IMPLEMENTATION = _impl.IMPLEMENTATION
maximin_order = _impl.maximin_order
asls_baselines = _impl.asls_baselines

__all__ = ["IMPLEMENTATION", "maximin_order", "asls_baselines"]
