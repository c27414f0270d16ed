"""Pick the kernel implementation at import time.

The compiled ``_ckernels`` extension is preferred.  Set
``KGFUSE_PURE_PYTHON=1`` to force the numpy fallback.
"""

import logging
import os

from . import _pykernels

log = logging.getLogger(__name__)

kernels = _pykernels
if not os.environ.get("KGFUSE_PURE_PYTHON"):
    try:
        from . import _ckernels as kernels  # type: ignore[no-redef]
    except ImportError:
        log.debug("compiled kernels unavailable, using numpy fallback")

BACKEND = kernels.NAME
