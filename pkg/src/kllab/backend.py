"""Select the panel-kernel implementation at import time.

The compiled extension is used when it is importable; setting the
environment variable ``KL_PURE_PYTHON=1`` forces the numpy fallback.
"""

import logging
import os

from . import _panels_py

log = logging.getLogger(__name__)

NAME = "numpy"
impl = _panels_py

if not os.environ.get("KL_PURE_PYTHON"):
    try:
        from . import _panels as _compiled
    except ImportError:  # pragma: no cover - depends on the build
        log.debug("compiled panel kernels unavailable, using numpy fallback")
    else:
        impl = _compiled
        NAME = "cython"

legendre_logs = impl.legendre_logs
log_weights = impl.log_weights
potential_matrix = impl.potential_matrix
charge_field = impl.charge_field
grade_breakpoints = impl.grade_breakpoints

__all__ = ["NAME", "legendre_logs", "log_weights", "potential_matrix", "charge_field", "grade_breakpoints",
           "_panels_py"]
