"""Python bindings for the hypergraph transformer core.

The compiled extension lives next to this file after an installed build.
For in-tree use, point HYPERSKEL_BUILD_DIR at a cmake build directory that
was configured with -DHYPERSKEL_BUILD_PYTHON=ON.
"""

import os
import sys

try:
    from hyperskel._core import *  # noqa: F401,F403
except ImportError:
    _build = os.environ.get("HYPERSKEL_BUILD_DIR")
    if not _build:
        raise
    sys.path.insert(0, _build)
    from _core import *  # noqa: F401,F403
