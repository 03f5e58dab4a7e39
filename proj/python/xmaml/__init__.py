"""X-MAML meta-learning engine (C++ core)."""

from ._xmaml import *  # noqa: F401,F403
from ._xmaml import __doc__  # noqa: F401

__version__ = "0.1.0"
