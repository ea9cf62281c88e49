"""Optical-flow-aided 6D object pose and velocity tracking.

The heavy lifting lives in the compiled extension; this package re-exports
its public surface.
"""

from ._core import *  # noqa: F401,F403
from ._core import __doc__  # noqa: F401

__version__ = "0.1.0"
