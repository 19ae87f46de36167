"""Seven-level NV centre rate-equation simulator and Rabi analysis."""

from ._core import *  # noqa: F401,F403
from ._core import InputError, NumericalError  # noqa: F401

__version__ = "0.1.0"
