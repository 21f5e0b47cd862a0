"""Heteroscedastic seismic demand models (C++ core)."""

from ._core import *  # noqa: F401,F403
from ._core import HetdemandError, __version__, run_cli

__all__ = [name for name in dir() if not name.startswith("_")] + ["__version__"]
