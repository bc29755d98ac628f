"""Python bindings for the embedsom core: k-NN, projection, trainers, I/O and wire protocol."""

from ._core import *  # noqa: F401,F403
from ._core import EmbedsomError, __version__

__all__ = [name for name in dir() if not name.startswith("_")]
