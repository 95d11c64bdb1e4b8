"""Iterative MCQ explanation enhancement toolkit."""

from ._iterex import *  # noqa: F401,F403
from ._iterex import __doc__  # noqa: F401
