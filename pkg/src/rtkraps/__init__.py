"""Tightly coupled RTK-GNSS aided INS with risk-averse measurement selection."""

__version__ = "0.1.0"

from .kernels import backend  # noqa: F401
