"""Temporal-blocking stencil toolkit: parse, model, tune, generate and verify."""

from .errors import TbStencilError
from .geometry import BlockingConfig, GridShape
from .ir import StencilSpec, classify

__all__ = ["BlockingConfig", "GridShape", "StencilSpec", "TbStencilError", "classify"]
