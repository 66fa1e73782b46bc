"""Utility modules for tabembed."""

from tabembed.utils.validators import ConfigValidator, SchemaValidator
from tabembed.utils.formatters import OutputFormatter

__all__ = ["ConfigValidator", "SchemaValidator", "OutputFormatter"]
