"""Command-line interface for tabembed."""

from tabembed.cli.commands import cli

__all__ = ["cli"]
